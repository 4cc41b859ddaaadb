"""End-to-end run: certify, steer, then map the control to a moving wall.

Usage::

    python demos/run_demo.py [outdir]

Each stage calls the ``boxbec`` command line in-process, so the files left in
``outdir`` are exactly what ``boxbec <command> --config demos/steer_demo.ini``
would write.
"""

import json
import os
import sys

import numpy as np

from boxbec.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "steer_demo.ini")


def stage(cmd, out, *extra):
    code = main([cmd, "--config", CONFIG, "--out", out, "--seed", "1", *extra])
    print(f"boxbec {cmd}: exit {code}")
    if code:
        sys.exit(code)


def run(outdir):
    cert_dir = os.path.join(outdir, "certify")
    stage("certify", cert_dir)
    with open(os.path.join(cert_dir, "certificate.txt")) as fh:
        status = [l for l in fh if l.startswith(("status", "min_margin"))]
    print("  " + "  ".join(s.strip() for s in status))

    steer_dir = os.path.join(outdir, "steer")
    stage("steer", steer_dir)
    log = np.atleast_2d(np.loadtxt(os.path.join(steer_dir, "steer_log.txt")))
    for it, step, res, norm, _ in log:
        print(f"  iter {int(it)}  step {step:5.3f}  residual {res:.3e}  |u| {norm:.3e}")

    # the steering control drives the box wall; the wall must come back to length 1
    phys_dir = os.path.join(outdir, "physical")
    control = os.path.join(steer_dir, "control.txt")
    stage("physical", phys_dir, "--set", f"physical.control_file={control}")
    with open(os.path.join(phys_dir, "phys_manifest.json")) as fh:
        man = json.load(fh)
    print(f"  tau* = {man['tau_star']:.6f}  L(0) = {man['L0']:.12f}  "
          f"L(tau*) = {man['L_end']:.12f}")
    L = np.loadtxt(os.path.join(phys_dir, man["length_file"]))[:, 2]
    print(f"  wall excursion: L in [{L.min():.6f}, {L.max():.6f}]")


if __name__ == "__main__":
    run(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
