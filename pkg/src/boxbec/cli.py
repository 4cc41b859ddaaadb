"""Batch command-line front end.

Every subcommand reads one INI-style configuration (sections of ``key = value``)
and writes plain-text files with 17 significant digits into ``--out``.

Exit codes: 0 ok, 2 domain/config error, 3 certification failure,
4 steering failure.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import json
import math
import operator
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .discretization import SineGrid, StateField
from .elliptic import DomainError
from .groundstate import (
    Regime,
    build_ground_state,
    kappa_from_mu,
    mass_and_convexity,
    mu_from_kappa,
)

__all__ = [
    "RunConfig",
    "ConfigError",
    "CertificationFailure",
    "COMMANDS",
    "DEFAULTS",
    "EXIT_OK",
    "EXIT_DOMAIN",
    "EXIT_CERT",
    "EXIT_STEER",
    "build_parser",
    "load_config",
    "main",
]

EXIT_OK, EXIT_DOMAIN, EXIT_CERT, EXIT_STEER = 0, 2, 3, 4

DEFAULTS = {
    "model": {"regime": "focusing", "hbar": "1", "m": "1"},
    "numerics": {"M": "256", "T": "1", "dt": "5e-4", "n_keep": "", "n_points": "1025"},
    "certify": {"n_max": "12", "margin": "10"},
    "scan": {"mu_min": "", "mu_max": "", "steps": "20", "n_min": "1", "n_max": "4",
             "width": "1e-6", "M": "128"},
    "target": {"family": "modal", "modes": "1-6", "size": "1e-3", "coeffs": "",
               "file": "", "dmu": "1e-3", "c0": "0"},
    "newton": {"tol": "1e-5", "max_iter": "8", "n_ctrl": "", "window": "sin2",
               "scheme": "etdrk4"},
    "simulate": {"control": "zero", "amplitude": "0", "control_file": "",
                 "snapshots": "5", "scheme": "strang"},
    "physical": {"control_file": "", "n_tau": "4001", "snapshots": "5"},
}


class ConfigError(ValueError):
    pass


class CertificationFailure(RuntimeError):
    pass


def _fmt(x) -> str:
    return f"{float(x):.17g}"


@dataclass
class RunConfig:
    regime: Regime
    mu: float | None
    kappa: float | None
    hbar: float
    m: float
    M: int
    T: float
    dt: float
    n_keep: int | None
    n_points: int
    seed: int
    sections: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser, seed: int = 0) -> "RunConfig":
        sec = {name: dict(DEFAULTS[name]) for name in DEFAULTS}
        for name in cp.sections():
            sec.setdefault(name, {}).update(cp[name])
        model, num = sec["model"], sec["numerics"]
        mu = model.get("mu", "").strip()
        kappa = model.get("kappa", "").strip()
        if bool(mu) == bool(kappa):
            raise ConfigError("exactly one of mu / kappa must be given")
        try:
            regime = Regime.parse(model["regime"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(
            regime=regime,
            mu=_parse_number(mu) if mu else None,
            kappa=_parse_number(kappa) if kappa else None,
            hbar=float(model["hbar"]),
            m=float(model["m"]),
            M=int(num["M"]),
            T=float(num["T"]),
            dt=float(num["dt"]),
            n_keep=int(num["n_keep"]) if num["n_keep"].strip() else None,
            n_points=int(num["n_points"]),
            seed=seed,
            sections=sec,
        )
        if cfg.M <= 0 or cfg.n_points <= 0 or cfg.dt <= 0 or cfg.hbar <= 0 or cfg.m <= 0:
            raise ConfigError("sizes and physical constants must be positive")
        if cfg.T <= 0:
            raise ConfigError("T must be positive")
        return cfg

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key].strip()

    def resolve_mu(self) -> float:
        if self.mu is not None:
            return self.mu
        return mu_from_kappa(self.regime, self.kappa, self.hbar, self.m, self.n_points)


_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _parse_number(text: str) -> float:
    """Float, or an arithmetic expression in ``pi`` (e.g. ``-pi**2 + 0.5``)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        raise ConfigError(f"cannot parse number {text!r}")

    try:
        return float(ev(ast.parse(text, mode="eval")))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot parse number {text!r}: {exc}") from None


def _parse_modes(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_control(path: str, t, u) -> None:
    lines = ["# t u"] + [f"{_fmt(a)} {_fmt(b)}" for a, b in zip(t, u)]
    _write(path, "\n".join(lines) + "\n")


def _read_control(path: str):
    from .evolve import ControlSignal

    data = np.loadtxt(path, comments="#", ndmin=2)
    return ControlSignal(data[:, 0], data[:, 1])


# ---------------------------------------------------------------- commands

def cmd_ground(cfg: RunConfig, out: str) -> int:
    mu = cfg.resolve_mu()
    gs = build_ground_state(cfg.regime, mu, cfg.n_points)
    mass, slope = mass_and_convexity(gs)
    kappa = kappa_from_mu(gs, cfg.hbar, cfg.m)
    info = [
        f"regime {cfg.regime.value}",
        f"mu {_fmt(mu)}",
        f"k {_fmt(gs.k)}",
        f"mass {_fmt(mass)}",
        f"slope {_fmt(slope)}",
        f"kappa {_fmt(kappa)}",
        f"hbar {_fmt(cfg.hbar)}",
        f"m {_fmt(cfg.m)}",
        f"dphi0 {_fmt(gs.dphi0)}",
        f"dphi1 {_fmt(gs.dphi1)}",
    ]
    _write(os.path.join(out, "ground_info.txt"), "\n".join(info) + "\n")
    rows = ["# x phi dmu_phi"] + [f"{_fmt(a)} {_fmt(b)} {_fmt(c)}"
                                  for a, b, c in zip(gs.x, gs.phi, gs.dmu_phi)]
    _write(os.path.join(out, "ground.txt"), "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: str) -> int:
    from .spectral import spectrum_at, spectrum_report

    mu = cfg.resolve_mu()
    _, sd = spectrum_at(cfg.regime, mu, M=cfg.M, n_keep=cfg.n_keep)
    text = spectrum_report(sd)
    if mu == cfg.regime.mu_min:
        text += "# endpoint table: n beta ((n+1)^2-1) pi^2 relative_error\n"
        for n, b in enumerate(sd.betas, start=1):
            ref = ((n + 1) ** 2 - 1) * math.pi**2
            text += f"# {n} {_fmt(b)} {_fmt(ref)} {_fmt(abs(b - ref) / ref)}\n"
    _write(os.path.join(out, "spectrum.txt"), text)
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: str, threads: int = 1) -> int:
    from .shooting import scan

    sc = cfg.sections["scan"]
    lo = _parse_number(sc["mu_min"]) if sc["mu_min"].strip() else cfg.regime.mu_min + 0.5
    hi = _parse_number(sc["mu_max"]) if sc["mu_max"].strip() else lo + 10.0
    grid = np.linspace(lo, hi, int(sc["steps"]))
    n_range = range(int(sc["n_min"]), int(sc["n_max"]) + 1)
    brackets = scan(cfg.regime, grid, n_range, M=int(sc["M"]), width=float(sc["width"]),
                    threads=threads)
    lines = [f"# regime {cfg.regime.value}", f"# mu_grid {_fmt(lo)} {_fmt(hi)} {len(grid)}",
             "# n mu_lo mu_hi"]
    lines += [f"{n} {_fmt(a)} {_fmt(b)}" for n, a, b in brackets]
    _write(os.path.join(out, "scan.txt"), "\n".join(lines) + "\n")
    return EXIT_OK


def _certificate(cfg: RunConfig, mu: float, n_max: int, out: str):
    from .shooting import certificate_text, certify

    cert = certify(cfg.regime, mu, n_max, M=cfg.M,
                   margin_threshold=float(cfg.get("certify", "margin")))
    _write(os.path.join(out, "certificate.txt"), certificate_text(cert))
    if not cert.certified:
        raise CertificationFailure(f"certificate status {cert.status}")
    return cert


def cmd_certify(cfg: RunConfig, out: str) -> int:
    _certificate(cfg, cfg.resolve_mu(), int(cfg.get("certify", "n_max")), out)
    return EXIT_OK


def _setup_control(cfg: RunConfig, out: str):
    from .control import N_CTRL_MAX
    from .spectral import spectrum_at

    mu = cfg.resolve_mu()
    gs, sd = spectrum_at(cfg.regime, mu, M=cfg.M, n_keep=cfg.n_keep)
    nc = cfg.get("newton", "n_ctrl")
    n_ctrl = int(nc) if nc else min(sd.n_keep, N_CTRL_MAX)
    cert = _certificate(cfg, mu, max(n_ctrl, int(cfg.get("certify", "n_max"))), out)
    return mu, gs, sd, n_ctrl, cert


def _target(cfg: RunConfig, sd, gs, grid: SineGrid):
    """Build the target state for ``synth``/``steer`` from the [target] section."""
    from .control import TargetState, modal_target, sphere_target

    tg = cfg.sections["target"]
    fam = tg["family"].strip()
    T = cfg.T
    chi = gs.evaluate(grid.x) * np.exp(1j * cfg.regime.sign * sd.mu * T)
    if fam == "zero":
        return TargetState(StateField(grid, chi), sd.mu, T), np.zeros(grid.M, complex)
    if fam == "modal":
        modes = _parse_modes(tg["modes"])
        if tg["coeffs"].strip():
            vals = [complex(v.replace(" ", "")) for v in tg["coeffs"].split(",")]
        else:
            rng = np.random.default_rng(cfg.seed)
            vals = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
        coeffs = np.zeros(max(modes), complex)
        coeffs[np.array(modes) - 1] = vals
        size = float(tg["size"])
        st = sphere_target(sd, gs, T, coeffs, size, grid)
        lin = modal_target(sd, T, coeffs, float(tg["c0"]), grid)
        return st, lin.values
    if fam == "nearby":
        g2 = build_ground_state(cfg.regime, sd.mu + float(tg["dmu"]), cfg.n_points)
        p = g2.evaluate(grid.x) * np.exp(1j * cfg.regime.sign * g2.mu * T)
        p *= math.sqrt(np.sum(gs.evaluate(grid.x) ** 2) / np.sum(np.abs(p) ** 2))
        return TargetState(StateField(grid, p), sd.mu, T), p - chi
    if fam == "file":
        data = np.loadtxt(tg["file"], comments="#", ndmin=2)
        a = np.zeros(grid.M, complex)
        n = min(grid.M, len(data))
        a[:n] = data[:n, 0] + 1j * data[:n, 1]
        pert = StateField(grid, a, "coefficient").points()
        psi = chi + pert
        psi *= math.sqrt(np.sum(gs.evaluate(grid.x) ** 2) / np.sum(np.abs(psi) ** 2))
        return TargetState(StateField(grid, psi), sd.mu, T), pert
    raise ConfigError(f"unknown target family {fam!r}")


def cmd_synth(cfg: RunConfig, out: str) -> int:
    """Linearized control for the target perturbation (modal family: exact modes)."""
    from .control import orthogonality_defect, synthesize_linear_control

    mu, gs, sd, n_ctrl, cert = _setup_control(cfg, out)
    grid = SineGrid(sd.M)
    _, pert = _target(cfg, sd, gs, grid)
    fam = cfg.get("target", "family")
    if fam == "modal":
        # linear target: the modal perturbation itself, scaled to the requested size
        from .discretization import h_norm

        scale = h_norm(pert, 3)
        if scale > 0:
            pert = pert * (float(cfg.get("target", "size")) * h_norm(gs.evaluate(grid.x), 3)
                           / scale)
    psi_f = StateField(grid, pert)
    defect = orthogonality_defect(psi_f, sd, cfg.T)
    if fam != "modal":
        # remove the orthogonality defect (tangent-space projection)
        chi = gs.evaluate(grid.x) * np.exp(1j * cfg.regime.sign * mu * cfg.T)
        pert = pert - (np.real(np.vdot(chi, pert)) / np.real(np.vdot(chi, chi))) * chi
        psi_f = StateField(grid, pert)
    n_steps = int(round(cfg.T / cfg.dt))
    lc = synthesize_linear_control(psi_f, sd, cfg.T, cert, n_ctrl,
                                   window=cfg.get("newton", "window"))
    sig = lc.signal(n_steps)
    _write_control(os.path.join(out, "control.txt"), sig.t, sig.u)
    adm = sig.admissibility()
    info = [f"mu {_fmt(mu)}", f"T {_fmt(cfg.T)}", f"n_ctrl {n_ctrl}",
            f"orthogonality_defect {_fmt(defect)}", f"d0 {_fmt(lc.d0)}",
            f"u0 {_fmt(adm['u0'])}", f"uT {_fmt(adm['uT'])}", f"mean {_fmt(adm['mean'])}"]
    info += [f"d {n} {_fmt(d.real)} {_fmt(d.imag)}" for n, d in enumerate(lc.d, start=1)]
    _write(os.path.join(out, "synth_info.txt"), "\n".join(info) + "\n")
    return EXIT_OK


def cmd_steer(cfg: RunConfig, out: str) -> int:
    from .control import SteeringError, iteration_log_text, newton_steer

    mu, gs, sd, n_ctrl, cert = _setup_control(cfg, out)
    grid = SineGrid(sd.M)
    target, _ = _target(cfg, sd, gs, grid)
    nw = cfg.sections["newton"]
    log_path = os.path.join(out, "steer_log.txt")
    try:
        res = newton_steer(target, sd, gs, tol=float(nw["tol"]), max_iter=int(nw["max_iter"]),
                           dt=cfg.dt, certificate=cert, n_ctrl=n_ctrl,
                           scheme=nw["scheme"].strip(), window=nw["window"].strip())
    except SteeringError as exc:
        _write(log_path, iteration_log_text(exc.history) + f"# failed: {exc}\n")
        raise
    _write(log_path, iteration_log_text(res.history) + "# converged\n")
    _write_control(os.path.join(out, "control.txt"), res.control.t, res.control.u)
    return EXIT_OK


def _snapshot_times(T: float, dt: float, count: int):
    n_steps = int(round(T / dt))
    count = max(2, count)
    ks = np.unique(np.round(np.linspace(0, n_steps, count)).astype(int))
    return [k * dt for k in ks]


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    from .evolve import ControlSignal, export_trajectory, solve_psi

    mu = cfg.resolve_mu()
    gs = build_ground_state(cfg.regime, mu, cfg.n_points)
    sm = cfg.sections["simulate"]
    scheme = sm["scheme"].strip()
    if sm["control_file"].strip():
        u = _read_control(sm["control_file"].strip())
    else:
        n = int(round(cfg.T / cfg.dt)) * (2 if scheme == "etdrk4" else 1)
        t = np.linspace(0.0, cfg.T, n + 1)
        kind = sm["control"].strip()
        a = float(sm["amplitude"])
        if kind == "zero":
            u = ControlSignal.zero(cfg.T, n)
        elif kind == "sine":
            w = 2 * math.pi / cfg.T
            u = ControlSignal(t, a * np.sin(w * t), a * w * np.cos(w * t),
                              a * (1 - np.cos(w * t)) / w)
        else:
            raise ConfigError(f"unknown control {kind!r}")
    grid = SineGrid(cfg.M)
    psi0 = StateField(grid, gs.evaluate(grid.x) + 0j)
    step = u.dt * (2 if scheme == "etdrk4" else 1)
    times = _snapshot_times(u.T, step, int(sm["snapshots"]))
    res = solve_psi(psi0, u, cfg.regime, snapshot_times=times, scheme=scheme)
    export_trajectory(res, out, cfg.regime, mu)
    return EXIT_OK


def cmd_physical(cfg: RunConfig, out: str) -> int:
    from .evolve import solve_psi
    from .physmap import control_to_length, export_physical, physical_wavefunction

    ph = cfg.sections["physical"]
    if not ph["control_file"].strip():
        raise ConfigError("[physical] control_file is required")
    u = _read_control(ph["control_file"].strip())
    mu = cfg.resolve_mu()
    gs = build_ground_state(cfg.regime, mu, cfg.n_points)
    kappa = cfg.kappa if cfg.kappa is not None else kappa_from_mu(gs, cfg.hbar, cfg.m)
    lt = control_to_length(u, cfg.hbar, cfg.m, n_tau=int(ph["n_tau"]))
    grid = SineGrid(cfg.M)
    psi0 = StateField(grid, gs.evaluate(grid.x) + 0j)
    times = _snapshot_times(u.T, u.dt, int(ph["snapshots"]))
    res = solve_psi(psi0, u, cfg.regime, snapshot_times=times)
    snaps = physical_wavefunction(res, lt, kappa, gs)
    export_physical(snaps, lt, kappa, out)
    return EXIT_OK


COMMANDS = {
    "ground": cmd_ground,
    "spectrum": cmd_spectrum,
    "scan": cmd_scan,
    "certify": cmd_certify,
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "steer": cmd_steer,
    "physical": cmd_physical,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxbec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a configuration entry")
    return p


def load_config(path: str, overrides=(), seed: int = 0) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path!r}")
    for item in overrides:
        key, _, value = item.partition("=")
        sec, _, opt = key.partition(".")
        if not opt:
            raise ConfigError(f"override {item!r} must be SECTION.KEY=VALUE")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp[sec][opt] = value
    return RunConfig.from_parser(cp, seed)


def main(argv=None) -> int:
    from .control import CertificateRequired, ContractError as ControlContractError
    from .control import SteeringError

    args = build_parser().parse_args(argv)
    try:
        try:
            cfg = load_config(args.config, args.set, args.seed)
        except ValueError as exc:  # malformed numbers in the configuration
            raise ConfigError(str(exc)) from None
        os.makedirs(args.out, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command == "scan":
            code = fn(cfg, args.out, threads=args.threads)
        else:
            code = fn(cfg, args.out)
    except (DomainError, ConfigError, ControlContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (CertificationFailure, CertificateRequired) as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except SteeringError as exc:
        print(f"steering failure: {exc}", file=sys.stderr)
        return EXIT_STEER
    return code


if __name__ == "__main__":
    sys.exit(main())
