"""Command-line entry point.

Every run writes into its own directory (``--out`` or
``runs/<command>-<config digest>``) together with ``manifest.cfg``, the fully
resolved configuration; ``--config manifest.cfg`` reproduces the run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .dynamics import evolve, initial_state
from .errors import ConfigError, InsufficientBoundStates, NoFeatureError, PropagationError, StepSizeError, SymmetryError
from .fourmode import assemble, crossing_frequencies, floquet_scan, resonance_frequencies
from .grid import write_potential_csv
from .io import write_csv, write_json
from .scanlab import (
    ScanResult,
    compare_backends,
    default_workers,
    frequency_scan,
    gamma_width_scan,
    nonlinear_scan,
    width_at_level,
)
from .stationary import four_mode_coefficients, gap_minimum, gap_scan, solve_stationary, spin_expectation

log = logging.getLogger("soctunnel")


SCHEMA = """\
output files (all CSV values in %.16e):
  states          energies.csv (i, j, energy); eigenstates.csv and modes.csv
                  (x, then re/im of both spinor components per state);
                  spins.csv (label, Sx, Sy, Sz); potential.csv (x, v_static, v_mod);
                  coefficients.json (Delta, delta1, delta2, v1, v2, u, w, E0,
                  structure_residual, tunnel_signs)
  coeffs          coefficients.json, overlap_matrix.csv
  evolve          trajectory.csv (t, norm, p_left, p_left_avg, Sx, Sy, Sz,
                  |c1m|^2, |c1p|^2, |c2m|^2, |c2p|^2, residual); summary.json
  floquet         floquet.csv (omega, lambda1..lambda4, unitarity_residual)
  crossings       crossings.csv (omega, branch_a, branch_b, class)
  scan            points.csv (omega, p_left_avg); features.json
                  (type, center, width, level, ...)
  gamma-scan      gamma_widths.csv (gamma, width)
  nonlinear-scan  points_g<g>.csv per g; features.json keyed by g
  compare         points_fourmode.csv, points_continuous.csv, comparison.json
  reproduce figN  preset bundles of the above in sub-directories
every run also writes manifest.cfg (resolved configuration).

environment: SOCTUNNEL_WORKERS sets the default worker count.
exit codes: 0 success, 1 configuration or numerical failure, 2 usage error.
"""

FLAG_KEYS = {
    "gamma": "trap.gamma",
    "f": "trap.f",
    "omega": "trap.omega_mod",
    "g": "propagation.g",
    "t_final": "propagation.t_final",
    "dt": "propagation.dt",
    "backend": "scan.backend",
    "omega_min": "scan.omega_min",
    "omega_max": "scan.omega_max",
    "omega_step": "scan.omega_step",
    "c1": "scan.c1",
    "c2": "scan.c2",
    "workers": "run.workers",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file (e.g. a manifest.cfg)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key, e.g. --set grid.n_points=1024")
    p.add_argument("--out", help="output directory (default runs/<command>-<digest>)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--f", type=float)
    p.add_argument("--omega", type=float, help="drive frequency for evolve")
    p.add_argument("--g", type=float, help="nonlinearity")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--backend", choices=["continuous", "fourmode"])
    p.add_argument("--omega-min", dest="omega_min", type=float)
    p.add_argument("--omega-max", dest="omega_max", type=float)
    p.add_argument("--omega-step", dest="omega_step", type=float)
    p.add_argument("--c1", type=complex, help="amplitude of |1-> in the input state")
    p.add_argument("--c2", type=complex, help="amplitude of |2-> in the input state")
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soctunnel",
        description="Tunneling suppression of a spin-orbit-coupled atom in a driven double well.",
        epilog=SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "states": "four bound states, well modes, spins and coefficients",
        "coeffs": "four-mode coefficients only",
        "evolve": "one continuous-model propagation",
        "floquet": "tracked Floquet phases over the scan frequencies",
        "crossings": "quasi-energy crossings over the scan range",
        "scan": "P_<(t_final) versus drive frequency",
        "gamma-scan": "rightmost peak width versus gamma",
        "nonlinear-scan": "continuous scans for several nonlinearities",
        "compare": "pair features of the two backends",
        "reproduce": "named preset run bundles fig1-fig5",
    }
    subs = {}
    for name, text in helps.items():
        subs[name] = sub.add_parser(name, help=text, description=text, epilog=SCHEMA,
                                    formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(subs[name])
    subs["crossings"].add_argument("--resolution", type=float, default=5e-4)
    subs["gamma-scan"].add_argument("--gammas", type=float, nargs="+", required=True)
    subs["nonlinear-scan"].add_argument("--gs", type=float, nargs="+", required=True)
    subs["reproduce"].add_argument("figure", choices=[f"fig{i}" for i in range(1, 6)])
    return parser


def resolve_config(args: argparse.Namespace) -> cfgmod.RunConfig:
    overrides: dict[str, object] = {}
    # environment < file < flags
    base = cfgmod.RunConfig(run=cfgmod.RunSettings(workers=default_workers()))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = cfgmod._parse_value(value)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    cfg = cfgmod.load(args.config, overrides, base)
    cfg.validate()
    return cfg


def _out_dir(args, cfg: cfgmod.RunConfig, command: str) -> Path:
    base = args.out or cfg.run.output_dir or str(Path("runs") / f"{command}-{cfg.digest()}")
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(path: Path, cfg: cfgmod.RunConfig, command: str) -> None:
    (path / "manifest.cfg").write_text(cfg.dumps({"command": command}))


def _write_scan(path: Path, scan: ScanResult, name: str = "points.csv") -> None:
    write_csv(path / name, ["omega", "p_left_avg"], [scan.omegas, scan.p])


def _features_payload(scan: ScanResult) -> list[dict]:
    out = []
    for f in scan.features:
        d = f.as_dict()
        d["type"] = d.pop("kind")
        d["t_final"] = scan.t_final
        out.append(d)
    return out


# -- subcommands ------------------------------------------------------------

def cmd_states(cfg, out: Path) -> None:
    sset = solve_stationary(cfg.trap, cfg.grid)
    grid = sset.grid
    coeffs = four_mode_coefficients(sset)
    write_csv(out / "energies.csv", ["i", "j", "energy"],
              [[s.i for s in sset.states], [s.j for s in sset.states], sset.energies])
    header, cols = ["x"], [grid.x]
    for s in sset.states:
        tag = f"e{s.i}{s.j}"
        for comp in (0, 1):
            header += [f"{tag}_re{comp + 1}", f"{tag}_im{comp + 1}"]
            cols += [s.field[comp].real, s.field[comp].imag]
    write_csv(out / "eigenstates.csv", header, cols)
    header, cols = ["x"], [grid.x]
    for label, mode in zip(sset.basis_labels(), sset.well_basis):
        tag = "m" + label.replace("-", "m").replace("+", "p")
        for comp in (0, 1):
            header += [f"{tag}_re{comp + 1}", f"{tag}_im{comp + 1}"]
            cols += [mode[comp].real, mode[comp].imag]
    write_csv(out / "modes.csv", header, cols)
    labels = [f"e{s.i}{s.j}" for s in sset.states] + sset.basis_labels()
    fields = [s.field for s in sset.states] + list(sset.well_basis)
    spins = np.array([spin_expectation(psi, grid.dx) for psi in fields])
    with open(out / "spins.csv", "w") as fh:
        fh.write("label,Sx,Sy,Sz\n")
        for label, row in zip(labels, spins):
            fh.write(label + "," + ",".join(f"{v:.16e}" for v in row) + "\n")
    write_potential_csv(out / "potential.csv", grid, sset.potentials)
    write_json(out / "coefficients.json", coeffs.as_dict())
    log.info("energies %s", np.array2string(sset.energies, precision=8))


def cmd_coeffs(cfg, out: Path) -> None:
    from .stationary import overlap_matrix

    sset = solve_stationary(cfg.trap, cfg.grid)
    coeffs = four_mode_coefficients(sset)
    write_json(out / "coefficients.json", coeffs.as_dict())
    M = overlap_matrix(sset.well_basis, sset.potentials.v_mod, sset.grid.dx).real
    np.savetxt(out / "overlap_matrix.csv", M, fmt="%.16e", delimiter=",")


def cmd_evolve(cfg, out: Path) -> None:
    sset = solve_stationary(cfg.trap, cfg.propagation_grid)
    psi0 = initial_state(sset, cfg.scan.c1, cfg.scan.c2)
    traj = evolve(psi0, cfg.propagation, sset)
    header, cols = traj.columns()
    write_csv(out / "trajectory.csv", header, cols)
    sx = traj.spins[:, 0]
    write_json(out / "summary.json", {
        "p_left_avg_final": traj.final_p_left_avg,
        "max_norm_error": float(np.max(np.abs(traj.norm - 1))),
        "sx_sign_change": bool(sx.min() < 0 < sx.max()),
        "max_abs_sy": float(np.max(np.abs(traj.spins[:, 1]))),
        "max_abs_sz": float(np.max(np.abs(traj.spins[:, 2]))),
    })


def _coeffs(cfg):
    return four_mode_coefficients(solve_stationary(cfg.trap, cfg.grid))


def cmd_floquet(cfg, out: Path) -> None:
    coeffs = _coeffs(cfg)
    sc = cfg.scan_config()
    res = floquet_scan(assemble(coeffs, cfg.trap.f), sc.omega_grid())
    ph = res["phases"]
    write_csv(out / "floquet.csv", ["omega", "lambda1", "lambda2", "lambda3", "lambda4", "unitarity_residual"],
              [res["omega"], *ph.T, res["residual"]])
    write_json(out / "resonances.json", {"omega": resonance_frequencies(coeffs, 5).tolist()})


def cmd_crossings(cfg, out: Path, resolution: float) -> None:
    coeffs = _coeffs(cfg)
    found = crossing_frequencies(coeffs, cfg.trap.f, (cfg.scan.omega_min, cfg.scan.omega_max), resolution)
    with open(out / "crossings.csv", "w") as fh:
        fh.write("omega,branch_a,branch_b,class\n")
        for c in found:
            fh.write(f"{c.omega:.16e},{c.branch_a},{c.branch_b},{c.kind}\n")


def cmd_scan(cfg, out: Path) -> ScanResult:
    scan = frequency_scan(cfg.scan_config(), cfg.scan.level)
    _write_scan(out, scan)
    write_json(out / "features.json", _features_payload(scan))
    if scan.failures:
        write_json(out / "failures.json", {str(k): v for k, v in scan.failures.items()})
    return scan


def cmd_gamma_scan(cfg, out: Path, gammas) -> None:
    rows = gamma_width_scan(gammas, cfg.trap.f, cfg.scan.backend, cfg.scan_config(), cfg.scan.level)
    write_csv(out / "gamma_widths.csv", ["gamma", "width"], np.array(rows).T)


def cmd_nonlinear_scan(cfg, out: Path, gs) -> None:
    scans = nonlinear_scan(cfg.scan_config(backend="continuous"), gs, cfg.scan.level)
    payload = {}
    for g, scan in scans.items():
        _write_scan(out, scan, f"points_g{g:+.4g}.csv")
        try:
            width = width_at_level(scan, cfg.scan.level)
        except NoFeatureError:
            width = None
        payload[f"{g:+.4g}"] = {"features": _features_payload(scan), "rightmost_width": width}
    write_json(out / "features.json", payload)


def cmd_compare(cfg, out: Path) -> None:
    sc = cfg.scan_config()
    four = frequency_scan(replace(sc, backend="fourmode"), cfg.scan.level)
    cont = frequency_scan(replace(sc, backend="continuous"), cfg.scan.level)
    _write_scan(out, four, "points_fourmode.csv")
    _write_scan(out, cont, "points_continuous.csv")
    write_json(out / "comparison.json", compare_backends(sc, (four, cont)))


def cmd_reproduce(cfg, out: Path, figure: str) -> None:
    """Preset runs; P_<(omega) curves use the configured backend."""
    if figure == "fig1":
        for gamma in (0.8, 1.5):
            sub = out / f"gamma{gamma}"
            sub.mkdir(exist_ok=True)
            cmd_states(cfgmod.apply_overrides(cfg, {"trap.gamma": gamma}), sub)
    elif figure == "fig2":
        for gamma in (0.8, 1.5):
            c = cfgmod.apply_overrides(cfg, {"trap.gamma": gamma, "trap.f": 0.143, "scan.omega_min": 0.3,
                                             "scan.omega_max": 2.0, "scan.omega_step": 0.002})
            sub = out / f"gamma{gamma}"
            sub.mkdir(exist_ok=True)
            cmd_floquet(c, sub)
            cmd_scan(c, sub)
            cmd_crossings(c, sub, 1e-3)
    elif figure == "fig3":
        gammas = np.round(np.arange(0.0, 2.5001, 0.05), 10)
        rows = gap_scan(gammas, cfg.trap, cfg.grid)
        write_csv(out / "gaps.csv", ["gamma", "lower_gap", "upper_gap"], rows.T)
        lo = gap_minimum(cfg.trap, 1, (1.2, 1.8), cfg.grid)
        up = gap_minimum(cfg.trap, 2, (0.7, 1.3), cfg.grid)
        write_json(out / "gap_minima.json", {"lower": {"gamma": lo[0], "gap": lo[1]},
                                             "upper": {"gamma": up[0], "gap": up[1]}})
        c = cfgmod.apply_overrides(cfg, {"trap.f": 0.143, "scan.omega_min": 0.3, "scan.omega_max": 2.6,
                                         "scan.omega_step": 0.002})
        cmd_gamma_scan(c, out, np.round(np.arange(0.6, 2.0001, 0.1), 10))
    elif figure == "fig4":
        c = cfgmod.apply_overrides(cfg, {"trap.gamma": 0.8, "trap.f": 0.0774, "scan.backend": "continuous",
                                         "scan.omega_min": 0.62, "scan.omega_max": 0.68,
                                         "scan.omega_step": 0.002})
        scan = cmd_scan(c, out)
        dips = [d for d in scan.dips() if 0.63 <= d.center <= 0.65]
        omega = dips[0].center if dips else 0.640
        sub = out / "dip_trajectory"
        sub.mkdir(exist_ok=True)
        cmd_evolve(cfgmod.apply_overrides(c, {"trap.omega_mod": omega}), sub)
    elif figure == "fig5":
        # the interacting peaks reach about 1.02-1.42
        base = {"trap.gamma": 0.8, "trap.f": 0.143, "scan.omega_min": 0.95, "scan.omega_max": 1.5,
                "scan.omega_step": 0.01}
        sub = out / "gamma0.8"
        sub.mkdir(exist_ok=True)
        cmd_nonlinear_scan(cfgmod.apply_overrides(cfg, base), sub, [-0.02, 0.02])
        sub = out / "gamma1.5"
        sub.mkdir(exist_ok=True)
        c = cfgmod.apply_overrides(cfg, {"trap.gamma": 1.5, "trap.f": 0.143, "scan.omega_min": 1.0,
                                         "scan.omega_max": 1.4, "scan.omega_step": 0.02})
        cmd_nonlinear_scan(c, sub, [0.2])


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = _out_dir(args, cfg, args.command if args.command != "reproduce" else f"reproduce-{args.figure}")
        _manifest(out, cfg, args.command)
        cmd = args.command
        if cmd == "states":
            cmd_states(cfg, out)
        elif cmd == "coeffs":
            cmd_coeffs(cfg, out)
        elif cmd == "evolve":
            cmd_evolve(cfg, out)
        elif cmd == "floquet":
            cmd_floquet(cfg, out)
        elif cmd == "crossings":
            cmd_crossings(cfg, out, args.resolution)
        elif cmd == "scan":
            cmd_scan(cfg, out)
        elif cmd == "gamma-scan":
            cmd_gamma_scan(cfg, out, args.gammas)
        elif cmd == "nonlinear-scan":
            cmd_nonlinear_scan(cfg, out, args.gs)
        elif cmd == "compare":
            cmd_compare(cfg, out)
        elif cmd == "reproduce":
            cmd_reproduce(cfg, out, args.figure)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (InsufficientBoundStates, SymmetryError, StepSizeError, PropagationError, NoFeatureError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(str(out))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
