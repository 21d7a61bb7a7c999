"""Command-line interface: ``optomech-tomo {synth,reconstruct,validate,scan,fidelity}``.

Exit codes: 0 ok, 1 validation failed, 2 usage, 3 ill-posed, 4 not converged,
5 I/O, 6 oracle resources or integration failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .core import fidelity_density, fidelity_distribution
from .errors import (ConsistencyError, IllPosedError, IntegratorError, InvalidInputError,
                     ResourceError)
from .io import (FileFormatError, load_config, parse_state_flag, read_json, read_spectrum,
                 state_from_json, timestamp, write_json, write_spectrum)
from .oracle import ContinuumDiscretization, OracleEngine
from .reconstruct import (analytic_kernel, build_diagonal_problem, build_general_problem,
                          convergence_scan, explicit_plan, general_sideband_plan, random_plan,
                          sideband_plan, solve_diagonal, solve_general)
from .spectra import LorentzianPacket, spectrum_emission

log = logging.getLogger("optomech_tomo")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_ILL_POSED = 3
EXIT_NOT_CONVERGED = 4
EXIT_IO = 5
EXIT_RESOURCE = 6

POINT_MATCH_RTOL = 1e-9


# ---------------------------------------------------------------- helpers

def _overrides(args):
    ov = {
        "system.g0": args.g0,
        "system.gamma_c": args.gamma_c,
        "system.omega_m": args.omega_m,
        "numerics.n_d": args.n_d,
        "numerics.n_d_reference": args.n_d_reference,
        "numerics.N": args.N,
        "numerics.plan": args.plan,
        "numerics.even": args.even,
        "numerics.seed": args.seed,
        "numerics.mode": args.mode,
        "numerics.engine": args.engine,
        "numerics.condition_cap": args.condition_cap,
        "oracle.window": args.window,
        "oracle.spacing": args.spacing,
        "oracle.n_d": args.oracle_n_d,
        "oracle.t_final": args.t_final,
    }
    if args.points is not None:
        ov["numerics.points"] = [float(x) for x in args.points.split(",")]
        if args.plan is None:
            ov["numerics.plan"] = "explicit"
    if getattr(args, "grid", None) is not None:
        low, high, count = args.grid.split(",")
        ov["numerics.grid"] = {"low": float(low), "high": float(high), "count": int(count)}
    if args.range is not None:
        ov["numerics.range"] = [float(x) for x in args.range.split(",")]
    if args.variant is not None or args.center is not None or args.width is not None:
        ov["photon.variant"] = args.variant or "scattering"
        ov["photon.center"] = args.center
        ov["photon.width"] = args.width
    if args.state is not None:
        ov["state"] = parse_state_flag(args.state)
    return ov


def _config(args):
    return load_config(args.config, _overrides(args))


def make_plan(cfg, N=None):
    num = cfg.numerics
    N = int(num["N"] if N is None else N)
    general = num["mode"] == "general"
    params = cfg.system
    if num["plan"] == "sideband":
        if general:
            return general_sideband_plan(N, params, n_d=num["n_d"])
        return sideband_plan(N, params, even=num["even"])
    if num["plan"] == "random":
        low, high = num["range"]
        return random_plan(N * N if general else N, float(low), float(high), num["seed"])
    return explicit_plan(num["points"])


def make_engine(cfg):
    """Oracle engine for the configured photon variant."""
    o = cfg.oracle
    params = cfg.system
    packet = None
    if cfg.photon["variant"] == "scattering":
        packet = LorentzianPacket(cfg.photon["center"], cfg.photon["width"])
    if o["modes"] is not None:
        disc = ContinuumDiscretization(float(o["window"]), int(o["modes"]))
    else:
        spacing = o["spacing"]
        if spacing is None:
            spacing = params.gamma_c / 10.0
            if packet is not None:
                spacing = min(spacing, packet.width / 10.0)
        disc = ContinuumDiscretization.with_spacing(float(o["window"]), float(spacing))
    return OracleEngine(params, disc, n_d=int(o["n_d"]), variant=cfg.photon["variant"],
                        packet=packet, t_final=o["t_final"], tol=float(o["tol"]),
                        max_dim=int(o["max_dim"]), n_sideband=int(o["n_sideband"]))


def make_kernel(cfg, engine=None):
    if cfg.numerics["engine"] == "oracle":
        engine = engine or make_engine(cfg)
        return engine.as_kernel(), engine
    return analytic_kernel(cfg.system, int(cfg.numerics["n_d"])), None


def synthesize(cfg, points, engine=None):
    """Spectrum of the configured state at ``points``."""
    if cfg.numerics["engine"] == "oracle":
        engine = engine or make_engine(cfg)
        state = cfg.build_state(size=engine.n_d)
        engine.prefetch(range(np.asarray(state).shape[0]), int(cfg.oracle["workers"]))
        return engine.spectrum_at(state, points), engine
    state = cfg.build_state()
    spec = spectrum_emission(state, points, cfg.system, cfg.reference_dim)
    return spec, engine


def values_at(spectrum, points, sigma=None):
    """Spectral values at exactly the plan points; lists every missing detuning."""
    det = spectrum.detunings
    idx = np.searchsorted(det, points)
    out = np.empty(len(points))
    sig = None if sigma is None else np.empty(len(points))
    missing = []
    for k, (p, i) in enumerate(zip(points, idx)):
        best = None
        for cand in (i - 1, i):
            if 0 <= cand < det.size and abs(det[cand] - p) <= POINT_MATCH_RTOL * max(1.0, abs(p)):
                best = cand
        if best is None:
            missing.append(float(p))
            continue
        out[k] = spectrum.values[best]
        if sig is not None:
            sig[k] = sigma[best]
    if missing:
        raise FileFormatError("spectrum file lacks plan detunings: "
                              + ", ".join(f"{x:.10g}" for x in missing))
    return out, sig


def _reference(cfg, args):
    if getattr(args, "reference", None) is None:
        return None
    if args.reference == "config":
        return cfg.build_state()
    return state_from_json(read_json(args.reference))


def _solve(cfg, plan, values, kernel, reference=None, sigma=None):
    num = cfg.numerics
    cap = float(num["condition_cap"])
    if num["mode"] == "diagonal":
        prob = build_diagonal_problem(plan, values, kernel=kernel, sigma=sigma)
        return solve_diagonal(prob, reference=reference, condition_cap=cap)
    prob = build_general_problem(plan, values, kernel=kernel, sigma=sigma)
    return solve_general(prob, reference=reference, condition_cap=cap,
                         project=bool(num["project"]))


def _emit(args, payload):
    if args.out:
        write_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    cfg = _config(args)
    grid = cfg.numerics["grid"]
    engine = None
    if grid is not None:
        points = np.linspace(float(grid["low"]), float(grid["high"]), int(grid["count"]))
    else:
        points = make_plan(cfg).points
    spec, engine = synthesize(cfg, points, engine)
    meta = {"config": cfg.as_dict(), "command": "synth"}
    if engine is not None:
        meta["oracle_report"] = {k: v for k, v in engine.report().items() if k != "evolutions"}
    write_spectrum(args.out or sys.stdout, spec, meta=meta)
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = _config(args)
    if args.spectrum is None:
        raise InvalidInputError("--spectrum: required")
    spectrum, sigma = read_spectrum(args.spectrum)
    plan = make_plan(cfg)
    values, sig = values_at(spectrum, plan.points, sigma)
    kernel, _ = make_kernel(cfg)
    res = _solve(cfg, plan, values, kernel, reference=_reference(cfg, args), sigma=sig)
    payload = res.as_dict()
    payload["provenance"] = {"config": cfg.as_dict(), "spectrum_file": str(args.spectrum),
                             "spectrum_meta": spectrum.provenance, "plan": plan.as_dict()}
    _emit(args, payload)
    summary = f"condition {res.condition_number:.3e}, residual {res.residual:.3e}"
    if res.fidelity is not None:
        summary += f", fidelity {res.fidelity:.6f}"
    print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_validate(args):
    cfg = _config(args)
    if cfg.photon["variant"] != "emission":
        raise InvalidInputError("photon.variant: validate needs the emission variant")
    low, high = args.low, args.high
    engine = make_engine(cfg)
    state = cfg.build_state(size=engine.n_d) if cfg.state is not None else np.array([1.0])
    full = engine.spectrum(state)
    mask = (full.detunings >= low) & (full.detunings <= high)
    if not np.any(mask):
        raise InvalidInputError(f"no oracle grid points in [{low}, {high}]")
    grid = full.detunings[mask]
    ora = full.values[mask]
    ana = spectrum_emission(state, grid, cfg.system, int(cfg.numerics["n_d"])).values
    linf = float(np.max(np.abs(ora - ana)) / np.max(np.abs(ana)))
    l1 = float(np.sum(np.abs(ora - ana)) / np.sum(np.abs(ana)))
    passed = linf <= args.threshold
    report = engine.report()
    report.pop("evolutions", None)
    payload = {"linf_relative": linf, "l1_relative": l1, "threshold": args.threshold,
               "passed": passed, "range": [low, high], "points": int(grid.size),
               "oracle": report, "config": cfg.as_dict()}
    _emit(args, payload)
    print(f"L-inf {linf:.4%}  L1 {l1:.4%}  threshold {args.threshold:.2%}  "
          f"{'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAILED


def _format_solution(sol):
    if sol is None:
        return "-"
    arr = np.asarray(sol)
    if np.iscomplexobj(arr):
        return json.dumps({"real": arr.real.tolist(), "imag": arr.imag.tolist()})
    return ",".join(f"{x:.12g}" for x in arr)


def cmd_scan(args):
    cfg = _config(args)
    num = cfg.numerics
    n_min = int(args.N_min if args.N_min is not None else num["N_min"])
    n_max = int(args.N_max if args.N_max is not None else num["N_max"])
    kernel, engine = make_kernel(cfg)
    if args.spectrum is not None:
        spectrum, _ = read_spectrum(args.spectrum)

        def provider(plan):
            return values_at(spectrum, plan.points)[0]
    else:
        def provider(plan):
            return synthesize(cfg, plan.points, engine)[0].values

    reference = cfg.build_state() if cfg.state is not None else None
    if reference is not None and num["mode"] == "general" and np.ndim(reference) == 1:
        reference = np.diag(reference)
    scan = convergence_scan(provider, (n_min, n_max), lambda N: make_plan(cfg, N),
                            tol=float(args.tol if args.tol is not None else num["scan_tol"]),
                            mode=num["mode"], kernel=kernel, reference=reference,
                            condition_cap=float(num["condition_cap"]))
    lines = [
        "# optomech-tomo scan v1",
        f"# created: {timestamp()}",
        "# meta: " + json.dumps({"config": cfg.as_dict(), "converged": scan.converged,
                                 "converged_N": scan.converged_N}, sort_keys=True),
        "# columns: N stable fidelity condition_number l1_change solution",
    ]
    for row in scan.history:
        fid = "-" if row["fidelity"] is None else f"{row['fidelity']:.12g}"
        cond = "-" if row["condition_number"] is None else f"{row['condition_number']:.6e}"
        change = "-" if row["change"] is None else f"{row['change']:.6e}"
        lines.append(f"{row['N']} {int(row['stable'])} {fid} {cond} {change} "
                     f"{_format_solution(row['solution'])}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if scan.converged:
        print(f"converged at N = {scan.converged_N}", file=sys.stderr)
        return EXIT_OK
    print(f"no convergence for N in [{n_min}, {n_max}]", file=sys.stderr)
    return EXIT_NOT_CONVERGED


def cmd_fidelity(args):
    a = state_from_json(read_json(args.first))
    b = state_from_json(read_json(args.second))
    if np.ndim(a) == 1 and np.ndim(b) == 1:
        size = max(a.size, b.size) if args.pad else min(a.size, b.size)
        pa, pb = np.zeros(size), np.zeros(size)
        pa[:min(size, a.size)] = a[:size]
        pb[:min(size, b.size)] = b[:size]
        fid = fidelity_distribution(pa, pb)
    else:
        ra = np.diag(a) if np.ndim(a) == 1 else a
        rb = np.diag(b) if np.ndim(b) == 1 else b
        size = max(ra.shape[0], rb.shape[0]) if args.pad else min(ra.shape[0], rb.shape[0])
        full_a = np.zeros((size, size), dtype=complex)
        full_b = np.zeros((size, size), dtype=complex)
        ka, kb = min(size, ra.shape[0]), min(size, rb.shape[0])
        full_a[:ka, :ka] = ra[:ka, :ka]
        full_b[:kb, :kb] = rb[:kb, :kb]
        fid = fidelity_density(full_a, full_b)
    print(f"{fid:.12g}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("-c", "--config", help="YAML run configuration")
    p.add_argument("-o", "--out", help="output file (default: stdout)")
    g = p.add_argument_group("system (flags override the config)")
    g.add_argument("--g0", type=float)
    g.add_argument("--gamma-c", type=float)
    g.add_argument("--omega-m", type=float)
    g.add_argument("--variant", choices=("emission", "scattering"))
    g.add_argument("--center", type=float, help="scattering packet centre")
    g.add_argument("--width", type=float, help="scattering packet width")
    g.add_argument("--state", help="thermal:NBAR | fock:N | maximally_mixed:NS | "
                                   "superposition:C0,C1,... | populations:P0,P1,... | file:PATH")
    n = p.add_argument_group("numerics")
    n.add_argument("--n-d", type=int, help="summation dimension of the model kernel")
    n.add_argument("--n-d-reference", type=int, help="summation dimension for synthesis")
    n.add_argument("--N", type=int, help="truncation dimension")
    n.add_argument("--plan", choices=("sideband", "random", "explicit"))
    n.add_argument("--even", choices=("upper", "lower"), help="even-N sideband centring")
    n.add_argument("--points", help="comma-separated explicit detunings (units of omega_m)")
    n.add_argument("--range", help="random plan range low,high")
    n.add_argument("--seed", type=int)
    n.add_argument("--mode", choices=("diagonal", "general"))
    n.add_argument("--engine", choices=("analytic", "oracle"))
    n.add_argument("--condition-cap", type=float)
    o = p.add_argument_group("oracle")
    o.add_argument("--window", type=float)
    o.add_argument("--spacing", type=float)
    o.add_argument("--oracle-n-d", type=int)
    o.add_argument("--t-final", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="optomech-tomo",
        description="Mechanical state tomography from single-photon emission spectra.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic spectrum file")
    _add_common(p)
    p.add_argument("--grid", help="evaluate on LOW,HIGH,COUNT instead of the plan points")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reconstruct", help="invert a spectrum file")
    _add_common(p)
    p.add_argument("-s", "--spectrum", help="input spectrum file")
    p.add_argument("--reference", help="state file, or 'config' to use the configured state")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("validate", help="compare oracle and closed-form emission spectra")
    _add_common(p)
    p.add_argument("--low", type=float, default=-8.0)
    p.add_argument("--high", type=float, default=4.0)
    p.add_argument("--threshold", type=float, default=0.03)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("scan", help="convergence scan over the truncation dimension")
    _add_common(p)
    p.add_argument("-s", "--spectrum", help="read observations from this file")
    p.add_argument("--N-min", type=int)
    p.add_argument("--N-max", type=int)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fidelity", help="fidelity between two state or result files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--pad", action="store_true", help="zero-pad to the larger dimension")
    p.set_defaults(func=cmd_fidelity)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IllPosedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED
    except (ResourceError, IntegratorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
