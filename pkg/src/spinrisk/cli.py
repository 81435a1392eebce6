"""``spinrisk`` command line.

Errors are reported as a single stderr line ``error: <class>: <message>``
with an exit code per class (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    DEFAULT_BURN_IN,
    DEFAULT_REALIZATIONS,
    DEFAULT_TAIL,
    Direction,
    Scheme,
    ThresholdNotFound,
    iterate_approximation,
    threshold_law,
)
from .calibration import (
    Convention,
    LedgerFormatError,
    SaturationError,
    calibrate,
    read_ledger,
    read_supports,
    robustness_sweep,
    write_supports,
)
from .ensemble import ModelFamily, child_seed, realization_seeds, simulate_ensemble
from .model import (
    CouplingSpec,
    CouplingVariant,
    ModelInstance,
    SupportVector,
    UpdateMode,
    initial_state,
    run_trajectory,
    sample_couplings,
)
from .sweep import (
    COMPARE_HEADER,
    ROBUSTNESS_HEADER,
    SURFACE_HEADER,
    THRESHOLD_HEADER,
    TRAJECTORY_HEADER,
    RunManifest,
    SweepGrid,
    export_csv,
    export_robustness_csv,
    export_threshold_csv,
    fmt,
    run_cell,
    sweep_surface,
    write_manifest,
    write_rows,
)

EXIT_CODES = {"usage": 2, "input": 3, "value": 4, "saturated": 5, "not-found": 6, "io": 7}

# Child-seed coordinates of the master seed used by the CLI.
SEED_SUPPORTS = 1_000_000
SEED_COUPLINGS = 0
SEED_NOISE = 1


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _nonneg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a finite non-negative number, got {text}")
    return v


def _pos_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def parse_grid(text):
    """``a,b,c`` or ``start:stop:count`` (inclusive linspace)."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text)
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed grid {text!r}") from None


def _shared(p):
    p.add_argument("--seed", type=int, help="master seed (generated and printed when omitted)")
    p.add_argument("--threads", type=_pos_int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--config", help="JSON file whose keys mirror this command's flags")


def _supports_flags(p):
    p.add_argument("--supports", help="file with one support per line")
    p.add_argument("--theta", type=parse_grid, help="comma-separated supports")
    p.add_argument("--theta-uniform", nargs=2, type=float, metavar=("A", "B"),
                   help="draw n supports uniformly in [A, B]")
    p.add_argument("--theta-gauss", nargs=2, type=float, metavar=("MU", "SIGMA"),
                   help="draw n Gaussian supports")
    p.add_argument("--theta-const", type=float, metavar="THETA", help="n equal supports")
    p.add_argument("--n", type=_pos_int, help="number of processes for drawn or constant supports")


def _estimator_flags(p):
    p.add_argument("--burn-in", type=_nonneg_int, default=DEFAULT_BURN_IN)
    p.add_argument("--tail", type=_pos_int, default=DEFAULT_TAIL)
    p.add_argument("--realizations", type=_pos_int, default=DEFAULT_REALIZATIONS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spinrisk {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("calibrate", help="supports from a loss ledger")
    p.add_argument("ledger", nargs="?", help="ledger file: one count per line or channel,count CSV")
    p.add_argument("--sigma-xi", type=_nonneg, default=1.0)
    p.add_argument("--convention", choices=[c.value for c in Convention], default=Convention.SELF_CONSISTENT.value)
    _shared(p)

    p = sub.add_parser("simulate", help="one trajectory: t, m, z_total")
    _supports_flags(p)
    p.add_argument("--steps", type=_nonneg_int, default=100)
    p.add_argument("--sigma-xi", type=_nonneg, default=0.0)
    p.add_argument("--sigma-j", type=_nonneg, default=0.0)
    p.add_argument("--coupling-model", choices=[v.value for v in CouplingVariant], default="zero-mean")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--init", choices=["down", "up", "random"], default="down")
    p.add_argument("--update", choices=[u.value for u in UpdateMode], default="sync")
    p.add_argument("--zero-diagonal", action="store_true")
    p.add_argument("--record-spins", action="store_true")
    _shared(p)

    p = sub.add_parser("sweep", help="asymptotic magnetization surface over (sigma_j, sigma_xi)")
    _supports_flags(p)
    p.add_argument("--sigma-j-grid", type=parse_grid, default=parse_grid("0:2:5"))
    p.add_argument("--sigma-xi-grid", type=parse_grid, default=parse_grid("0:2:5"))
    p.add_argument("--coupling-model", choices=[v.value for v in CouplingVariant], default="zero-mean")
    p.add_argument("--alpha", type=float, default=0.0)
    _estimator_flags(p)
    _shared(p)

    p = sub.add_parser("cycles", help="period-2 leaves along one direction of the (sigma_j, sigma_xi) plane")
    _supports_flags(p)
    p.add_argument("--direction", choices=[d.value for d in Direction], default="diagonal")
    p.add_argument("--sigma-grid", type=parse_grid, default=parse_grid("0:1:11"))
    p.add_argument("--coupling-model", choices=[v.value for v in CouplingVariant], default="scaled-antiferro")
    _estimator_flags(p)
    _shared(p)

    p = sub.add_parser("robustness", help="distance delta vs sigma_j for a ledger")
    p.add_argument("ledger", nargs="?")
    p.add_argument("--sigma-xi", type=_nonneg, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--sigma-j-grid", type=parse_grid, default=parse_grid("0:4.5:10"))
    p.add_argument("--realizations", type=_pos_int, default=DEFAULT_REALIZATIONS)
    _shared(p)

    p = sub.add_parser("fit-threshold", help="radius-threshold widths vs uniform support, with a linear fit")
    p.add_argument("--thetas", type=parse_grid, default=parse_grid("0.2,0.4,0.6,0.8,1.0"))
    p.add_argument("--direction", choices=[d.value for d in Direction] + ["all"], default="diagonal")
    p.add_argument("--target-radius", type=_nonneg, default=0.25)
    p.add_argument("--tolerance", type=_nonneg, default=1e-2)
    p.add_argument("--n", type=_pos_int, default=10)
    _estimator_flags(p)
    _shared(p)

    p = sub.add_parser("compare-approx", help="simulated vs annealed vs quenched magnetization")
    _supports_flags(p)
    p.add_argument("--steps", type=_pos_int, default=100)
    p.add_argument("--sigma-xi", type=_nonneg, default=1.0)
    p.add_argument("--sigma-j", type=_nonneg, default=1.0)
    p.add_argument("--coupling-model", choices=[v.value for v in CouplingVariant], default="zero-mean")
    p.add_argument("--init", choices=["down", "up", "random"], default="down")
    p.add_argument("--realizations", type=_pos_int, default=DEFAULT_REALIZATIONS)
    _shared(p)
    return parser


def _apply_config(parser, argv):
    """Load ``--config`` and install its values as defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except OSError as exc:
        raise CliError("input", f"cannot read config {known.config}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError("input", f"malformed config {known.config}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise CliError("input", "config must be a JSON object")
    command = next((a for a in argv if a in _subparsers(parser)), None)
    if command is None:
        return
    sp = _subparsers(parser)[command]
    dests = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in dests or dest in ("help", "config"):
            raise CliError("usage", f"unknown config key {key!r} for {command}")
        action = dests[dest]
        try:
            if action.type is parse_grid:
                value = parse_grid(value)
            elif action.type is not None and isinstance(value, list):
                value = [action.type(str(v)) for v in value]
            elif action.type is not None:
                value = action.type(str(value))
        except argparse.ArgumentTypeError as exc:
            raise CliError("usage", f"config key {key!r}: {exc}") from exc
        defaults[dest] = value
    sp.set_defaults(**defaults)


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def _resolve_supports(args) -> tuple[SupportVector, str]:
    sources = [k for k in ("supports", "theta", "theta_uniform", "theta_gauss", "theta_const")
               if getattr(args, k) is not None]
    if len(sources) != 1:
        raise CliError("usage", "exactly one supports source is required "
                                "(--supports, --theta, --theta-uniform, --theta-gauss or --theta-const)")
    src = sources[0]
    if src == "supports":
        try:
            return read_supports(args.supports), f"file:{args.supports}"
        except OSError as exc:
            raise CliError("input", f"cannot read {args.supports}: {exc.strerror or exc}") from exc
    if src == "theta":
        return SupportVector(args.theta), "list"
    if args.n is None:
        raise CliError("usage", f"--{src.replace('_', '-')} needs --n")
    if src == "theta_const":
        return SupportVector(np.full(args.n, args.theta_const)), f"const:{args.theta_const}"
    rng = np.random.default_rng(child_seed(_seed(args), SEED_SUPPORTS))
    if src == "theta_uniform":
        a, b = args.theta_uniform
        return SupportVector(rng.uniform(a, b, args.n)), f"uniform:{a}:{b}"
    mu, sd = args.theta_gauss
    if sd < 0:
        raise CliError("value", "--theta-gauss sigma must be non-negative")
    return SupportVector(rng.normal(mu, sd, args.n)), f"gauss:{mu}:{sd}"


def _emit(args, header, rows, manifest):
    if args.out:
        write_rows(args.out, header, rows)
        write_manifest(manifest, args.out)
    else:
        out = sys.stdout
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(row) + "\n")
        print(manifest.to_json(), file=sys.stderr)


def _read_ledger(path):
    if not path:
        raise CliError("usage", "a ledger file is required")
    try:
        return read_ledger(path)
    except OSError as exc:
        raise CliError("input", f"cannot read {path}: {exc.strerror or exc}") from exc


def _params(args, *skip):
    drop = {"command", "config", "out", "verbose", "threads", "seed", *skip}
    return {k: v for k, v in vars(args).items() if k not in drop}


def cmd_calibrate(args):
    ledger = _read_ledger(args.ledger)
    res = calibrate(ledger, args.sigma_xi, args.convention)
    sv = res.supports
    for i, (p, th) in enumerate(zip(res.probabilities, sv.theta)):
        print(f"channel={i},count={ledger.counts[i]},p={fmt(p)},theta={fmt(th)}")
    print(f"mu_theta={fmt(sv.mu_theta)},sigma_theta={fmt(sv.sigma_theta)},"
          f"sigma_xi={fmt(res.sigma_xi)},convention={res.convention.value}")
    manifest = RunManifest.build(args.seed, sv, _params(args))
    if args.out:
        write_supports(args.out, sv)
        write_manifest(manifest, args.out)
    else:
        print(manifest.to_json(), file=sys.stderr)


def cmd_simulate(args):
    seed = _seed(args)
    supports, source = _resolve_supports(args)
    n = len(supports)
    spec = CouplingSpec(args.coupling_model, args.sigma_j)
    J = sample_couplings(n, spec, supports.mu_theta, child_seed(seed, SEED_COUPLINGS), args.zero_diagonal)
    model = ModelInstance(J, supports, args.sigma_xi, args.alpha, args.update)
    noise_seed = child_seed(seed, SEED_NOISE)
    s0 = initial_state(n, args.init, np.random.default_rng(child_seed(seed, 2)))
    traj = run_trajectory(model, s0, args.steps, noise_seed, record_configs=args.record_spins)
    header = list(TRAJECTORY_HEADER)
    if args.record_spins:
        header += [f"s_{i}" for i in range(n)]
    z = traj.z_total
    rows = []
    for t in range(args.steps + 1):
        row = [str(t), fmt(traj.magnetization[t]), str(int(z[t]))]
        if args.record_spins:
            row += [str(int(v)) for v in traj.configs[t]]
        rows.append(row)
    params = _params(args)
    params["supports_source"] = source
    _emit(args, header, rows, RunManifest.build(seed, supports, params))


def _surface(args, grid, supports, source):
    seed = _seed(args)
    records = sweep_surface(grid, supports, seed, threads=args.threads)
    params = grid.to_dict()
    params["supports_source"] = source
    manifest = RunManifest.build(seed, supports, params)
    rows = [r.row() for r in records]
    if args.out:
        export_csv(records, manifest, args.out)
    else:
        _emit(args, SURFACE_HEADER, rows, manifest)
    failed = sum(r.status != "ok" for r in records)
    if failed:
        print(f"warning: {failed} of {len(records)} cells failed", file=sys.stderr)


def cmd_sweep(args):
    supports, source = _resolve_supports(args)
    grid = SweepGrid(args.sigma_j_grid, args.sigma_xi_grid, args.burn_in, args.tail, args.realizations,
                     args.coupling_model, source, args.alpha)
    _surface(args, grid, supports, source)


def cmd_cycles(args):
    supports, source = _resolve_supports(args)
    direction = Direction(args.direction)
    sigmas = sorted(set(args.sigma_grid))
    # A line in the plane is a degenerate surface: one axis collapses to {0} or both vary together.
    if direction is Direction.NOISE_AXIS:
        grid = SweepGrid([0.0], sigmas, args.burn_in, args.tail, args.realizations, args.coupling_model, source)
        _surface(args, grid, supports, source)
        return
    if direction is Direction.COUPLING_AXIS:
        grid = SweepGrid(sigmas, [0.0], args.burn_in, args.tail, args.realizations, args.coupling_model, source)
        _surface(args, grid, supports, source)
        return
    seed = _seed(args)
    records = []
    for k, s in enumerate(sigmas):
        grid = SweepGrid([s], [s], args.burn_in, args.tail, args.realizations, args.coupling_model, source)
        records.append(run_cell(grid, supports, child_seed(seed, k), 0, 0))
    params = {"direction": direction.value, "sigma_grid": sigmas, "burn_in": args.burn_in, "tail": args.tail,
              "realizations": args.realizations, "coupling_variant": args.coupling_model,
              "supports_source": source}
    manifest = RunManifest.build(seed, supports, params)
    if args.out:
        export_csv(records, manifest, args.out)
    else:
        _emit(args, SURFACE_HEADER, [r.row() for r in records], manifest)


def cmd_robustness(args):
    seed = _seed(args)
    ledger = _read_ledger(args.ledger)
    records = robustness_sweep(ledger, args.sigma_xi, args.alpha, args.sigma_j_grid,
                               args.realizations, seed, args.threads)
    supports = calibrate(ledger, args.sigma_xi).supports
    manifest = RunManifest.build(seed, supports, _params(args))
    rows = [[fmt(r.sigma_j), fmt(r.alpha), fmt(r.delta), fmt(r.realizations)] for r in records]
    if args.out:
        export_robustness_csv(records, args.out)
        write_manifest(manifest, args.out)
    else:
        _emit(args, ROBUSTNESS_HEADER, rows, manifest)
    for r in records:
        print(f"sigma_j={fmt(r.sigma_j)},delta={fmt(r.delta)},std_error={fmt(r.std_error)}", file=sys.stderr)


def cmd_fit_threshold(args):
    seed = _seed(args)
    directions = list(Direction) if args.direction == "all" else [Direction(args.direction)]
    rows, summaries = [], []
    for d in directions:
        sigmas, fit = threshold_law(args.thetas, d, args.target_radius, threads=args.threads,
                                    tolerance=args.tolerance, n=args.n, burn_in=args.burn_in, tail=args.tail,
                                    realizations=args.realizations, seed=seed)
        rows += [(d, th, s, args.target_radius) for th, s in zip(args.thetas, sigmas)]
        summaries.append(f"a={fmt(fit.slope)},b={fmt(fit.intercept)},rho2={fmt(fit.rho_squared)},direction={d.value}")
    manifest = RunManifest.build(seed, np.asarray(args.thetas, dtype=float), _params(args))
    if args.out:
        export_threshold_csv(rows, args.out)
        write_manifest(manifest, args.out)
    else:
        _emit(args, THRESHOLD_HEADER, [[d.value, fmt(t), fmt(s), fmt(r)] for d, t, s, r in rows], manifest)
    for line in summaries:
        print(line)


def cmd_compare_approx(args):
    seed = _seed(args)
    supports, source = _resolve_supports(args)
    family = ModelFamily(supports, args.sigma_xi, CouplingSpec(args.coupling_model, args.sigma_j))
    s0 = initial_state(family.n, args.init, np.random.default_rng(child_seed(seed, 2)))
    run = simulate_ensemble(family, args.steps, realization_seeds(seed, args.realizations, 0), initial=s0)
    m_sim = run.magnetization.mean(axis=0)
    m_ann = iterate_approximation(family, args.steps, Scheme.ANNEALED, initial=s0)
    m_q = iterate_approximation(family, args.steps, Scheme.QUENCHED_MARKOV, initial=s0,
                                realizations=args.realizations, seed=child_seed(seed, 1))
    rows = [[str(t), fmt(m_sim[t]), fmt(m_ann[t]), fmt(m_q[t])] for t in range(args.steps + 1)]
    params = _params(args)
    params["supports_source"] = source
    _emit(args, COMPARE_HEADER, rows, RunManifest.build(seed, supports, params))


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "cycles": cmd_cycles,
    "robustness": cmd_robustness,
    "fit-threshold": cmd_fit_threshold,
    "compare-approx": cmd_compare_approx,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("usage", "a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.kind, str(exc))
    except SaturationError as exc:
        return _fail("saturated", str(exc))
    except LedgerFormatError as exc:
        return _fail("input", str(exc))
    except ThresholdNotFound as exc:
        return _fail("not-found", str(exc))
    except argparse.ArgumentTypeError as exc:
        return _fail("usage", str(exc))
    except (ValueError, IndexError) as exc:
        return _fail("value", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    return 0


def _fail(kind, message):
    print(f"error: {kind}: {' '.join(message.split())}", file=sys.stderr)
    return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
