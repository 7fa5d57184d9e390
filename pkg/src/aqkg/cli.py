"""Command-line front end: simulate, train, keygen, nist and bench.

Exit codes: 0 on success, 1 on a validation error (the message names the
offending flag), 2 on an I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .randomness import KEY_BITS, nist_suite, report_csv, split_keys
from .reconciliation import CalibrationPolicy
from .selector import resolve_model
from .traces import ProbeSession, SimConfig, TraceError, load_trace, save_trace, simulate

SEED_ENV = "AQKG_SEED"


class UsageError(Exception):
    """A flag value failed validation; ``flag`` names it."""

    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError("--seed", f"{SEED_ENV}={env!r} is not an integer") from None


def _load_session(args) -> ProbeSession:
    traces = []
    for flag, path, party in (("--a", args.a, "Alice"), ("--b", args.b, "Bob")):
        try:
            traces.append(load_trace(path, party))
        except TraceError as exc:
            raise UsageError(flag, str(exc)) from None
    return ProbeSession(traces[0], traces[1])


def _load_model(args):
    try:
        return resolve_model(args.model)
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError("--model", f"invalid model file {args.model!r}: {exc}") from None


def _policy(args) -> CalibrationPolicy:
    if args.delta_alpha <= 0:
        raise UsageError("--delta-alpha", "must be positive")
    if args.max_calibrations < 0:
        raise UsageError("--max-calibrations", "must be non-negative")
    return CalibrationPolicy(args.delta_alpha, args.max_calibrations)


def _write(path, data) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        p.write_text(data, encoding="utf-8")
    else:
        p.write_bytes(data)


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.n <= 0:
        raise UsageError("--n", "must be positive")
    try:
        cfg = SimConfig(n_probes=args.n, base_power=args.base_power, shadow_sigma=args.shadow_sigma,
                        shadow_phi=args.phi, noise_sigma=args.noise_sigma, loss_prob=args.loss_prob,
                        seed=_seed(args))
    except ValueError as exc:
        raise UsageError("--phi/--loss-prob/--*-sigma", str(exc)) from None
    sim = simulate(cfg)
    save_trace(sim.session.trace_a, args.out_a)
    save_trace(sim.session.trace_b, args.out_b)
    if args.out_eve:
        save_trace(sim.eve, args.out_eve)
    if args.plot_dir:
        from .plotting import plot_traces
        plot_traces(sim.session, Path(args.plot_dir) / "traces.png", sim.eve)
    print(f"wrote {len(sim.session.trace_a)} / {len(sim.session.trace_b)} samples")
    return 0


def cmd_train(args) -> int:
    from .training import InsufficientDataError, build_training_set, fit_model, records_csv
    from .traces import align

    session = align(_load_session(args))
    try:
        records = build_training_set(session)
        model = fit_model(records)
    except InsufficientDataError as exc:
        raise UsageError("--a/--b", str(exc)) from None
    _write(args.model_out, model.dumps())
    if args.records_out:
        _write(args.records_out, records_csv(records))
    print(f"{len(records)} training records; thresholds {model.level_thresholds}")
    return 0


def cmd_keygen(args) -> int:
    from .protocol import run_session

    session = _load_session(args)
    report = run_session(session, _load_model(args), _policy(args), seed=_seed(args),
                         bob_decides=args.bob_decides)
    _write(args.report, report.to_json() + "\n")
    if args.key_out:
        _write(args.key_out, "".join(k.hex() + "\n" for k in report.keys_a))
    if args.transcript_out:
        _write(args.transcript_out, report.transcript.to_bytes())
    if args.plot_dir:
        from .plotting import plot_block_params
        plot_block_params(report, Path(args.plot_dir) / "block_params.png")
    m = report.metrics
    print(f"kgr={m.kgr:.4f} kdr={m.kdr:.4f} keys={len(report.keys_a)} "
          f"identical={report.keys_a == report.keys_b}")
    return 0


def _read_keys(path) -> list:
    keys = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = bytes.fromhex(line)
        except ValueError:
            raise UsageError("--keys", f"{path}:{lineno}: not a hex string") from None
        if len(raw) * 8 % KEY_BITS:
            raise UsageError("--keys", f"{path}:{lineno}: key length must be a multiple of {KEY_BITS} bits")
        keys.append(raw)
    if not keys:
        raise UsageError("--keys", f"{path}: no keys found")
    return keys


def cmd_nist(args) -> int:
    keys = _read_keys(args.keys)
    seqs = split_keys(keys)
    reports = [(i, nist_suite(s)) for i, s in enumerate(seqs)]
    _write(args.out, report_csv(reports))
    failed = sum(not r.all_passed for _, r in reports)
    print(f"{len(seqs)} sequences, {failed} failed")
    return 0


def cmd_bench(args) -> int:
    from .baselines import BenchmarkRow, benchmark_csv, differential_row, fixed_search
    from .protocol import run_session
    from .traces import align

    session = align(_load_session(args))
    report = run_session(session, _load_model(args), _policy(args), seed=_seed(args))
    m = report.metrics
    rows = [BenchmarkRow("adaptive", m.kgr, m.kdr, m.nfr)]
    try:
        m_star, a_star, fixed = fixed_search(session)
    except ValueError as exc:
        raise UsageError("--a/--b", str(exc)) from None
    rows += [fixed, differential_row(session)]
    _write(args.out, benchmark_csv(rows))
    if args.plot_dir:
        from .plotting import plot_benchmark, plot_block_params
        plot_benchmark(rows, Path(args.plot_dir) / "benchmark.png")
        plot_block_params(report, Path(args.plot_dir) / "block_params.png")
    sys.stdout.write(benchmark_csv(rows))
    print(f"# fixed optimum m={m_star} alpha={a_star:.2f}")
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aqkg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seed_flag(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")

    def pair_flags(sp):
        sp.add_argument("--a", required=True, help="Alice trace CSV (index,rssi_dbm)")
        sp.add_argument("--b", required=True, help="Bob trace CSV (index,rssi_dbm)")

    def session_flags(sp):
        sp.add_argument("--model", default="paper-default",
                        help="model JSON path, or 'paper-default' for the built-in constants")
        sp.add_argument("--delta-alpha", type=float, default=0.2)
        sp.add_argument("--max-calibrations", type=int, default=2)

    s = sub.add_parser("simulate", help="draw synthetic paired traces and an Eve trace")
    s.add_argument("--n", type=int, default=4000, help="number of probes")
    s.add_argument("--base-power", type=float, default=-80.0)
    s.add_argument("--shadow-sigma", type=float, default=6.0)
    s.add_argument("--phi", type=float, default=0.9, help="AR(1) shadowing coefficient")
    s.add_argument("--noise-sigma", type=float, default=1.0)
    s.add_argument("--loss-prob", type=float, default=0.0)
    s.add_argument("--out-a", required=True)
    s.add_argument("--out-b", required=True)
    s.add_argument("--out-eve")
    s.add_argument("--plot-dir")
    seed_flag(s)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="fit a selector model from paired traces")
    pair_flags(t)
    t.add_argument("--model-out", required=True)
    t.add_argument("--records-out", help="training-set CSV")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("keygen", help="run a key-generation session")
    pair_flags(k)
    session_flags(k)
    k.add_argument("--report", required=True, help="session report JSON")
    k.add_argument("--key-out", help="final keys, one hex line each")
    k.add_argument("--transcript-out", help="binary public transcript")
    k.add_argument("--bob-decides", action="store_true", help="let Bob choose the parameters")
    k.add_argument("--plot-dir")
    seed_flag(k)
    k.set_defaults(func=cmd_keygen)

    n = sub.add_parser("nist", help="run the randomness test subset on hex keys")
    n.add_argument("--keys", required=True, help="file with one hex key per line")
    n.add_argument("--out", required=True, help="report CSV")
    n.set_defaults(func=cmd_nist)

    b = sub.add_parser("bench", help="compare adaptive, fixed and differential schemes")
    pair_flags(b)
    session_flags(b)
    b.add_argument("--out", required=True, help="benchmark CSV")
    b.add_argument("--plot-dir", help="directory for comparison figures")
    seed_flag(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"aqkg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"aqkg {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
