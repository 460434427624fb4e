"""Command-line front door.

Exit codes: 0 success, 2 configuration error, 3 IO error, 4 enumeration
budget exceeded.  All randomness derives from --seed (or DPSKETCH_SEED);
identical invocations produce byte-identical CSV output.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
from pathlib import Path

from .countsketch import CountSketchState, L2Config, L2Estimator
from .distinct import (
    GROUP,
    TREE,
    DistinctConfig,
    SmallUniverseDistinct,
    distinct_estimator,
    make_summing_backend,
)
from .experiment import ExperimentSpec, run_experiment, sensitivity_check, sensitivity_mappings
from .heavy_hitters import HHConfig, HHEstimator
from .low_freq import LowFreqConfig, lowfreq_estimator
from .moment import MomentConfig, MomentState, moment_estimator
from .randomness import NoiseContext
from .sliding import SmoothnessParams, window_estimator
from .streamio import StreamParseError, parse_stream_file
from .streams import (
    FrequencyTable,
    ResourceBudgetError,
    StreamEvent,
    WindowSpec,
    window_view,
)
from .summing import BinaryTreeMechanism, GroupingMechanism

SNAPSHOT_MAGIC = b"DPCS1"


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _write_csv(path: str | None, header: str, rows: list[str]) -> None:
    text = "\n".join([header] + rows) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_events(args) -> list[StreamEvent]:
    events, header = parse_stream_file(args.input, mode=getattr(args, "mode", None))
    T = getattr(args, "T", None)
    if T is not None and len(events) > T:
        raise ConfigError(f"stream has {len(events)} events but --T is {T}")
    n = getattr(args, "n", None)
    if n is not None:
        for e in events:
            if e.is_element() and e.value >= n:
                raise ConfigError(f"element id {e.value} outside --n {n}")
    if header is not None:
        if T is not None and header.T != T:
            raise ConfigError(f"header T={header.T} disagrees with --T {T}")
        if n is not None and header.n != n:
            raise ConfigError(f"header n={header.n} disagrees with --n {n}")
    return events


def _event_count(e: StreamEvent) -> int:
    if e.is_integer():
        return e.value
    return 1 if e.is_element() else 0


def _ctx(args) -> NoiseContext:
    return NoiseContext(args.seed, noise_off=(args.noise == "off"))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_sum(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    if args.mechanism == "tree":
        mech = BinaryTreeMechanism(args.T, args.epsilon, ctx)
    else:
        mech = GroupingMechanism(args.T, args.epsilon, args.eta, args.xi, ctx)
    rows = []
    exact = 0
    for t, e in enumerate(events, start=1):
        x = _event_count(e)
        if args.mechanism == "group" and x < 0:
            raise ConfigError("grouping mechanism requires a non-negative stream")
        exact += x
        mech.feed(x)
        est = mech.current()
        rows.append(f"{t},{_fmt(est)},{_fmt(exact)},{_fmt(abs(est - exact))}")
    _write_csv(args.output, "t,estimate,exact,abs_error", rows)
    return 0


def _cmd_distinct(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    if args.universe == "small":
        inner = make_summing_backend(
            args.variant, args.T, args.epsilon / 5, args.eta, args.xi, ctx
        )
        est = SmallUniverseDistinct(args.n, inner)
    else:
        cfg = DistinctConfig(
            epsilon=args.epsilon,
            eta=args.eta,
            xi=args.xi,
            n=args.n,
            T=args.T,
            variant=args.variant,
            copies=args.copies,
        )
        est = distinct_estimator(cfg, ctx)
    rows = []
    seen: set[int] = set()
    for t, e in enumerate(events, start=1):
        if e.is_element():
            seen.add(e.value)
        value = est.feed(e)
        exact = float(len(seen))
        rows.append(f"{t},{_fmt(value)},{_fmt(exact)},{_fmt(abs(value - exact))}")
    _write_csv(args.output, "t,estimate,exact,abs_error", rows)
    return 0


def _snapshot_save(path: str, est: L2Estimator) -> None:
    blob = bytearray()
    blob += SNAPSHOT_MAGIC
    blob += struct.pack("<HI", 1, len(est.copies))
    for sketch in est.copies:
        key_json = json.dumps(list(sketch._key)).encode()
        blob += struct.pack(
            "<IQQBdQI",
            sketch.k,
            sketch.T,
            sketch.t,
            1 if sketch._ctx.noise_off else 0,
            sketch.epsilon_bucket,
            sketch._ctx.master_seed,
            len(key_json),
        )
        blob += key_json
        blob += struct.pack(f"<{sketch.k}d", *sketch._running.tolist())
    Path(path).write_bytes(bytes(blob))


def _snapshot_load(path: str) -> list[CountSketchState]:
    blob = Path(path).read_bytes()
    if blob[:5] != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path} is not a {SNAPSHOT_MAGIC.decode()} snapshot")
    off = 5
    version, count = struct.unpack_from("<HI", blob, off)
    off += struct.calcsize("<HI")
    if version != 1:
        raise ConfigError(f"unsupported snapshot version {version}")
    sketches = []
    for _ in range(count):
        k, T, t, noise_off, eps, seed, key_len = struct.unpack_from("<IQQBdQI", blob, off)
        off += struct.calcsize("<IQQBdQI")
        key = tuple(json.loads(blob[off : off + key_len].decode()))
        off += key_len
        running = struct.unpack_from(f"<{k}d", blob, off)
        off += struct.calcsize(f"<{k}d")
        ctx = NoiseContext(seed, noise_off=bool(noise_off))
        sketch = CountSketchState(k, T, eps, ctx, key=key[1:])
        sketch._clock.t = t
        for i, v in enumerate(running):
            sketch._running[i] = v
        sketches.append(sketch)
    return sketches


def _cmd_f2(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    cfg = L2Config(
        epsilon=args.epsilon,
        eta=args.eta,
        xi=args.xi,
        n=args.n,
        T=args.T,
        copies=args.copies,
        buckets=args.buckets,
    )
    est = L2Estimator(cfg, ctx)
    table = FrequencyTable()
    exact_f2 = 0.0
    rows = []
    for t, e in enumerate(events, start=1):
        if e.is_element():
            c = table[e.value]
            exact_f2 += 2 * c + 1
            table.add(e.value)
        est.feed(e)
        value = est.f2()
        rows.append(f"{t},{_fmt(value)},{_fmt(exact_f2)},{_fmt(abs(value - exact_f2))}")
    _write_csv(args.output, "t,estimate,exact,abs_error", rows)
    if args.snapshot_out:
        _snapshot_save(args.snapshot_out, est)
    return 0


def _cmd_point_query(args) -> int:
    from .randomness import median_boost

    sketches = _snapshot_load(args.snapshot)
    estimate = median_boost([s.point_query(args.element) for s in sketches])
    _write_csv(args.output, "element,f_hat", [f"{args.element},{_fmt(estimate)}"])
    return 0


def _cmd_heavy_hitters(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    cfg = HHConfig(
        p=args.p,
        k=args.k,
        eta=args.eta,
        epsilon=args.epsilon,
        xi=args.xi,
        T=args.T,
        n=args.n,
        copies=args.copies,
    )
    est = HHEstimator(cfg, ctx)
    table = FrequencyTable()
    moment = 0.0
    rows = []
    for t, e in enumerate(events, start=1):
        if e.is_element():
            c = table[e.value]
            moment += (c + 1) ** args.p - c**args.p
            table.add(e.value)
        report = est.feed(e)
        for ident in sorted(report):
            f_exact = table[ident]
            in_exact = f_exact**args.p >= moment / args.k if moment > 0 else False
            rows.append(
                f"{t},{ident},{_fmt(report[ident])},{_fmt(f_exact)},{int(in_exact)}"
            )
    _write_csv(args.output, "t,element,f_hat,exact_f,in_exact_hh", rows)
    return 0


def _cmd_low_freq(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    cfg = LowFreqConfig(
        epsilon=args.epsilon,
        eta=args.eta,
        xi=args.xi,
        k=args.k,
        n=args.n,
        T=args.T,
        copies=args.copies,
    )
    est = lowfreq_estimator(cfg, ctx)
    freq: dict[int, int] = {}
    exact = [0] * (args.k + 2)
    rows = []
    for t, e in enumerate(events, start=1):
        if e.is_element():
            j = freq.get(e.value, 0) + 1
            freq[e.value] = j
            if j <= args.k + 1:
                exact[j] += 1
            if 2 <= j <= args.k + 1:
                exact[j - 1] -= 1
        values = est.feed(e)
        for j in range(1, args.k + 1):
            rows.append(f"{t},{j},{_fmt(values[j - 1])},{exact[j]}")
    _write_csv(args.output, "t,j,s_hat_j,exact_j", rows)
    return 0


def _cmd_moment(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    cfg = MomentConfig(
        p=args.p,
        epsilon=args.epsilon,
        eta=args.eta,
        xi=args.xi,
        T=args.T,
        n=args.n,
        copies=args.copies,
        tau=args.tau,
        beta_grid_exponent=args.beta_c,
    )
    est = moment_estimator(cfg, ctx)
    table = FrequencyTable()
    exact = 0.0
    rows = []
    for t, e in enumerate(events, start=1):
        if e.is_element():
            c = table[e.value]
            exact += (c + 1) ** args.p - c**args.p
            table.add(e.value)
        value = est.feed(e)
        rel = abs(value - exact) / exact if exact > 0 else 0.0
        rows.append(f"{t},{_fmt(value)},{_fmt(exact)},{_fmt(rel)}")
    _write_csv(args.output, "t,F_hat_p,exact_F_p,rel_error", rows)
    return 0


def _cmd_sliding(args) -> int:
    events = _load_events(args)
    ctx = _ctx(args)
    params = SmoothnessParams.for_moment(
        {"sum": 1.0, "distinct": 0.0, "f2": 2.0, "moment": args.p}[args.stat], args.eta
    )

    def inner_factory(start_t: int, eps_instance: float):
        child = ctx.child("sliding", start_t)
        horizon = args.T - start_t + 1
        if args.stat == "sum":
            return _SumAdapter(
                GroupingMechanism(horizon, eps_instance, args.eta, args.xi, child)
            )
        if args.stat == "distinct":
            inner = GroupingMechanism(
                horizon, eps_instance / 5, args.eta, args.xi, child
            )
            return SmallUniverseDistinct(args.n, inner)
        if args.stat == "f2":
            cfg = L2Config(
                epsilon=eps_instance,
                eta=args.eta,
                xi=args.xi,
                n=args.n,
                T=horizon,
                copies=1,
            )
            return _F2Adapter(L2Estimator(cfg, child))
        cfg = MomentConfig(
            p=args.p,
            epsilon=eps_instance,
            eta=args.eta,
            xi=args.xi,
            T=horizon,
            n=args.n,
            copies=1,
            tau=args.tau,
        )
        return MomentState(cfg, child, eps_instance / 4)

    probe = GroupingMechanism(args.T, 1.0, args.eta, args.xi, ctx.child("probe"))
    gamma = 0.0 if args.noise == "off" else probe.error_bound()
    hist, budget = window_estimator(
        inner_factory,
        params,
        args.W,
        args.T,
        args.epsilon,
        inner_alpha=1.0 + args.eta,
        inner_gamma=gamma,
    )
    rows = []
    exact_fn = _exact_window_fn(args.stat, args.p)
    for t, e in enumerate(events, start=1):
        value = hist.feed(e)
        exact = exact_fn(events, t, args.W)
        rows.append(f"{t},{_fmt(value)},{_fmt(exact)}")
    _write_csv(args.output, "t,window_estimate,exact_window_value", rows)
    return 0


class _SumAdapter:
    def __init__(self, mech) -> None:
        self.mech = mech

    def feed(self, e: StreamEvent) -> float:
        self.mech.feed(_event_count(e))
        return self.mech.current()


class _F2Adapter:
    def __init__(self, est: L2Estimator) -> None:
        self.est = est

    def feed(self, e: StreamEvent) -> float:
        self.est.feed(e)
        return self.est.f2()


def _exact_window_fn(stat: str, p: float):
    from .streams import exact_frequencies, exact_lp_moment

    def fn(events, t, W):
        view = window_view(events, t, WindowSpec(W))
        table = exact_frequencies(view)
        if stat == "sum":
            return float(table.total_nonempty)
        if stat == "distinct":
            return float(len(table))
        if stat == "f2":
            return exact_lp_moment(table, 2.0)
        return exact_lp_moment(table, p)

    return fn


def _cmd_sensitivity_check(args) -> int:
    report = sensitivity_check(
        args.mapping,
        args.n,
        args.T,
        budget=args.budget,
        k=args.k,
        m=args.m,
        L=args.L,
    )
    line = report.line()
    if args.output and args.output != "-":
        Path(args.output).write_text(line + "\n", encoding="utf-8")
    sys.stdout.write(line + "\n")
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec.from_json(args.spec)
    records = run_experiment(spec, jobs=args.jobs)
    for rec in records:
        sys.stdout.write(
            f"{rec.mechanism} {rec.grid_point} trial={rec.trial} "
            f"max_error={rec.summary['max_error']:.6g}\n"
        )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, needs_input: bool = True) -> None:
    p.add_argument("--seed", type=int, default=int(os.environ.get("DPSKETCH_SEED", "0")))
    p.add_argument("--noise", choices=["on", "off"], default="on")
    p.add_argument("--output", default=None, help="CSV path (default stdout)")
    p.add_argument("--format", choices=["csv"], default="csv")
    if needs_input:
        p.add_argument("--input", required=True, help="stream file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsketch",
        description="Differentially private continual-release streaming estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sum", help="continual-release summing")
    _add_common(p)
    p.add_argument("--mechanism", choices=["tree", "group"], default="group")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--mode", choices=["elements", "integers"], default=None)
    p.set_defaults(func=_cmd_sum)

    p = sub.add_parser("distinct", help="continual-release distinct elements")
    _add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--variant", choices=[TREE, GROUP], default=GROUP)
    p.add_argument("--universe", choices=["small", "general"], default="small")
    p.add_argument("--copies", type=int, default=None)
    p.set_defaults(func=_cmd_distinct)

    p = sub.add_parser("f2", help="continual-release l2 frequency moment")
    _add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--copies", type=int, default=None)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--snapshot-out", default=None)
    p.set_defaults(func=_cmd_f2)

    p = sub.add_parser("point-query", help="query a serialized sketch snapshot")
    _add_common(p, needs_input=False)
    p.add_argument("--element", type=int, required=True)
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=_cmd_point_query)

    p = sub.add_parser("heavy-hitters", help="continual-release lp heavy hitters")
    _add_common(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--copies", type=int, default=None)
    p.set_defaults(func=_cmd_heavy_hitters)

    p = sub.add_parser("low-freq", help="counts of elements at each frequency 1..k")
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--copies", type=int, default=None)
    p.set_defaults(func=_cmd_low_freq)

    p = sub.add_parser("moment", help="lp frequency moment estimation")
    _add_common(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--copies", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--beta-c", type=int, default=3, dest="beta_c")
    p.set_defaults(func=_cmd_moment)

    p = sub.add_parser("sliding", help="sliding-window statistics via smooth histogram")
    _add_common(p)
    p.add_argument("--stat", choices=["sum", "distinct", "f2", "moment"], required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=_cmd_sliding)

    p = sub.add_parser("sensitivity-check", help="brute-force sensitivity vs claims")
    _add_common(p, needs_input=False)
    p.add_argument("--mapping", choices=sensitivity_mappings(), required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--budget", type=int, default=10_000_000)
    p.set_defaults(func=_cmd_sensitivity_check)

    p = sub.add_parser("experiment", help="run an experiment spec")
    _add_common(p, needs_input=False)
    p.add_argument("--spec", required=True, help="JSON ExperimentSpec")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceBudgetError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 4
    except StreamParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
