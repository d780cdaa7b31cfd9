"""Command-line front end.

Subcommands: ``topology`` (emit a generated topology file), ``run`` (one
simulation), ``sweep`` (runs across a load grid, aggregated to CSV),
``bound`` (fluid capacity bound), ``decompose`` (bounded-dispersion path
inspection), and ``verify`` (delay-competitiveness check).  Exit codes:
0 success, 1 invariant violation, 2 usage error.

Flags override values from an optional JSON config file, and the effective
configuration is echoed into every output for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import metrics, netgraph, pathdisp, plotting, simcore
from .flowsolve import DisconnectedPairError, max_flow_value
from .netgraph import TB_BITS, TopologyError
from .schedulers import (
    SCHEDULER_NAMES,
    make_scheduler,
    write_reservation_log,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _load_topology(spec: str, capacity_gbps=None, mode=None):
    if spec.startswith("file:"):
        path = spec[5:]
    elif os.path.exists(spec) and ":" not in spec:
        path = spec
    else:
        cap = capacity_gbps * 1e9 if capacity_gbps is not None else None
        return netgraph.from_spec(spec, capacity=cap, mode=mode)
    try:
        with open(path) as f:
            return netgraph.parse_topology(f.read())
    except OSError as exc:
        raise UsageError(f"unreadable topology {path!r}: {exc}") from None


def _size_dist(args):
    if args.dist == "pareto":
        return simcore.ParetoSize(
            beta=args.pareto_beta,
            xm_bits=args.pareto_xm_tb * TB_BITS,
            gamma_bits=args.pareto_gamma_tb * TB_BITS,
        )
    if args.dist == "exponential":
        return simcore.ExponentialSize(mean_bits=args.mean_tb * TB_BITS)
    if args.dist == "constant":
        return simcore.ConstantSize(bits=args.size_tb * TB_BITS)
    raise UsageError(f"unknown distribution {args.dist!r}")


def _pair_policy(args):
    if args.fixed_pair:
        try:
            s, d = args.fixed_pair.split(":")
        except ValueError:
            raise UsageError("--fixed-pair wants SRC:DST") from None
        return ("fixed", s, d)
    return ("uniform-distinct",)


def _scheduler_spec(name: str, paths):
    """Accept both ``batchall-disp --paths 5`` and ``batchall-disp:5``."""
    base, _, k = name.partition(":")
    if k:
        try:
            paths = int(k)
        except ValueError:
            raise UsageError(f"bad path budget in scheduler {name!r}") from None
    if base not in SCHEDULER_NAMES:
        raise UsageError(f"unknown scheduler {base!r}")
    if base.endswith("-disp") and (paths is None or paths < 1):
        raise UsageError(f"{base} needs --paths K with K >= 1")
    return base, paths


def _effective_config(args, skip=("func", "config", "jobs")) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return json.dumps(cfg, sort_keys=True, default=str)


# -- subcommands -----------------------------------------------------------------


def cmd_topology(args) -> int:
    net = _load_topology(args.topology, args.capacity_gbps, args.mode)
    text = netgraph.serialize_topology(net)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run_once(args, net, trace, sched_name, paths, load):
    scheduler = make_scheduler(
        sched_name, net, paths=paths,
        keep_plans=bool(args.path_dump) or args.check,
    )
    result = simcore.run(
        net,
        scheduler,
        trace,
        warmup_fraction=args.warmup,
        load_req_per_hour=load,
        seed=args.seed,
        check_flows=args.check,
    )
    return scheduler, result


def cmd_run(args) -> int:
    net = _load_topology(args.topology, args.capacity_gbps, args.mode)
    sched_name, paths = _scheduler_spec(args.scheduler, args.paths)
    if args.trace:
        with open(args.trace) as f:
            trace = simcore.read_trace(f)
        load = args.rate  # replays carry a load label only when given
    else:
        load = args.rate if args.rate is not None else 100.0
        spec = simcore.WorkloadSpec(
            arrival_rate_per_hour=load,
            size_dist=_size_dist(args),
            num_requests=args.requests,
            seed=args.seed,
            pair_policy=_pair_policy(args),
        )
        trace = simcore.generate_trace(spec, net)
    echo = _effective_config(args)
    scheduler, result = _run_once(args, net, trace, sched_name, paths, load)

    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, args.log)
    with open(log_path, "w") as f:
        write_reservation_log(result.reservations, f, config_echo=echo)
    summary = dict(result.summary)
    summary["config"] = json.loads(echo)
    summary_path = os.path.join(args.out_dir, args.summary)
    with open(summary_path, "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    if args.path_dump:
        with open(os.path.join(args.out_dir, args.path_dump), "w") as f:
            _dump_paths(net, scheduler, f)
    if args.plot:
        plotting.plot_run_delays(
            result.reservations,
            os.path.join(args.out_dir, args.plot),
            title=f"{sched_name} on {args.topology}",
        )
    if result.violations:
        for v in result.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"wrote {log_path} and {summary_path}")
    return EXIT_OK


def _dump_paths(net, scheduler, fobj) -> None:
    """One line per job path: ``<job_id> <n1>n2>...> <rate_bps>``.

    Greedy reservations may switch paths between slots; each slot's flow is
    decomposed separately, so a job can contribute several line groups.
    """
    for r in scheduler.reservations:
        if not r.plan:
            continue
        for sl in r.plan:
            ps = pathdisp.decompose(
                net, sl.arc_rates, r.source, r.destination,
                k=len(sl.arc_rates) + 1,
            )
            for nodes, rate in ps.paths:
                fobj.write(f"{r.job_id} {'>'.join(nodes)} {rate!r}\n")


def _sweep_worker(params):
    (topology, capacity_gbps, mode, sched_name, paths, load, dist_args,
     requests, seed, warmup, fixed_pair) = params
    ns = argparse.Namespace(**dist_args)
    net = _load_topology(topology, capacity_gbps, mode)
    spec = simcore.WorkloadSpec(
        arrival_rate_per_hour=load,
        size_dist=_size_dist(ns),
        num_requests=requests,
        seed=seed,
        pair_policy=("fixed", *fixed_pair.split(":")) if fixed_pair else ("uniform-distinct",),
    )
    trace = simcore.generate_trace(spec, net)
    scheduler = make_scheduler(sched_name, net, paths=paths)
    result = simcore.run(
        net, scheduler, trace,
        warmup_fraction=warmup, load_req_per_hour=load, seed=seed,
    )
    return result.summary


def cmd_sweep(args) -> int:
    try:
        loads = [float(x) for x in args.loads.split(",") if x]
    except ValueError:
        raise UsageError(f"bad load list {args.loads!r}") from None
    if not loads:
        raise UsageError("empty load list")
    sched_specs = [
        _scheduler_spec(s.strip(), args.paths)
        for s in args.schedulers.split(",")
        if s.strip()
    ]
    if not sched_specs:
        raise UsageError("no schedulers given")
    dist_args = {
        "dist": args.dist, "pareto_beta": args.pareto_beta,
        "pareto_xm_tb": args.pareto_xm_tb, "pareto_gamma_tb": args.pareto_gamma_tb,
        "mean_tb": args.mean_tb, "size_tb": args.size_tb,
    }
    sorted_loads = sorted(set(loads))
    tasks = []
    for name, paths in sched_specs:
        for load in loads:
            # One trace per load (seed varies with the load, not the
            # scheduler) so schedulers face identical workloads.
            trace_seed = args.seed + sorted_loads.index(load)
            tasks.append(
                (args.topology, args.capacity_gbps, args.mode, name, paths,
                 load, dist_args, args.requests, trace_seed, args.warmup,
                 args.fixed_pair)
            )
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_worker, tasks))
    else:
        summaries = [_sweep_worker(t) for t in tasks]
    points = metrics.sweep_aggregate(summaries)
    echo = _effective_config(args)
    with open(args.out, "w") as f:
        metrics.write_loadpoints_csv(points, f, config_echo=echo)
    if args.plot:
        bound = None
        if args.bound_line:
            net = _load_topology(args.topology, args.capacity_gbps, args.mode)
            mean_bits = _size_dist(argparse.Namespace(**dist_args)).mean_bits
            bound = metrics.fluid_bound(net, mean_bits)
        plotting.plot_sweep(points, args.plot, fluid_bound_req_hr=bound,
                            title=f"{args.topology}")
    print(f"wrote {args.out} ({len(points)} rows)")
    return EXIT_OK


def cmd_bound(args) -> int:
    net = _load_topology(args.topology, args.capacity_gbps, args.mode)
    policy = ("fixed", *args.fixed_pair.split(":")) if args.fixed_pair else ("uniform-distinct",)
    try:
        bound = metrics.fluid_bound(net, args.mean_tb * TB_BITS, policy)
    except DisconnectedPairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"{bound!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    """Competitive-ratio check on a bandwidth-augmented network."""
    from .schedulers import verify_competitive

    net = _load_topology(args.topology, args.capacity_gbps, args.mode)
    if args.trace:
        with open(args.trace) as f:
            trace = simcore.read_trace(f)
    else:
        spec = simcore.WorkloadSpec(
            arrival_rate_per_hour=args.rate,
            size_dist=_size_dist(args),
            num_requests=args.requests,
            seed=args.seed,
            pair_policy=_pair_policy(args),
        )
        trace = simcore.generate_trace(spec, net)
    algorithm = args.scheduler
    if algorithm not in ("batchall", "batchlim"):
        raise UsageError("verify covers batchall and batchlim")
    rep = verify_competitive(net, trace, args.eps, algorithm)
    print(f"algorithm {rep.algorithm} eps {rep.eps!r} bound {rep.bound!r}")
    print(f"max_delay_s {rep.max_delay!r}")
    print(f"optimal_delay_lower_bound_s {rep.lower_bound!r}")
    print(f"ratio {rep.ratio!r}")
    if algorithm == "batchlim":
        print(f"promises_kept {str(rep.promises_kept).lower()}")
        print(f"window_growth_ok {str(rep.window_growth_ok).lower()}")
    ok = rep.ok and rep.promises_kept and rep.window_growth_ok
    print("ok" if ok else "VIOLATION")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_decompose(args) -> int:
    net = _load_topology(args.topology, args.capacity_gbps, args.mode)
    if args.alpha is not None:
        k = math.ceil(args.alpha * net.num_arcs)
    else:
        k = args.paths
    if k is None or k < 1:
        raise UsageError("decompose needs --paths K >= 1 or --alpha A > 0")
    mf = max_flow_value(net, args.src, args.dst)
    if mf.value <= 0:
        print("error: disconnected pair", file=sys.stderr)
        return EXIT_VIOLATION
    ps = pathdisp.decompose(net, mf.arc_rates, args.src, args.dst, k)
    frac = ps.achieved / ps.source_flow
    guarantee = pathdisp.dispersion_fraction(k, net.num_arcs)
    print(f"max_flow_bps {mf.value!r}")
    print(f"paths {len(ps.paths)} budget {k}")
    for nodes, rate in ps.paths:
        print(f"  {'>'.join(nodes)} {rate!r}")
    print(f"achieved_fraction {frac!r}")
    print(f"guaranteed_fraction {guarantee!r}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _add_topology_flags(p):
    p.add_argument("--topology", required=True,
                   help="generator spec (clique:8, ring:8, star:6, lambdarail) "
                        "or a topology file path (file:PATH works too)")
    p.add_argument("--capacity-gbps", type=float, default=None,
                   help="override generator link capacity")
    p.add_argument("--mode", choices=netgraph.MODES, default=None,
                   help="override generator edge semantics")


def _add_workload_flags(p):
    p.add_argument("--dist", choices=("pareto", "exponential", "constant"),
                   default="pareto")
    p.add_argument("--pareto-beta", type=float, default=2.5)
    p.add_argument("--pareto-xm-tb", type=float, default=1.48)
    p.add_argument("--pareto-gamma-tb", type=float, default=6.25e-3)
    p.add_argument("--mean-tb", type=float, default=2.475,
                   help="mean size for the exponential distribution, TB")
    p.add_argument("--size-tb", type=float, default=2.475,
                   help="size for the constant distribution, TB")
    p.add_argument("--requests", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--warmup", type=float, default=0.1,
                   help="fraction of completions excluded from statistics")
    p.add_argument("--fixed-pair", default=None, metavar="SRC:DST",
                   help="send all traffic between one pair instead of "
                        "uniform distinct pairs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arsched",
        description="Advance-reservation scheduling simulator",
    )
    parser.add_argument("--config", default=None,
                        help="JSON file with flag defaults (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="emit a topology document")
    _add_topology_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("run", help="simulate one scheduler on one workload")
    _add_topology_flags(p)
    _add_workload_flags(p)
    p.add_argument("--scheduler", required=True,
                   help="|".join(SCHEDULER_NAMES) + " (disp variants accept "
                        "NAME:K or --paths)")
    p.add_argument("--paths", type=int, default=None,
                   help="path budget for dispersion-bounded schedulers")
    p.add_argument("--rate", type=float, default=None,
                   help="arrival rate, requests/hour (default 100)")
    p.add_argument("--trace", default=None,
                   help="replay a trace CSV instead of generating one")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--log", default="reservations.csv")
    p.add_argument("--summary", default="summary.json")
    p.add_argument("--path-dump", default=None,
                   help="write per-job path lines to this file")
    p.add_argument("--plot", default=None, metavar="PNG",
                   help="render a delay timeline figure")
    p.add_argument("--check", action=argparse.BooleanOptionalAction,
                   default=True, help="validate committed flows")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a load grid and aggregate to CSV")
    _add_topology_flags(p)
    _add_workload_flags(p)
    p.add_argument("--schedulers", required=True,
                   help="comma-separated scheduler names")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--loads", required=True,
                   help="comma-separated loads, requests/hour")
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel runs (results stay deterministic)")
    p.add_argument("--plot", default=None, metavar="PNG")
    p.add_argument("--bound-line", action="store_true",
                   help="draw the fluid bound on the sweep figure")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", help="print the fluid capacity bound, req/hr")
    _add_topology_flags(p)
    p.add_argument("--mean-tb", type=float, default=2.475)
    p.add_argument("--fixed-pair", default=None, metavar="SRC:DST")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("decompose", help="bounded-dispersion path extraction")
    _add_topology_flags(p)
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="path budget as a fraction of the arc count")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("verify", help="check delay competitiveness against "
                                      "an augmented-bandwidth run")
    _add_topology_flags(p)
    _add_workload_flags(p)
    p.add_argument("--scheduler", default="batchall",
                   help="batchall or batchlim")
    p.add_argument("--eps", type=float, required=True,
                   help="capacity augmentation factor")
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def _apply_config_file(parser, argv):
    """Seed parser defaults from --config JSON; explicit flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad config file: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    flat = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action_parser in [parser] + [
        sp for a in parser._actions if isinstance(a, argparse._SubParsersAction)
        for sp in a.choices.values()
    ]:
        keys = {a.dest for a in action_parser._actions}
        action_parser.set_defaults(**{k: v for k, v in flat.items() if k in keys})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TopologyError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
