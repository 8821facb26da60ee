"""Command-line driver: instance generation, training, bound traces, solving,
and benchmarking.  All outputs are UTF-8 CSV or JSON; every command is
deterministic under a fixed seed except for wallclock columns.

Exit codes: 0 success, 2 usage error, 3 infeasible, 4 limit hit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .encoding import encode_instance
from .errors import Infeasible, LagboundError
from .instances import (
    PartialAssignment,
    generate_mkp,
    generate_ssp,
    read_instance,
    write_instance,
)
from .lagrangian import (
    Multipliers,
    SubgradientConfig,
    default_sg_config,
    evaluate_bound,
    optimize_multipliers,
)
from .neural import gnn_forward, load_model, save_model
from .solver import BoundingMode, SolveStatus, solve
from .training import Dataset, TrainConfig, augment, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4

BENCH_SCHEMA = "bench/v1"
TRACE_SCHEMA = "boundtrace/v1"
TRAINLOG_SCHEMA = "trainlog/v1"


def _sg_config_from_args(args, instance, root: bool) -> SubgradientConfig:
    base = default_sg_config(instance, root=root)
    return SubgradientConfig(
        iterations=args.sg_iters if root and args.sg_iters is not None else
        (args.sg_node_iters if not root and args.sg_node_iters is not None else base.iterations),
        alpha0=args.sg_alpha0 if args.sg_alpha0 is not None else base.alpha0,
        decay=args.sg_decay if args.sg_decay is not None else base.decay,
    )


def cmd_generate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        if args.family == "mkp":
            instance = generate_mkp(args.items, args.dims, args.tightness, seed)
        else:
            instance = generate_ssp(args.periods, args.activities, args.states,
                                    args.undef_fraction, args.final_fraction,
                                    args.constraints, seed)
        write_instance(instance, out_dir / f"{args.family}_{seed}.json")
    print(f"wrote {args.count} {args.family} instances to {out_dir}")
    return EXIT_OK


def _load_dir(data_dir: Path) -> list:
    paths = sorted(p for p in data_dir.iterdir() if p.suffix == ".json")
    if not paths:
        raise LagboundError(f"no .json instances under {data_dir}")
    return [read_instance(p) for p in paths]


def cmd_train(args) -> int:
    instances = _load_dir(Path(args.data))
    families = {inst.family for inst in instances}
    if len(families) != 1:
        print(f"error: training data mixes families {sorted(families)}", file=sys.stderr)
        return EXIT_USAGE
    cfg = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        augmentation_depth=args.augment_depth,
        batch_size=args.batch_size,
        checkpoint_every=args.checkpoint_every,
        init_model=args.init_model,
    )
    entries = []
    for i, inst in enumerate(instances):
        entries.extend(augment(inst, cfg.augmentation_depth, args.augment_count,
                               seed=args.seed * 100003 + i))
    dataset = Dataset.of(entries)
    if args.init_model:
        init, _ = load_model(args.init_model)
        if init.family != dataset.family:
            print(f"error: init model is {init.family}, data is {dataset.family}", file=sys.stderr)
            return EXIT_USAGE
    out_path = Path(args.out)

    def checkpoint(epoch: int, params) -> None:
        meta = {"family": dataset.family, "seed": args.seed, "epochs": epoch}
        save_model(params, meta, out_path.with_suffix(out_path.suffix + f".ck{epoch}"))

    params, report = train(dataset, cfg, on_checkpoint=checkpoint if args.checkpoint_every else None)
    meta = {
        "family": dataset.family,
        "seed": args.seed,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "augmentation_depth": cfg.augmentation_depth,
        "num_instances": len(instances),
        "num_entries": len(dataset.entries),
        "skipped_infeasible": report.skipped_infeasible,
    }
    save_model(params, meta, out_path)
    if args.history:
        with open(args.history, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# schema: {TRAINLOG_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "entry", "bound", "wallclock"])
            for epoch, (entry, bound, wall) in enumerate(
                    zip(report.entry_ids, report.history, report.wallclock), start=1):
                writer.writerow([epoch, entry, f"{bound:.9g}", f"{wall:.3f}"])
    print(f"trained {cfg.epochs} epochs on {len(dataset.entries)} entries -> {out_path}")
    return EXIT_OK


def cmd_bound(args) -> int:
    instance = read_instance(args.instance)
    partial = PartialAssignment.empty(instance.num_variables)
    needs_model = args.mu_source in ("model", "model+sg")
    if needs_model and not args.model:
        print(f"error: --mu-source {args.mu_source} requires --model", file=sys.stderr)
        return EXIT_USAGE
    if needs_model:
        params, _ = load_model(args.model)
        if params.family != instance.family:
            print(f"error: {params.family} model, {instance.family} instance", file=sys.stderr)
            return EXIT_USAGE
        mu0, _ = gnn_forward(params, encode_instance(instance, partial))
    else:
        mu0 = Multipliers.zeros(instance)

    rows: list[tuple] = []
    status = "ok"
    try:
        if args.mu_source in ("sg", "model+sg"):
            cfg = _sg_config_from_args(args, instance, root=True)
            _, _, trace = optimize_multipliers(instance, partial, mu0, cfg)
            best = float("inf")
            for it, bound in enumerate(trace):
                best = min(best, bound)
                rows.append((it, f"{bound:.9g}", f"{best:.9g}", "ok"))
        else:
            result = evaluate_bound(instance, partial, mu0)
            rows.append((0, f"{result.bound:.9g}", f"{result.bound:.9g}", "ok"))
    except Infeasible:
        status = "infeasible"
        rows.append(("", "", "", "infeasible"))

    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(f"# schema: {TRACE_SCHEMA}\n")
        writer = csv.writer(out)
        writer.writerow(["iteration", "bound", "best_bound", "status"])
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_INFEASIBLE if status == "infeasible" else EXIT_OK


def _load_model_for(args, instance) -> Optional[object]:
    mode = BoundingMode.parse(args.mode)
    if not mode.uses_model:
        return None
    if not args.model:
        raise LagboundError(f"mode {mode.value} requires --model")
    params, _ = load_model(args.model)
    if params.family != instance.family:
        raise LagboundError(f"{params.family} model cannot bound a {instance.family} instance")
    return params


def cmd_solve(args) -> int:
    instance = read_instance(args.instance)
    try:
        model = _load_model_for(args, instance)
    except LagboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = solve(
        instance,
        BoundingMode.parse(args.mode),
        model,
        time_limit=args.time_limit,
        max_nodes=args.max_nodes,
        sg_root=_sg_config_from_args(args, instance, root=True),
        sg_node=_sg_config_from_args(args, instance, root=False),
    )
    doc = result.to_dict()
    print(json.dumps(doc, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    if result.status == SolveStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    if result.status == SolveStatus.TIMED_OUT:
        return EXIT_LIMIT
    return EXIT_OK


def cmd_bench(args) -> int:
    data_dir = Path(args.data)
    paths = sorted(p for p in data_dir.iterdir() if p.suffix == ".json")
    if not paths:
        print(f"error: no .json instances under {data_dir}", file=sys.stderr)
        return EXIT_USAGE
    modes = [BoundingMode.parse(m.strip()) for m in args.modes.split(",") if m.strip()]
    instances = [(p.stem, read_instance(p)) for p in paths]

    model_cache: dict[str, object] = {}

    def model_for(instance):
        if instance.family not in model_cache:
            if not args.model:
                raise LagboundError("a learned mode requires --model")
            params, _ = load_model(args.model)
            if params.family != instance.family:
                raise LagboundError(f"{params.family} model, {instance.family} instances")
            model_cache[instance.family] = params
        return model_cache[instance.family]

    rows = []
    solved: dict[str, dict[str, SolveStatus]] = {}
    metrics: dict[tuple[str, str], tuple] = {}
    for name, instance in instances:
        for mode in modes:
            try:
                model = model_for(instance) if mode.uses_model else None
                result = solve(
                    instance, mode, model,
                    time_limit=args.time_limit,
                    max_nodes=args.max_nodes,
                    sg_root=_sg_config_from_args(args, instance, root=True),
                    sg_node=_sg_config_from_args(args, instance, root=False),
                )
            except LagboundError as exc:
                rows.append([name, mode.value, "error", "", "", "", "", str(exc)])
                continue
            root_gap = ""
            if (result.status == SolveStatus.OPTIMAL and result.root_bound is not None
                    and result.objective):
                root_gap = f"{100.0 * (result.root_bound - result.objective) / result.objective:.4f}"
            root_bound = f"{result.root_bound:.9g}" if result.root_bound is not None else ""
            rows.append([
                name, mode.value, result.status.value,
                result.objective if result.objective is not None else "",
                result.node_count, f"{result.wallclock:.4f}", root_bound, root_gap,
            ])
            solved.setdefault(name, {})[mode.value] = result.status
            metrics[(name, mode.value)] = (result.node_count, result.wallclock)

    common = [
        name for name, _ in instances
        if all(solved.get(name, {}).get(m.value) == SolveStatus.OPTIMAL for m in modes)
    ]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(f"# schema: {BENCH_SCHEMA}\n")
        writer = csv.writer(out)
        writer.writerow(["instance", "mode", "status", "objective", "nodes",
                         "time_seconds", "root_bound", "root_gap_percent"])
        writer.writerows(rows)
        for mode in modes:
            n_solved = sum(
                1 for name, _ in instances
                if solved.get(name, {}).get(mode.value) == SolveStatus.OPTIMAL
            )
            if common:
                mean_nodes = np.mean([metrics[(name, mode.value)][0] for name in common])
                mean_time = np.mean([metrics[(name, mode.value)][1] for name in common])
                out.write(f"# summary mode={mode.value} solved={n_solved}/{len(instances)} "
                          f"common={len(common)} mean_nodes={mean_nodes:.1f} "
                          f"mean_time={mean_time:.4f}\n")
            else:
                out.write(f"# summary mode={mode.value} solved={n_solved}/{len(instances)} "
                          f"common=0 mean_nodes= mean_time=\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lagbound",
        description="Decomposition dual bounds with sub-gradient or learned multipliers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write synthetic instance files")
    p_gen.add_argument("--family", choices=["mkp", "ssp"], required=True)
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--seed", type=int, default=0, help="base seed; instance k uses seed+k")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--items", type=int, default=30)
    p_gen.add_argument("--dims", type=int, default=5)
    p_gen.add_argument("--tightness", type=float, default=0.5)
    p_gen.add_argument("--periods", type=int, default=50)
    p_gen.add_argument("--activities", type=int, default=10)
    p_gen.add_argument("--states", type=int, default=20)
    p_gen.add_argument("--undef-fraction", type=float, default=0.3)
    p_gen.add_argument("--final-fraction", type=float, default=0.5)
    p_gen.add_argument("--constraints", type=int, default=2)
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="train a multiplier model")
    p_train.add_argument("--data", required=True, help="directory of instance .json files")
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--epochs", type=int, default=100)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--augment-depth", type=int, default=5)
    p_train.add_argument("--augment-count", type=int, default=1,
                         help="entries per instance (first is always the unfixed instance)")
    p_train.add_argument("--batch-size", type=int, default=1)
    p_train.add_argument("--checkpoint-every", type=int, default=0)
    p_train.add_argument("--init-model", default=None, help="warm-start weights (fine-tuning)")
    p_train.add_argument("--history", default=None, help="training log CSV path")
    p_train.set_defaults(func=cmd_train)

    p_bound = sub.add_parser("bound", help="emit a root bound trace CSV")
    p_bound.add_argument("--instance", required=True)
    p_bound.add_argument("--mu-source", choices=["zero", "model", "sg", "model+sg"], default="sg")
    p_bound.add_argument("--model", default=None)
    p_bound.add_argument("--sg-iters", type=int, default=None)
    p_bound.add_argument("--sg-node-iters", type=int, default=None)
    p_bound.add_argument("--sg-alpha0", type=float, default=None)
    p_bound.add_argument("--sg-decay", type=float, default=None)
    p_bound.add_argument("--out", default=None, help="CSV path (default stdout)")
    p_bound.set_defaults(func=cmd_bound)

    def add_solve_flags(p):
        p.add_argument("--mode", default="cp",
                       help="cp, cp+sg, cp+learn-all, cp+learn-all+sg, cp+learn-root+sg")
        p.add_argument("--model", default=None)
        p.add_argument("--time-limit", type=float, default=None)
        p.add_argument("--max-nodes", type=int, default=None)
        p.add_argument("--sg-iters", type=int, default=None, help="root iterations")
        p.add_argument("--sg-node-iters", type=int, default=None)
        p.add_argument("--sg-alpha0", type=float, default=None)
        p.add_argument("--sg-decay", type=float, default=None)

    p_solve = sub.add_parser("solve", help="solve one instance to optimality")
    p_solve.add_argument("--instance", required=True)
    add_solve_flags(p_solve)
    p_solve.add_argument("--out", default=None, help="also write the result JSON here")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run modes over an instance directory")
    p_bench.add_argument("--data", required=True)
    p_bench.add_argument("--modes", default="cp,cp+sg", help="comma-separated mode list")
    add_solve_flags(p_bench)
    p_bench.add_argument("--out", default=None, help="CSV path (default stdout)")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LagboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
