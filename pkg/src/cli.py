"""Command-line surface.

Every subcommand reads its inputs, runs one pipeline operation and emits
a JSON report (stdout, or ``--out``). Exit codes: 0 success, 1 domain
error (message on stderr), 2 usage error.

Examples:
  fdg volume --input train.bin --class-id 3
  fdg fdg --base base.csv --aug aug.csv
  fdg partition --counts counts.json --threshold 0.9
  fdg sweep --input train.bin --mode stochastic --m-generate 100 --m-keep 50 --out-dir sets/
  fdg experiment --seeds 10 --csv experiment.csv --no-timestamp
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import structlog

from src.augmenters import run_augmenter
from src.config import RunConfig, get_settings, load_json_config, parse_model
from src.dataset_io import read_embeddings, write_embeddings
from src.embeddings import EmbeddingSet
from src.errors import FdgError, InvalidConfig, MissingClass
from src.fdg_metrics import additive_volume_gain, fdg, fdg_delta_form, fdg_tail
from src.linalg_core import SampleMatrix, center, logdet_regularized_gram, manifold_volume
from src.logging_config import configure_logging
from src.partitioning import imbalance_factor, partition_head_tail, semantic_scale_profile
from src.reports import build_report, emit_report, write_json, write_rows_csv
from src.selection import build_candidate_pools, fdg_sweep, select_tail
from src.synth import ExperimentConfig, SynthConfig, gen_longtail, imbalance_sweep, inverted_u_experiment

logger = structlog.get_logger(__name__)

Outcome = Tuple[Dict[str, Any], Any, Optional[int]]

RUN_FLAGS = ("k", "threshold", "m_generate", "m_keep", "mode", "subsample",
             "direction", "pool_multiplier", "seed")
AUGMENTER_FLAGS = ("kind", "alpha", "kappa")


# ============================================================
# Helpers
# ============================================================

def _run_config(args: argparse.Namespace) -> RunConfig:
    """RunConfig from --config, with explicit flags taking precedence."""
    base = load_json_config(args.config, RunConfig) if args.config else RunConfig()
    overrides = {f: getattr(args, f) for f in RUN_FLAGS if getattr(args, f, None) is not None}
    if getattr(args, "incremental", False):
        overrides["incremental"] = True
    augmenter = {f: getattr(args, f) for f in AUGMENTER_FLAGS if getattr(args, f, None) is not None}
    if augmenter:
        overrides["augmenter"] = {**base.augmenter.model_dump(), **augmenter}
    if not overrides:
        return base
    return parse_model(RunConfig, {**base.model_dump(), **overrides}, source="command line")


def _select(dataset: EmbeddingSet, class_id: Optional[int]) -> SampleMatrix:
    if class_id is None:
        return dataset.as_matrix()
    if class_id not in dataset.class_ids():
        raise MissingClass(f"class {class_id} not present in input")
    return dataset.class_matrix(class_id)


def _load_counts(path: Path) -> Dict[int, int]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfig(f"cannot read counts {path}: {e}") from e
    try:
        if isinstance(payload, list):
            return {i: int(n) for i, n in enumerate(payload)}
        if isinstance(payload, dict):
            return {int(c): int(n) for c, n in payload.items()}
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"counts {path} must map class ids to integers: {e}") from e
    raise InvalidConfig(f"counts {path} must be a JSON list or object")


def _sets_to_embeddings(samples_by_class: Dict[int, Any]) -> Optional[EmbeddingSet]:
    non_empty = {c: s for c, s in samples_by_class.items() if len(s)}
    return EmbeddingSet.from_class_arrays(non_empty) if non_empty else None


def _write_optional(dataset: Optional[EmbeddingSet], path: Optional[Path]) -> Optional[str]:
    if path is None or dataset is None:
        return None
    write_embeddings(dataset, path)
    return str(path)


def _tail_report(dataset: EmbeddingSet, partition, sets) -> Any:
    base_by_class = {c: dataset.class_matrix(c) for c in partition.tail}
    return fdg_tail(base_by_class, {c: s.matrix() for c, s in sets.items() if s.n}, partition)


# ============================================================
# Subcommands
# ============================================================

def cmd_volume(args: argparse.Namespace) -> Outcome:
    dataset = read_embeddings(args.input)
    m = _select(dataset, args.class_id)
    if args.no_center:
        volume = manifold_volume(m, check_centered=False)
    else:
        volume = 0.5 * logdet_regularized_gram(center(m), side=args.side)
    config = {"input": str(args.input), "class_id": args.class_id, "side": args.side, "center": not args.no_center}
    return config, {"volume": volume, "n": m.n, "d": m.d}, None


def cmd_fdg(args: argparse.Namespace) -> Outcome:
    base = _select(read_embeddings(args.base), args.class_id)
    aug = _select(read_embeddings(args.aug), args.class_id)
    result = fdg(base, aug)
    results = {
        **result.model_dump(),
        "delta_form": fdg_delta_form(base, aug),
        "additive_volume_gain": additive_volume_gain(base, aug),
    }
    config = {"base": str(args.base), "aug": str(args.aug), "class_id": args.class_id}
    return config, results, None


def cmd_partition(args: argparse.Namespace) -> Outcome:
    cfg = _run_config(args)
    if args.counts is not None:
        counts = _load_counts(args.counts)
        source = str(args.counts)
    else:
        counts = read_embeddings(args.input).counts()
        source = str(args.input)
    partition = partition_head_tail(counts, cfg.threshold)
    results = {**partition.model_dump(), "imbalance_factor": imbalance_factor(counts)}
    return {"source": source, "threshold": cfg.threshold}, results, None


def cmd_profile(args: argparse.Namespace) -> Outcome:
    dataset = read_embeddings(args.input)
    profile = semantic_scale_profile(dataset.by_class(), threads=args.threads)
    return {"input": str(args.input)}, profile.model_dump(), None


def cmd_augment(args: argparse.Namespace) -> Outcome:
    cfg = _run_config(args)
    dataset = read_embeddings(args.input)
    partition = partition_head_tail(dataset.counts(), cfg.threshold)
    sets = run_augmenter(cfg.augmenter, dataset, partition, cfg.seed, quotas=cfg.quotas, threads=args.threads)
    report = _tail_report(dataset, partition, sets)

    out = _sets_to_embeddings({c: s.samples for c, s in sets.items()})
    if out is not None and args.include_base:
        out = EmbeddingSet.concat([dataset, out])
    results = {
        "fdg_tail": report.fdg_tail,
        "per_class": {
            c: {"n": s.n, "fdg": report.per_class[c].fdg, "method": s.method, "parameters": s.parameters}
            for c, s in sets.items()
        },
        "output": _write_optional(out, args.out_data),
    }
    return {"input": str(args.input), **cfg.model_dump(mode="json")}, results, cfg.seed


def cmd_select(args: argparse.Namespace) -> Outcome:
    cfg = _run_config(args)
    dataset = read_embeddings(args.input)
    partition = partition_head_tail(dataset.counts(), cfg.threshold)
    pools = build_candidate_pools(dataset, cfg.augmenter, partition, cfg.seed, k=cfg.k,
                                  pool_multiplier=cfg.pool_multiplier, quotas=cfg.quotas,
                                  threads=args.threads)
    selected = select_tail(pools, cfg.direction, incremental=cfg.incremental)
    sets = {c: aug for c, (aug, _) in selected.items()}
    report = _tail_report(dataset, partition, sets)

    results = {
        "fdg_tail": report.fdg_tail,
        "plans": {c: plan.model_dump() for c, (_, plan) in selected.items()},
        "output": _write_optional(_sets_to_embeddings({c: s.samples for c, s in sets.items()}), args.out_data),
    }
    return {"input": str(args.input), **cfg.model_dump(mode="json")}, results, cfg.seed


def cmd_sweep(args: argparse.Namespace) -> Outcome:
    cfg = _run_config(args)
    dataset = read_embeddings(args.input)
    partition = partition_head_tail(dataset.counts(), cfg.threshold)
    sweep = fdg_sweep(
        dataset, cfg.augmenter, partition, cfg.mode, cfg.m_generate, cfg.m_keep, cfg.seed,
        k=cfg.k, pool_multiplier=cfg.pool_multiplier, subsample=cfg.subsample,
        incremental=cfg.incremental, quotas=cfg.quotas, threads=args.threads,
    )

    index = []
    for rank, entry in enumerate(sweep.sets):
        path = None
        if args.out_dir is not None:
            path = Path(args.out_dir) / f"set_{rank:03d}.{args.format}"
            _write_optional(_sets_to_embeddings({c: s.samples for c, s in entry.sets.items()}), path)
        index.append({
            "rank": rank,
            "file": None if path is None else path.name,
            "fdg_tail": entry.fdg,
            "per_class_fdg": entry.per_class_fdg,
            "run": entry.run,
            "seed": entry.seed,
            "setting": entry.setting,
        })
    if args.out_dir is not None:
        write_json(index, Path(args.out_dir) / "index.json")

    results = {"mode": sweep.mode, "generated": sweep.generated, "kept": len(sweep.sets), "index": index}
    return {"input": str(args.input), **cfg.model_dump(mode="json")}, results, cfg.seed


def cmd_gen(args: argparse.Namespace) -> Outcome:
    base = load_json_config(args.config, SynthConfig) if args.config else SynthConfig()
    flags = {
        "num_classes": args.classes,
        "dim": args.dim,
        "imbalance_factor": args.imbalance_factor,
        "n_max": args.n_max,
        "profile": args.profile,
        "observed_fraction": args.observed_fraction,
        "seed": args.seed,
    }
    overrides = {k: v for k, v in flags.items() if v is not None}
    cfg = parse_model(SynthConfig, {**base.model_dump(), **overrides}, source="command line") if overrides else base

    data = gen_longtail(cfg)
    write_embeddings(data.train, args.out_train)
    write_embeddings(data.test, args.out_test)
    results = {
        "counts": data.counts,
        "tail_classes": data.tail_classes,
        "n_train": data.train.n,
        "n_test": data.test.n,
        "train": str(args.out_train),
        "test": str(args.out_test),
    }
    return cfg.model_dump(mode="json"), results, cfg.seed


def cmd_experiment(args: argparse.Namespace) -> Outcome:
    cfg = load_json_config(args.config, ExperimentConfig) if args.config else ExperimentConfig()
    if args.seeds is not None or args.seed is not None:
        payload = cfg.model_dump()
        if args.seeds is not None:
            payload["seeds"] = args.seeds
        if args.seed is not None:
            payload["synth"]["seed"] = args.seed
        cfg = parse_model(ExperimentConfig, payload, source="command line")

    report = inverted_u_experiment(cfg, threads=args.threads)
    results: Dict[str, Any] = report.model_dump()
    if args.imbalance_factors:
        points = imbalance_sweep(cfg, args.imbalance_factors, threads=args.threads)
        results["imbalance_sweep"] = [p.model_dump() for p in points]
    if args.csv is not None:
        write_rows_csv(
            args.csv,
            ["regime", "seed", "fdg_tail", "balanced_accuracy"],
            [(r.regime, r.seed, r.fdg_tail, r.balanced_accuracy) for r in report.rows],
        )
        results["csv"] = str(args.csv)
    return cfg.model_dump(mode="json"), results, cfg.synth.seed


# ============================================================
# Parser
# ============================================================

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config document")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="report path (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the report timestamp")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--threads", type=int, help="worker cap (0 = auto; default FDG_THREADS)")
    return common


def _add_run_flags(p: argparse.ArgumentParser, *, augmenter: bool = True) -> None:
    p.add_argument("--threshold", type=float, help="head share threshold (default 0.9)")
    if augmenter:
        p.add_argument("--kind", choices=["remix_mix", "patch_paste", "variance_transfer", "feature_fusion"])
        p.add_argument("--alpha", type=float, help="Beta(alpha, alpha) parameter")
        p.add_argument("--kappa", type=float, help="relative-head multiple for remix_mix")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="fdg",
        description="Feature diversity gain toolkit for long-tailed embedding sets",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Examples:", 1)[1] if __doc__ else None,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("volume", parents=[common], help="manifold volume of a sample set")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--class-id", type=int)
    p.add_argument("--side", choices=["covariance", "gram"])
    p.add_argument("--no-center", action="store_true", help="evaluate the matrix as given")
    p.set_defaults(handler=cmd_volume)

    p = sub.add_parser("fdg", parents=[common], help="FDG of an augmentation against a base")
    p.add_argument("--base", type=Path, required=True)
    p.add_argument("--aug", type=Path, required=True)
    p.add_argument("--class-id", type=int)
    p.set_defaults(handler=cmd_fdg)

    p = sub.add_parser("partition", parents=[common], help="head/tail partition")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--counts", type=Path, help="JSON list or {class: count} object")
    source.add_argument("--input", type=Path, help="embedding file to count labels from")
    _add_run_flags(p, augmenter=False)
    p.set_defaults(handler=cmd_partition)

    p = sub.add_parser("profile", parents=[common], help="imbalance factor and per-class semantic scale")
    p.add_argument("--input", type=Path, required=True)
    p.set_defaults(handler=cmd_profile)

    p = sub.add_parser("augment", parents=[common], help="augment tail classes to their balance quota")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out-data", type=Path, help="where to write augmented samples")
    p.add_argument("--include-base", action="store_true", help="write base + augmented samples")
    _add_run_flags(p)
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("select", parents=[common], help="greedy FDG-directed selection from a candidate pool")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out-data", type=Path)
    p.add_argument("--direction", choices=["maximize", "minimize"])
    p.add_argument("--k", type=int, help="clusters per pool (default 500, clamped to pool size)")
    p.add_argument("--pool-multiplier", type=float)
    p.add_argument("--incremental", action="store_true", help="evaluate candidates from running sums")
    _add_run_flags(p)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("sweep", parents=[common], help="generate many augmented sets, keep a uniform FDG spread")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, help="directory for kept set files and index.json")
    p.add_argument("--format", choices=["bin", "csv"], default="bin")
    p.add_argument("--mode", choices=["stochastic", "greedy"])
    p.add_argument("--m-generate", type=int)
    p.add_argument("--m-keep", type=int)
    p.add_argument("--subsample", choices=["rank", "value"])
    p.add_argument("--k", type=int)
    p.add_argument("--pool-multiplier", type=float)
    p.add_argument("--incremental", action="store_true")
    _add_run_flags(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("gen", parents=[common], help="synthetic long-tailed train/test sets")
    p.add_argument("--out-train", type=Path, required=True)
    p.add_argument("--out-test", type=Path, required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--imbalance-factor", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--profile", choices=["exp", "step"])
    p.add_argument("--observed-fraction", type=float)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("experiment", parents=[common], help="low/mid/high FDG regimes vs balanced accuracy")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--csv", type=Path, help="flat (regime, seed, fdg_tail, balanced_accuracy) rows")
    p.add_argument("--imbalance-factors", type=float, nargs="+", help="also record regimes at these IFs")
    p.set_defaults(handler=cmd_experiment)

    return parser


# ============================================================
# Dispatch
# ============================================================

def cli_dispatch(argv: List[str]) -> int:
    """Parse ``argv``, run one subcommand, emit its report. Returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    settings = get_settings()
    configure_logging(args.log_level or settings.log_level)
    handler: Callable[[argparse.Namespace], Outcome] = args.handler

    try:
        config, results, seed = handler(args)
        report = build_report(args.command, config, results, seed,
                              timestamp=settings.timestamps and not args.no_timestamp)
        emit_report(report, args.out)
    except FdgError as e:
        logger.error("command_failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return 1

    logger.info("command_complete", command=args.command)
    return 0
