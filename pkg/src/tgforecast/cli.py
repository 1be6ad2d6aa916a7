"""Command-line entry point.

Exit status: 0 success, 2 configuration, 3 ingestion, 4 numeric, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import analysis
from .config import DataPaths, RunConfig, load_run_config
from .dataio import RegionDataset, write_embeddings, write_stats_csv, write_stringency_csv
from .errors import IO_EXIT_CODE, ConfigError, ForecastError
from .evaluation import EvalReport, evaluate_baseline, evaluate_model, format_summary_table, summarize, write_reports
from .experiment import grid, run_jobs
from .model import VARIANTS, load_checkpoint
from .synth import synth_generate
from .training import Normalizers, TrainConfig


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _run_config(args) -> RunConfig:
    run = load_run_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed:
        changes["seeds"] = tuple(args.seed)
    if args.horizon:
        changes["horizons"] = tuple(args.horizon)
    if args.data:
        changes["data"] = DataPaths.from_dir(args.data)
    if args.deterministic:
        changes["workers"] = 1
    if changes:
        run = replace(run, **changes)
    return run


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    run = _run_config(args)
    synth = replace(run.synth, seed=args.seed[0]) if args.seed else run.synth
    ds = synth_generate(synth)
    out = _out_dir(args)
    write_stats_csv(out / "stats.csv", ds.dates, ds.stats)
    write_stringency_csv(out / "stringency.csv", ds.dates, ds.regulations[:, :2])
    write_embeddings(out / "embeddings.mgeb", ds.embeddings, ds.dates[0], ds.region,
                     f"synthetic seed={synth.seed} lag={synth.lag} informative={synth.informative_fraction}")
    print(f"wrote {len(ds)} days, {ds.n_nodes} nodes x {ds.emb_dim} features to {out}")
    return 0


def cmd_correlate(args) -> int:
    run = _run_config(args)
    ds = run.dataset()
    max_lag = run.max_lag if args.max_lag is None else args.max_lag
    rows = analysis.correlation_table(ds, max_lag)
    out = _out_dir(args)
    analysis.write_correlation_csv(out / "correlation.csv", rows)
    for (sig, tgt), row in analysis.best_lags(rows).items():
        print(f"{sig:>28s} -> {tgt:<18s} best lag {row.lag:3d}  r={row.r:+.4f}")
    return 0


def _variant(args, run: RunConfig) -> str:
    return args.variant or run.variant


def cmd_train(args) -> int:
    run = _run_config(args)
    ds = run.dataset()
    jobs = grid([_variant(args, run)], run.seeds, run.horizons)
    results = run_jobs(ds, run, jobs, _out_dir(args), run.workers)
    for r in results:
        print(f"{r.job.stem}: best epoch {r.best_epoch}, val MSE {r.best_val_mse:.6f}, "
              f"test MAE {r.report.scores['macro']['MAE']:.3f} -> {r.checkpoint}")
    return 0


def _checkpoint_paths(items: Sequence[str]) -> list[Path]:
    paths: list[Path] = []
    for item in items:
        p = Path(item)
        paths += sorted(p.glob("*.mglm")) if p.is_dir() else [p]
    if not paths:
        raise ConfigError("no checkpoints given")
    return paths


def _check_compatible(cfg, ds: RegionDataset, path: Path) -> None:
    problems = []
    if cfg.n_stat != ds.stats.shape[1]:
        problems.append(f"statistics width {cfg.n_stat} vs {ds.stats.shape[1]}")
    if cfg.uses_regulations and cfg.n_reg != ds.regulations.shape[1]:
        problems.append(f"regulation width {cfg.n_reg} vs {ds.regulations.shape[1]}")
    if cfg.uses_graph and (cfg.n_nodes, cfg.emb_dim) != (ds.n_nodes, ds.emb_dim):
        problems.append(f"nodes x features {cfg.n_nodes}x{cfg.emb_dim} vs {ds.n_nodes}x{ds.emb_dim}")
    if problems:
        raise ConfigError(f"{path} does not fit the dataset: " + "; ".join(problems))


def evaluate_checkpoint(path: Path, ds: RegionDataset) -> EvalReport:
    model, meta, extra = load_checkpoint(path)
    k = meta.get("n_nodes")
    data = ds.first_nodes(k) if k is not None and model.config.uses_graph else ds
    _check_compatible(model.config, data, path)
    tcfg = TrainConfig.from_dict(meta["train"]) if "train" in meta else TrainConfig(window=model.config.window)
    name = model.config.variant if k is None else f"{model.config.variant}(N={k})"
    return evaluate_model(model, data, Normalizers.from_arrays(extra), tcfg, name, meta.get("seed"))


def _baseline_reports(run: RunConfig, ds: RegionDataset, horizons: Sequence[int], n_targets: int) -> list[EvalReport]:
    return [evaluate_baseline(kind, ds, h, run.train, n_targets) for h in horizons for kind in run.baseline_kinds()]


def _emit(reports: list[EvalReport], out: Path, stem: str) -> None:
    paths = write_reports(out, reports, stem)
    print(format_summary_table(summarize(reports)), end="")
    print("wrote " + ", ".join(str(p) for p in paths))


def cmd_evaluate(args) -> int:
    run = _run_config(args)
    ds = run.dataset()
    reports = [evaluate_checkpoint(p, ds) for p in _checkpoint_paths(args.checkpoints)]
    if args.baselines:
        horizons = sorted({r.horizon for r in reports})
        reports += _baseline_reports(run, ds, horizons, len(reports[0].targets))
    _emit(reports, _out_dir(args), "report")
    return 0


def cmd_baseline(args) -> int:
    run = _run_config(args)
    ds = run.dataset()
    n_targets = run.model.get("n_targets", 2)
    _emit(_baseline_reports(run, ds, run.horizons, n_targets), _out_dir(args), "baselines")
    return 0


def validate_node_counts(counts: Sequence[int], n_nodes: int) -> list[int]:
    counts = list(counts)
    if not counts:
        raise ConfigError("ablation needs at least one node count")
    if len(set(counts)) != len(counts):
        raise ConfigError(f"duplicate node counts: {counts}")
    bad = [k for k in counts if not 1 <= k <= n_nodes]
    if bad:
        raise ConfigError(f"node counts {bad} outside 1..{n_nodes}")
    return sorted(counts)


def cmd_ablate(args) -> int:
    run = _run_config(args)
    ds = run.dataset()
    if ds.embeddings is None:
        raise ConfigError("ablation needs node embeddings")
    counts = validate_node_counts(args.nodes or run.node_counts or [ds.n_nodes], ds.n_nodes)
    out = _out_dir(args)
    jobs = grid(["SE"], run.seeds, run.horizons, counts)
    results = run_jobs(ds, run, jobs, out / "checkpoints", run.workers)
    _emit([r.report for r in results], out, "ablation")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--seed", type=_int_list, help="comma-separated seeds, overrides the config")
    common.add_argument("--horizon", type=_int_list, help="comma-separated horizons in days, overrides the config")
    common.add_argument("--data", type=Path, help="directory with stats.csv, stringency.csv, embeddings.mgeb")
    common.add_argument("--deterministic", action="store_true", help="run every job serially in this process")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tgforecast", description="Multi-modal temporal graph case forecasting.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.set_defaults(func=cmd_synth)
    s = sub.add_parser("correlate", parents=[common], help="lagged correlation of signals against targets")
    s.add_argument("--max-lag", type=int)
    s.set_defaults(func=cmd_correlate)
    s = sub.add_parser("train", parents=[common], help="train one model per (seed, horizon)")
    s.add_argument("--variant", choices=VARIANTS)
    s.set_defaults(func=cmd_train)
    s = sub.add_parser("evaluate", parents=[common], help="score checkpoints on the test split")
    s.add_argument("checkpoints", nargs="+", help="checkpoint files or directories")
    s.add_argument("--baselines", action="store_true", help="add the configured baselines to the report")
    s.set_defaults(func=cmd_evaluate)
    s = sub.add_parser("baseline", parents=[common], help="score the baselines on the test split")
    s.set_defaults(func=cmd_baseline)
    s = sub.add_parser("ablate", parents=[common], help="train the SE variant on the first k nodes")
    s.add_argument("--nodes", type=_int_list, help="comma-separated node counts")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
