"""Training jobs over (variant, seed, horizon) grids.

Jobs share nothing mutable.  With more than one worker they run in separate
processes; results come back in job order either way, so outputs do not
depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .config import RunConfig
from .dataio import RegionDataset
from .evaluation import EvalReport, report_from_prepared
from .model import init_model, save_checkpoint
from .training import EpochRecord, TrainResult, train


@dataclass(frozen=True)
class Job:
    variant: str
    seed: int
    horizon: int
    n_nodes: int | None = None     # keep only the first k nodes

    @property
    def label(self) -> str:
        return self.variant if self.n_nodes is None else f"{self.variant}(N={self.n_nodes})"

    @property
    def stem(self) -> str:
        nodes = "" if self.n_nodes is None else f"_n{self.n_nodes}"
        return f"{self.variant}{nodes}_h{self.horizon}_s{self.seed}"


@dataclass
class JobResult:
    job: Job
    report: EvalReport
    log: list[EpochRecord]
    best_epoch: int
    best_val_mse: float
    stopped_early: bool
    checkpoint: Path | None = None


def grid(variants: Sequence[str], seeds: Sequence[int], horizons: Sequence[int],
         node_counts: Sequence[int | None] = (None,)) -> list[Job]:
    return [Job(v, s, h, k) for k in node_counts for h in horizons for v in variants for s in seeds]


def _checkpoint_meta(job: Job, run: RunConfig, ds: RegionDataset, res: TrainResult) -> dict:
    tcfg = asdict(run.train_config(job.seed))
    tcfg["betas"] = list(tcfg["betas"])
    return {"seed": job.seed, "horizon": job.horizon, "n_nodes": job.n_nodes, "train": tcfg,
            "best_epoch": res.best_epoch, "best_val_mse": res.best_val_mse, "region": ds.region,
            "first_date": ds.dates[0].isoformat(), "last_date": ds.dates[-1].isoformat()}


def run_job(ds: RegionDataset, run: RunConfig, job: Job, out_dir: Path | None = None) -> JobResult:
    data = ds if job.n_nodes is None else ds.first_nodes(job.n_nodes)
    cfg = run.model_config(data, job.horizon, job.variant)
    res = train(init_model(cfg, job.seed), data, run.train_config(job.seed))
    report = report_from_prepared(res.model, data, res.data, job.label, job.seed)
    ckpt = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / f"{job.stem}.mglm"
        save_checkpoint(ckpt, res.model, _checkpoint_meta(job, run, data, res), res.data.normalizers.to_arrays())
        with open(out_dir / f"{job.stem}.log.jsonl", "w") as fh:
            fh.writelines(rec.to_json() + "\n" for rec in res.log)
    return JobResult(job, report, res.log, res.best_epoch, res.best_val_mse, res.stopped_early, ckpt)


def _run_packed(args) -> JobResult:
    return run_job(*args)


def run_jobs(ds: RegionDataset, run: RunConfig, jobs: Sequence[Job], out_dir: Path | None = None,
             workers: int = 1) -> list[JobResult]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_job(ds, run, j, out_dir) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_packed, [(ds, run, j, out_dir) for j in jobs]))
