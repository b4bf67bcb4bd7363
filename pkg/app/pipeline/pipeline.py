import asyncio
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from app.services.dataio import augment_with_pool, make_synthetic
from app.services.solver import train
from app.services.zsleval import evaluate_standard, predict
from app.utils.config import EXPERIMENT_SEEDS, WORKERS
from app.utils.errors import ConfigError, SapError
from app.utils.matrix_io import atomic_write_text
from app.utils.models import SolverParams, SyntheticSpec

logger = logging.getLogger(__name__)

Job = Tuple[SyntheticSpec, SolverParams]

ABLATION_VARIANTS = ("bpl", "sap_i_bpl", "full")
TREND_VARIANTS = ("bpl", "nn_bpl", "full")
PROPAGATION_VARIANTS = ("no_l1", "single_l1", "full")
SCALING_WARN_RATIO = 4.0


def base_spec(seed: int, K: int = 5, pool_size: int = 0) -> SyntheticSpec:
    return SyntheticSpec(
        d=16, k=10, p=8, q=4, images_per_class=30, K_annotated=K, noise_std=0.05, seed=seed, pool_size=pool_size
    )


def run_job(spec: SyntheticSpec, params: SolverParams) -> Dict[str, Any]:
    """Train one variant on one synthetic instance and score it on the unseen classes."""
    data, test, _ = make_synthetic(spec)
    start = time.perf_counter()
    W, state = train(data, params)
    seconds = time.perf_counter() - start
    report = evaluate_standard(predict(W, test.X, data.Z_u), test.truth, data.q)
    return {
        "seed": spec.seed,
        "K": spec.K_annotated,
        "pool_size": spec.pool_size,
        "variant": params.variant,
        "per_class_accuracy": report.per_class_accuracy,
        "per_sample_accuracy": report.per_sample_accuracy,
        "iterations": state.iterations,
        "seconds": seconds,
        "error": None,
    }


def fallback_result(spec: SyntheticSpec, params: SolverParams, error: str) -> Dict[str, Any]:
    return {
        "seed": spec.seed,
        "K": spec.K_annotated,
        "pool_size": spec.pool_size,
        "variant": params.variant,
        "per_class_accuracy": None,
        "per_sample_accuracy": None,
        "iterations": 0,
        "seconds": 0.0,
        "error": error,
    }


async def process_jobs(jobs: Sequence[Job], concurrency: int) -> pd.DataFrame:
    """
    Run the jobs with a concurrency limit. Rows come back in job order.
    """
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(concurrency)
    results: List[Dict[str, Any]] = [None] * len(jobs)

    async def worker(idx: int, spec: SyntheticSpec, params: SolverParams):
        async with semaphore:
            try:
                res = await loop.run_in_executor(None, run_job, spec, params)
            except SapError as e:
                logger.error("job %d (seed=%d, variant=%s) failed: %s", idx, spec.seed, params.variant, e)
                res = fallback_result(spec, params, str(e))
            return idx, res

    tasks = [asyncio.create_task(worker(i, spec, params)) for i, (spec, params) in enumerate(jobs)]
    for fut in tqdm(asyncio.as_completed(tasks), total=len(tasks), desc="Experiments"):
        idx, res = await fut
        results[idx] = res

    return pd.DataFrame(results)


# ---------- suites ----------

def ablation_jobs(seeds: Sequence[int], K: int = 5) -> List[Job]:
    return [(base_spec(s, K), SolverParams(variant=v)) for s in seeds for v in ABLATION_VARIANTS]


def propagation_jobs(seeds: Sequence[int], Ks: Sequence[int] = (1, 2, 5)) -> List[Job]:
    """No L1 vs single L1 vs double L1 attribute propagation over the few-annotation range."""
    return [(base_spec(s, K), SolverParams(variant=v)) for K in Ks for s in seeds for v in PROPAGATION_VARIANTS]


def trend_jobs(seeds: Sequence[int], Ks: Sequence[int] = (1, 2, 5), pool_size: int = 120) -> List[Job]:
    return [
        (base_spec(s, K, pool_size), SolverParams(variant=v))
        for K in Ks for s in seeds for v in TREND_VARIANTS
    ]


def summarize_ordering(df: pd.DataFrame, variants: Sequence[str]) -> Dict[str, Any]:
    """Mean per-class accuracy per variant and whether it is non-decreasing along `variants`."""
    means = df.groupby("variant")["per_class_accuracy"].mean()
    values = [float(means.get(v, float("nan"))) for v in variants]
    return {
        "mean_per_class_accuracy": dict(zip(variants, values)),
        # ties within half an accuracy point count as ordered
        "ordered": bool(all(b >= a - 0.005 for a, b in zip(values, values[1:]))),
    }


def summarize_ablation(df: pd.DataFrame) -> Dict[str, Any]:
    return summarize_ordering(df, ABLATION_VARIANTS)


def summarize_propagation(df: pd.DataFrame) -> Dict[str, Any]:
    summary = summarize_ordering(df, PROPAGATION_VARIANTS)
    by_k = df.pivot_table(index="K", columns="variant", values="per_class_accuracy")
    summary["per_K"] = {
        str(K): {v: float(row[v]) for v in PROPAGATION_VARIANTS if v in row} for K, row in by_k.iterrows()
    }
    return summary


def summarize_trend(df: pd.DataFrame) -> Dict[str, Any]:
    table = df.pivot_table(index=["K", "seed"], columns="variant", values="per_class_accuracy")
    out: Dict[str, Any] = {}
    for K, block in table.groupby(level="K"):
        gain = block["full"] - block["bpl"]
        out[str(K)] = {
            "wins": int((gain >= 0).sum()),
            "runs": int(gain.size),
            "mean_improvement": float(gain.mean()),
        }
    return out


def scaling_smoke(seed: int = 1, params: SolverParams | None = None) -> Dict[str, Any]:
    """Time training before and after doubling N_s with pool images at fixed m and k_g."""
    params = params or SolverParams(graph={"k_g": 20, "m": 20})
    data, _, _ = make_synthetic(base_spec(seed))
    pool, _, _ = make_synthetic(base_spec(seed + 1000))
    doubled = augment_with_pool(data, pool.X)

    timings = []
    for d in (data, doubled):
        start = time.perf_counter()
        train(d, params)
        timings.append(time.perf_counter() - start)
    ratio = timings[1] / max(timings[0], 1e-9)
    if ratio >= SCALING_WARN_RATIO:
        logger.warning("doubling N_s raised train time %.1fx (soft limit %.0fx)", ratio, SCALING_WARN_RATIO)
    return {"n_samples": [data.n_samples, doubled.n_samples], "seconds": timings, "ratio": ratio}


SUITES = {
    "ablation": (ablation_jobs, summarize_ablation),
    "trend": (trend_jobs, summarize_trend),
    "propagation": (propagation_jobs, summarize_propagation),
}


async def main(
    suite: str = "ablation",
    seeds: Sequence[int] = tuple(EXPERIMENT_SEEDS),
    output_dir: str = "output/experiments",
    concurrency: int = WORKERS,
) -> Dict[str, Any]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if suite == "scaling":
        summary = scaling_smoke(seeds[0] if seeds else 1)
    else:
        if suite not in SUITES:
            raise ConfigError(f"unknown suite {suite!r}, expected one of {sorted([*SUITES, 'scaling'])}")
        make_jobs, summarize = SUITES[suite]
        jobs = make_jobs(seeds)
        logger.info("running %s suite: %d jobs with concurrency=%d", suite, len(jobs), concurrency)
        df = await process_jobs(jobs, concurrency=concurrency)
        atomic_write_text(out / f"{suite}.csv", df.to_csv(index=False))
        summary = summarize(df)

    atomic_write_text(out / f"{suite}_summary.json", json.dumps(summary, indent=2))
    logger.info("saved %s results to %s", suite, out)
    return summary
