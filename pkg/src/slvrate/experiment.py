"""Simulation experiment harness.

Four designs:

* ``coverage``  - simulate under a common rate, fit everything, and measure
  bias, RMSE and confidence-interval coverage of per-locus and pooled
  estimates against the simulated truth.
* ``type1``     - same generation, but the reported metric is how often the
  rate-variation test rejects at the 5% level when rates are equal.
* ``power``     - per-locus rates differ; the metric is the rejection rate.
* ``recovery``  - no genealogy at all: difference counts are drawn straight
  from the inference model's pmf with every pair its own group, so the
  estimator sees exactly the data-generating process it assumes. This is
  the oracle-equivalence check for the estimation stack.

Replicates are independent; each gets a deterministically derived Philox
stream, so reports are reproducible and unaffected by the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .import_dist import ImportDistribution, Provenance
from .joint_inference import joint_fit, variation_test
from .locus_estimator import CompositeLikelihood, fit_all_loci
from .pair_likelihood import PairModel, pmf as model_pmf
from .pipeline import AnalysisOptions, analyze_dataset
from .simulate import ImportModel, SimConfig, simulate
from .slv import SlvGroup, SlvPair, SlvPartition

_ANALYSIS_SEED_DOMAIN = 5
_RECOVERY_SEED_DOMAIN = 13


@dataclass(frozen=True)
class MetricValue:
    value: float
    mc_stderr: float


@dataclass(frozen=True)
class SimDesign:
    kind: str                                   # coverage | type1 | power
    replicates: int
    n_samples: int
    loci: tuple[tuple[str, int], ...]
    theta: tuple[float, ...]
    lam: tuple[float, ...]
    import_model: ImportModel | Mapping[str, ImportModel]
    seed: int = 0
    analysis: AnalysisOptions = AnalysisOptions()

    def __post_init__(self):
        if self.kind not in ("coverage", "type1", "power"):
            raise ValueError(f"unknown design {self.kind!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


@dataclass(frozen=True)
class RecoveryDesign:
    replicates: int
    lam: float
    loci: tuple[tuple[str, int], ...]           # (name, length)
    import_means: tuple[float, ...]             # per-locus pmf means
    n_pairs: int
    seed: int = 0
    level: float = 0.95
    kind: str = "recovery"


@dataclass(frozen=True)
class ExperimentReport:
    design: str
    replicates: int
    metrics: dict[str, MetricValue]
    rows: tuple[dict, ...]
    excluded_replicates: int


def _mean_metric(values: Sequence[float]) -> MetricValue:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return MetricValue(math.nan, math.nan)
    se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return MetricValue(float(arr.mean()), se)


def _rate_metric(hits: Sequence[bool]) -> MetricValue:
    arr = np.asarray(hits, dtype=float)
    if arr.size == 0:
        return MetricValue(math.nan, math.nan)
    p = float(arr.mean())
    return MetricValue(p, math.sqrt(max(p * (1.0 - p), 0.0) / arr.size))


def _rmse_metric(errors: Sequence[float]) -> MetricValue:
    arr = np.asarray(errors, dtype=float)
    if arr.size == 0:
        return MetricValue(math.nan, math.nan)
    sq = arr * arr
    rmse = math.sqrt(float(sq.mean()))
    if arr.size > 1 and rmse > 0.0:
        se = float(np.std(sq, ddof=1) / math.sqrt(sq.size)) / (2.0 * rmse)
    else:
        se = math.nan
    return MetricValue(rmse, se)


def _analysis_seed(seed: int, ridx: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_ANALYSIS_SEED_DOMAIN, ridx))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0] ^ (state[1] << 1)) & 0x7FFFFFFFFFFFFFFF


def _run_sim_replicate(design: SimDesign, ridx: int) -> dict:
    config = SimConfig(
        n_samples=design.n_samples,
        loci=design.loci,
        theta=design.theta,
        lam=design.lam,
        import_model=design.import_model,
        seed=design.seed,
    )
    result = simulate(config, replicate=ridx)
    opts = replace(design.analysis, seed=_analysis_seed(design.seed, ridx))
    analysis = analyze_dataset(result.dataset, opts)
    truth = {name: lam for (name, _), lam in zip(design.loci, design.lam)}
    rows = []
    n_slv = sum(p.n_pairs for p in analysis.partitions.values())
    for fit in analysis.locus_fits:
        lam_true = truth[fit.locus]
        rows.append(
            {
                "replicate": ridx,
                "kind": "locus",
                "locus": fit.locus,
                "lam_true": lam_true,
                "lam_hat": fit.lam_hat,
                "ci_lo": fit.ci_lower,
                "ci_hi": fit.ci_upper,
                "covered": int(fit.ci_lower <= lam_true <= fit.ci_upper),
                "gamma": fit.gamma,
                "n_pairs": fit.n_pairs,
                "boundary": int(fit.at_boundary),
            }
        )
    common = design.lam[0] if len(set(design.lam)) == 1 else math.nan
    if analysis.joint is not None:
        covered = (
            int(analysis.joint.ci_lower <= common <= analysis.joint.ci_upper)
            if not math.isnan(common)
            else ""
        )
        rows.append(
            {
                "replicate": ridx,
                "kind": "joint",
                "locus": "_all_",
                "lam_true": common,
                "lam_hat": analysis.joint.lam_hat,
                "ci_lo": analysis.joint.ci_lower,
                "ci_hi": analysis.joint.ci_upper,
                "covered": covered,
                "gamma": analysis.joint.gamma,
                "n_pairs": n_slv,
                "boundary": int(analysis.joint.at_boundary),
            }
        )
    return {
        "rows": rows,
        "p_value": analysis.variation.p_value if analysis.variation else math.nan,
        "n_sts": len(result.dataset.profiles),
        "n_slv": n_slv,
        "informative": analysis.joint is not None,
        "skipped_loci": len(analysis.skipped_loci),
    }


def _geometric_pmf(m: int, mean: float) -> np.ndarray:
    p = 1.0 / mean
    xs = np.arange(1, m + 1, dtype=float)
    raw = p * (1.0 - p) ** (xs - 1.0)
    return raw / raw.sum()


def recovery_models(design: RecoveryDesign) -> list[PairModel]:
    """The exact models the recovery design both samples from and fits."""
    total = sum(m for _, m in design.loci)
    models = []
    for (name, m), mean in zip(design.loci, design.import_means):
        q = ImportDistribution(
            locus=name,
            m=m,
            q=_geometric_pmf(m, mean),
            provenance=Provenance(p_a=1.0, draws=0, seed=design.seed, k=0),
        )
        models.append(PairModel(locus=name, r=m / total, q=q, m=m))
    return models


def _singleton_partition(locus: str, xs: np.ndarray) -> SlvPartition:
    groups = []
    pairs = []
    for i, x in enumerate(xs):
        st_a, st_b = 2 * i + 1, 2 * i + 2
        groups.append(SlvGroup(locus, i, (st_a, st_b)))
        pairs.append(SlvPair(locus, st_a, st_b, int(x), i))
    return SlvPartition(locus, tuple(groups), tuple(pairs))


def _run_recovery_replicate(design: RecoveryDesign, models: list[PairModel], ridx: int) -> dict:
    ss = np.random.SeedSequence(entropy=design.seed, spawn_key=(_RECOVERY_SEED_DOMAIN, ridx))
    rng = np.random.Generator(np.random.Philox(ss))
    cls = []
    for model in models:
        probs = model_pmf(model, design.lam)
        xs = rng.choice(np.arange(1, model.m + 1), size=design.n_pairs, p=probs)
        cls.append(CompositeLikelihood(_singleton_partition(model.locus, xs), model))
    fits = fit_all_loci(cls, level=design.level, alpha_mode="common")
    joint = joint_fit(cls, fits, level=design.level)
    variation = variation_test(cls, fits)
    rows = []
    for fit in fits:
        rows.append(
            {
                "replicate": ridx,
                "kind": "locus",
                "locus": fit.locus,
                "lam_true": design.lam,
                "lam_hat": fit.lam_hat,
                "ci_lo": fit.ci_lower,
                "ci_hi": fit.ci_upper,
                "covered": int(fit.ci_lower <= design.lam <= fit.ci_upper),
                "gamma": fit.gamma,
                "n_pairs": fit.n_pairs,
                "boundary": int(fit.at_boundary),
            }
        )
    rows.append(
        {
            "replicate": ridx,
            "kind": "joint",
            "locus": "_all_",
            "lam_true": design.lam,
            "lam_hat": joint.lam_hat,
            "ci_lo": joint.ci_lower,
            "ci_hi": joint.ci_upper,
            "covered": int(joint.ci_lower <= design.lam <= joint.ci_upper),
            "gamma": joint.gamma,
            "n_pairs": design.n_pairs * len(models),
            "boundary": int(joint.at_boundary),
        }
    )
    return {"rows": rows, "p_value": variation.p_value, "informative": True}


def _collect(design_kind: str, level: float, replicate_outputs: list[dict]) -> ExperimentReport:
    rows: list[dict] = []
    locus_errs: list[float] = []
    locus_cov: list[bool] = []
    joint_errs: list[float] = []
    joint_cov: list[bool] = []
    p_values: list[float] = []
    sts: list[float] = []
    slvs: list[float] = []
    excluded = 0
    for out in replicate_outputs:
        if not out.get("informative", False):
            excluded += 1
            continue
        rows.extend(out["rows"])
        for row in out["rows"]:
            if math.isnan(row["lam_true"]):
                continue
            err = row["lam_hat"] - row["lam_true"]
            if row["kind"] == "locus":
                locus_errs.append(err)
                locus_cov.append(bool(row["covered"]))
            else:
                joint_errs.append(err)
                joint_cov.append(bool(row["covered"]))
        if not math.isnan(out.get("p_value", math.nan)):
            p_values.append(out["p_value"])
        if "n_sts" in out:
            sts.append(out["n_sts"])
            slvs.append(out["n_slv"])
    metrics: dict[str, MetricValue] = {
        "individual_bias": _mean_metric(locus_errs),
        "individual_rmse": _rmse_metric(locus_errs),
        "individual_coverage": _rate_metric(locus_cov),
        "joint_bias": _mean_metric(joint_errs),
        "joint_rmse": _rmse_metric(joint_errs),
        "joint_coverage": _rate_metric(joint_cov),
    }
    if p_values:
        alpha = 1.0 - level
        metrics["rejection_rate"] = _rate_metric([p < alpha for p in p_values])
    if sts:
        metrics["mean_sts"] = _mean_metric(sts)
        metrics["mean_slvs"] = _mean_metric(slvs)
        metrics["mean_skipped_loci"] = _mean_metric(
            [out.get("skipped_loci", 0) for out in replicate_outputs if out.get("informative")]
        )
    return ExperimentReport(
        design=design_kind,
        replicates=len(replicate_outputs),
        metrics=metrics,
        rows=tuple(rows),
        excluded_replicates=excluded,
    )


def run_experiment(design: SimDesign | RecoveryDesign, threads: int = 1) -> ExperimentReport:
    """Run all replicates and aggregate; identical whatever ``threads`` is."""
    if isinstance(design, RecoveryDesign):
        models = recovery_models(design)
        worker = lambda ridx: _run_recovery_replicate(design, models, ridx)
        level = design.level
    else:
        worker = lambda ridx: _run_sim_replicate(design, ridx)
        level = design.analysis.level
    indices = range(design.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(worker, indices))
    else:
        outputs = [worker(i) for i in indices]
    return _collect(design.kind, level, outputs)
