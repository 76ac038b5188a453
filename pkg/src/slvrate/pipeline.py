"""End-to-end analysis of one dataset: SLV extraction, import-distribution
estimation, per-locus fits, the pooled fit and the rate-variation test.

Loci that yield no SLV pairs (or fewer than two sequence types with usable
data) carry no information about the rate ratio; they are skipped and
reported, and the cross-locus test runs on the remainder with its degrees
of freedom reduced accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import TooFewUnitsError
from .import_dist import ImportDistribution, estimate_import_dist, pairwise_diffs
from .joint_inference import JointFit, VariationTestResult, joint_fit, variation_test
from .locus_estimator import CompositeLikelihood, LocusFit, fit_all_loci
from .mlst_io import MlstDataset
from .numerics import DEFAULT_TOL, Tolerances
from .pair_likelihood import PairModel, theta_ratios
from .slv import SlvPartition, extract_slv

_IMPORT_SEED_DOMAIN = 3


@dataclass(frozen=True)
class AnalysisOptions:
    p_a: float = 0.8
    draws: int = 100_000
    seed: int = 0
    weighting: str = "by_st"
    theta_method: str = "length"
    alpha_mode: str = "common"
    level: float = 0.95
    mode: str = "strict"

    def to_dict(self) -> dict:
        return {
            "p_a": self.p_a,
            "draws": self.draws,
            "seed": self.seed,
            "weighting": self.weighting,
            "theta_method": self.theta_method,
            "alpha_mode": self.alpha_mode,
            "level": self.level,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class AnalysisResult:
    locus_fits: tuple[LocusFit, ...]
    joint: JointFit | None
    variation: VariationTestResult | None
    skipped_loci: tuple[str, ...]
    partitions: Mapping[str, SlvPartition] = field(default_factory=dict)
    import_dists: Mapping[str, ImportDistribution] = field(default_factory=dict)


def locus_import_seed(seed: int, locus_index: int) -> int:
    """Stable per-locus seed for the import-distribution sampler."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_IMPORT_SEED_DOMAIN, locus_index))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0] ^ (state[1] << 1)) & 0x7FFFFFFFFFFFFFFF


def build_import_dists(
    dataset: MlstDataset, opts: AnalysisOptions
) -> dict[str, ImportDistribution]:
    """Estimate the import pmf for every locus with at least two usable units."""
    out: dict[str, ImportDistribution] = {}
    for index, meta in enumerate(dataset.loci):
        try:
            table = pairwise_diffs(dataset, meta.name, weighting=opts.weighting)
        except TooFewUnitsError:
            continue
        out[meta.name] = estimate_import_dist(
            table,
            m=meta.length,
            p_a=opts.p_a,
            draws=opts.draws,
            seed=locus_import_seed(opts.seed, index),
        )
    return out


def build_composite_likelihoods(
    dataset: MlstDataset,
    dists: Mapping[str, ImportDistribution],
    opts: AnalysisOptions,
) -> tuple[list[CompositeLikelihood], list[str], dict[str, SlvPartition]]:
    """One composite likelihood per informative locus, plus skipped loci."""
    ratios = theta_ratios(dataset, opts.theta_method)
    cls: list[CompositeLikelihood] = []
    skipped: list[str] = []
    partitions: dict[str, SlvPartition] = {}
    for meta in dataset.loci:
        partition = extract_slv(dataset, meta.name, mode=opts.mode)
        partitions[meta.name] = partition
        if partition.n_pairs == 0 or meta.name not in dists:
            skipped.append(meta.name)
            continue
        model = PairModel.from_parts(ratios[meta.name], dists[meta.name])
        cls.append(CompositeLikelihood(partition, model))
    return cls, skipped, partitions


def analyze_dataset(
    dataset: MlstDataset,
    opts: AnalysisOptions = AnalysisOptions(),
    dists: Mapping[str, ImportDistribution] | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> AnalysisResult:
    if dists is None:
        dists = build_import_dists(dataset, opts)
    cls, skipped, partitions = build_composite_likelihoods(dataset, dists, opts)
    fits = fit_all_loci(cls, level=opts.level, alpha_mode=opts.alpha_mode, tol=tol)
    joint = None
    variation = None
    if len(cls) >= 2:
        joint = joint_fit(cls, fits, level=opts.level, tol=tol)
        variation = variation_test(cls, fits, tol=tol)
    return AnalysisResult(
        locus_fits=tuple(fits),
        joint=joint,
        variation=variation,
        skipped_loci=tuple(skipped),
        partitions=partitions,
        import_dists=dict(dists),
    )
