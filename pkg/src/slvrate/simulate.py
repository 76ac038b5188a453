"""Clonal-frame coalescent simulator.

Samples a Kingman genealogy, then overlays two Poisson event streams per
locus on its branches: point mutations (rate theta_l / 2 per unit branch)
and recombination imports (rate lambda_l * theta_l / 2), where an import
changes a batch of D distinct sites at once, D drawn from a configurable
import model. The ancestry of imported material is not tracked; an event
only injects differences. Leaf sequences are materialized root-to-tip and
sequence types are assigned by exact sequence identity, which round-trips
through the standard dataset builder.

Determinism: everything is driven by one numpy Philox generator per
replicate; draw order is fixed (per-branch counts first, then event
details in ascending node order), so a seed pins the output bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidImportModelError, InvalidParamsError
from .mlst_io import (
    AlleleSequence,
    LocusMeta,
    MlstDataset,
    StProfile,
    build_dataset,
    decode_sequence,
)


# -- import models ---------------------------------------------------------------


@dataclass(frozen=True)
class GeometricImport:
    """D ~ Geometric (support 1, 2, ...) with the given mean, conditioned on 1..m."""

    mean: float

    def __post_init__(self):
        if self.mean < 1.0:
            raise InvalidImportModelError(f"geometric mean must be >= 1, got {self.mean}")


@dataclass(frozen=True)
class EmpiricalImport:
    """D drawn from a supplied pmf over 1..len(pmf) (e.g. an estimated import pmf)."""

    pmf: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.pmf, dtype=float)
        if arr.ndim != 1 or arr.size < 1 or np.any(arr < 0.0):
            raise InvalidImportModelError("pmf must be a non-negative vector")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise InvalidImportModelError(f"pmf sums to {arr.sum()!r}, not 1")


@dataclass(frozen=True)
class CompleteImport:
    """With probability p_a the event rewrites the whole locus with fresh
    random bases (so D ~ Binomial(m, 3/4)); otherwise only a Uniform
    fraction of it, thinning D binomially."""

    p_a: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.p_a <= 1.0:
            raise InvalidImportModelError(f"p_a must be in [0,1], got {self.p_a}")


ImportModel = Union[GeometricImport, EmpiricalImport, CompleteImport]


def _import_sampler(model: ImportModel, m: int):
    """Callable(rng) -> D in 1..m for one locus."""
    if isinstance(model, GeometricImport):
        p = 1.0 / model.mean
        if p >= 1.0:
            return lambda rng: 1
        tail = (1.0 - p) ** m  # truncate to 1..m by inverse CDF
        log1mp = math.log1p(-p)

        def draw_geometric(rng: np.random.Generator) -> int:
            u = rng.random() * (1.0 - tail)
            d = int(math.ceil(math.log1p(-u) / log1mp))
            return min(max(d, 1), m)

        return draw_geometric
    if isinstance(model, EmpiricalImport):
        if len(model.pmf) != m:
            raise InvalidImportModelError(
                f"empirical pmf covers 1..{len(model.pmf)} but locus length is {m}"
            )
        cdf = np.cumsum(np.asarray(model.pmf, dtype=float))
        cdf[-1] = 1.0

        def draw_empirical(rng: np.random.Generator) -> int:
            return int(np.searchsorted(cdf, rng.random(), side="right")) + 1

        return draw_empirical
    if isinstance(model, CompleteImport):
        p_a = model.p_a

        def draw_complete(rng: np.random.Generator) -> int:
            for _ in range(10_000):
                d_full = int(rng.binomial(m, 0.75))
                if rng.random() >= p_a:
                    d_full = int(rng.binomial(d_full, rng.random()))
                if d_full >= 1:
                    return d_full
            raise InvalidImportModelError("import draw kept returning zero differences")

        return draw_complete
    raise InvalidImportModelError(f"unknown import model {model!r}")


# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n_samples: int
    loci: tuple[tuple[str, int], ...]          # (name, length in bases)
    theta: tuple[float, ...]                   # per-locus mutation rate
    lam: tuple[float, ...]                     # per-locus relative recombination rate
    import_model: ImportModel | Mapping[str, ImportModel]
    seed: int = 0
    track_events: bool = False

    def __post_init__(self):
        if self.n_samples < 2:
            raise InvalidParamsError(f"need n_samples >= 2, got {self.n_samples}")
        if len(self.loci) < 2:
            raise InvalidParamsError("need at least 2 loci")
        if len(self.theta) != len(self.loci) or len(self.lam) != len(self.loci):
            raise InvalidParamsError("theta and lam must have one entry per locus")
        if any(t < 0 for t in self.theta) or any(v < 0 for v in self.lam):
            raise InvalidParamsError("rates must be non-negative")
        if any(m < 1 for _, m in self.loci):
            raise InvalidParamsError("locus lengths must be positive")

    def import_for(self, locus: str) -> ImportModel:
        if isinstance(self.import_model, Mapping):
            try:
                return self.import_model[locus]
            except KeyError:
                raise InvalidImportModelError(f"no import model for locus {locus!r}")
        return self.import_model


@dataclass(frozen=True)
class CoalescentTree:
    n_leaves: int
    parent: np.ndarray        # (2n-1,) int, -1 at the root
    time: np.ndarray          # (2n-1,) float, 0 at leaves
    children: tuple[tuple[int, ...], ...]

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    def branch_lengths(self) -> np.ndarray:
        lengths = np.zeros(self.n_nodes)
        has_parent = self.parent >= 0
        lengths[has_parent] = self.time[self.parent[has_parent]] - self.time[has_parent]
        return lengths


@dataclass(frozen=True)
class SimResult:
    dataset: MlstDataset
    config: SimConfig
    st_of_sample: tuple[int, ...]
    event_log: tuple[tuple, ...] = field(default=())


def simulate_coalescent_tree(n: int, rng: np.random.Generator) -> CoalescentTree:
    """Kingman n-coalescent: while k lineages remain, wait an exponential
    time with rate k(k-1)/2 and merge a uniformly chosen pair."""
    if n < 2:
        raise InvalidParamsError(f"need n >= 2 leaves, got {n}")
    n_nodes = 2 * n - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    time = np.zeros(n_nodes)
    children: list[tuple[int, ...]] = [() for _ in range(n_nodes)]
    active = list(range(n))
    now = 0.0
    nxt = n
    while len(active) > 1:
        k = len(active)
        now += rng.exponential(2.0 / (k * (k - 1)))
        i = int(rng.integers(k))
        j = int(rng.integers(k - 1))
        if j >= i:
            j += 1
        a, b = active[i], active[j]
        parent[a] = parent[b] = nxt
        time[nxt] = now
        children[nxt] = (a, b)
        # replace the smaller index, drop the larger, preserving order
        lo, hi = min(i, j), max(i, j)
        active[lo] = nxt
        del active[hi]
        nxt += 1
    return CoalescentTree(
        n_leaves=n, parent=parent, time=time, children=tuple(children)
    )


def overlay_events(
    tree: CoalescentTree, config: SimConfig, rng: np.random.Generator
) -> SimResult:
    """Drop mutation and import events on the tree and materialize a dataset."""
    loci = config.loci
    n_loci = len(loci)
    samplers = [_import_sampler(config.import_for(name), m) for name, m in loci]

    roots = [rng.integers(0, 4, size=m, dtype=np.uint8) for _, m in loci]
    blen = tree.branch_lengths()

    mut_counts = np.zeros((n_loci, tree.n_nodes), dtype=np.int64)
    rec_counts = np.zeros((n_loci, tree.n_nodes), dtype=np.int64)
    for li in range(n_loci):
        mut_counts[li] = rng.poisson(blen * (config.theta[li] / 2.0))
        rec_counts[li] = rng.poisson(blen * (config.lam[li] * config.theta[li] / 2.0))

    # per-(node, locus) event scripts, drawn in canonical order
    scripts: dict[tuple[int, int], list[tuple]] = {}
    log: list[tuple] = []
    for node in range(tree.n_nodes):
        if tree.parent[node] < 0:
            continue
        for li in range(n_loci):
            n_mut = int(mut_counts[li, node])
            n_rec = int(rec_counts[li, node])
            if n_mut == 0 and n_rec == 0:
                continue
            name, m = loci[li]
            marks = [(float(u), "mut") for u in rng.random(n_mut)]
            marks += [(float(u), "rec") for u in rng.random(n_rec)]
            marks.sort(reverse=True)  # larger offset = older; apply root-to-tip
            ops: list[tuple] = []
            for u, kind in marks:
                if kind == "mut":
                    site = int(rng.integers(m))
                    delta = int(rng.integers(1, 4))
                    ops.append(("mut", site, delta))
                    if config.track_events:
                        log.append((node, u, name, "mut", site))
                else:
                    d = samplers[li](rng)
                    sites = rng.choice(m, size=d, replace=False)
                    deltas = rng.integers(1, 4, size=d)
                    ops.append(("rec", sites, deltas))
                    if config.track_events:
                        log.append((node, u, name, "rec", d))
            scripts[(node, li)] = ops

    # root-to-tip materialization; arrays shared until a branch edits them
    leaf_vectors: list[tuple[bytes, ...] | None] = [None] * tree.n_leaves
    stack: list[tuple[int, list[np.ndarray]]] = [(tree.root, roots)]
    while stack:
        node, seqs = stack.pop()
        for child in tree.children[node]:
            child_seqs = seqs
            edits = [li for li in range(n_loci) if (child, li) in scripts]
            if edits:
                child_seqs = list(seqs)
                for li in edits:
                    arr = seqs[li].copy()
                    for op in scripts[(child, li)]:
                        if op[0] == "mut":
                            _, site, delta = op
                            arr[site] = (arr[site] + delta) % 4
                        else:
                            _, sites, deltas = op
                            arr[sites] = (arr[sites] + deltas) % 4
                    child_seqs[li] = arr
            if child < tree.n_leaves:
                leaf_vectors[child] = tuple(arr.tobytes() for arr in child_seqs)
            else:
                stack.append((child, child_seqs))

    return _materialize(config, leaf_vectors, tuple(log))


def _materialize(
    config: SimConfig, leaf_vectors: Sequence[tuple[bytes, ...]], log: tuple
) -> SimResult:
    loci_names = [name for name, _ in config.loci]
    allele_ids: list[dict[bytes, int]] = [{} for _ in loci_names]
    st_ids: dict[tuple[int, ...], int] = {}
    st_of_sample: list[int] = []
    counts: dict[int, int] = {}
    vectors: dict[int, tuple[int, ...]] = {}
    for vec in leaf_vectors:
        key = []
        for li, raw in enumerate(vec):
            table = allele_ids[li]
            if raw not in table:
                table[raw] = len(table) + 1
            key.append(table[raw])
        key = tuple(key)
        if key not in st_ids:
            st_ids[key] = len(st_ids) + 1
            vectors[st_ids[key]] = key
        sid = st_ids[key]
        st_of_sample.append(sid)
        counts[sid] = counts.get(sid, 0) + 1

    profiles = [
        StProfile(st_id=sid, alleles=vec, isolate_count=counts[sid])
        for sid, vec in sorted(vectors.items())
    ]
    alleles_by_locus = {}
    for li, name in enumerate(loci_names):
        records = []
        for raw, aid in allele_ids[li].items():
            codes = np.frombuffer(raw, dtype=np.uint8)
            records.append(AlleleSequence(locus=name, allele_id=aid, sequence=decode_sequence(codes)))
        alleles_by_locus[name] = records
    if len(profiles) >= 2:
        dataset, _ = build_dataset(profiles, alleles_by_locus, mode="strict")
    else:
        # a rate-free simulation collapses to a single sequence type, which
        # the file-oriented builder refuses; assemble the dataset directly
        dataset = MlstDataset(
            loci=tuple(
                LocusMeta(name=name, length=m, allele_count=len(alleles_by_locus[name]))
                for name, m in config.loci
            ),
            alleles={
                (name, rec.allele_id): rec
                for name in loci_names
                for rec in alleles_by_locus[name]
            },
            profiles=tuple(profiles),
        )
    return SimResult(
        dataset=dataset,
        config=config,
        st_of_sample=tuple(st_of_sample),
        event_log=log,
    )


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Deterministic per-replicate stream (spawn-key namespace 11)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(11, replicate))
    return np.random.Generator(np.random.Philox(ss))


def simulate(config: SimConfig, replicate: int = 0) -> SimResult:
    rng = replicate_rng(config.seed, replicate)
    tree = simulate_coalescent_tree(config.n_samples, rng)
    return overlay_events(tree, config, rng)
