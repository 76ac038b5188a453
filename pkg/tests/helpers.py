"""Shared fabrication helpers for model and partition objects."""

from __future__ import annotations

import itertools
import math

import numpy as np

from slvrate import pair_likelihood as pl
from slvrate.import_dist import ImportDistribution, Provenance
from slvrate.slv import SlvGroup, SlvPair, SlvPartition


def make_q(values, locus="loc"):
    q = np.asarray(values, dtype=float)
    q = q / q.sum()
    return ImportDistribution(locus=locus, m=len(q), q=q, provenance=Provenance(0.8, 1, 0, 1))


def make_model(r, qvals, locus="loc"):
    q = make_q(qvals, locus)
    return pl.PairModel(locus=locus, r=r, q=q, m=q.m)


def random_q(m, seed):
    rng = np.random.default_rng(seed)
    return make_q(rng.random(m) + 0.01)


def make_partition(locus, groups_x):
    """Fabricate a partition from per-group pair x lists (pair order =
    lexicographic member combinations)."""
    st = 1
    groups, pairs = [], []
    for gid, xs in enumerate(groups_x):
        k = len(xs)
        n = round((1 + math.sqrt(1 + 8 * k)) / 2)
        assert n * (n - 1) // 2 == k, f"{k} pairs is not a full clique"
        members = list(range(st, st + n))
        st += n
        for (a, b), x in zip(itertools.combinations(members, 2), xs):
            pairs.append(SlvPair(locus, a, b, int(x), gid))
        groups.append(SlvGroup(locus, gid, tuple(members)))
    return SlvPartition(locus, tuple(groups), tuple(pairs))


def singleton_partition(locus, xs):
    return make_partition(locus, [[x] for x in xs])
