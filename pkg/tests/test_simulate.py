from __future__ import annotations

import math

import numpy as np
import pytest

from slvrate import simulate as sim
from slvrate import slv
from slvrate.errors import InvalidImportModelError, InvalidParamsError


def small_config(**kw):
    base = dict(
        n_samples=40,
        loci=(("l1", 50), ("l2", 60)),
        theta=(2.0, 2.0),
        lam=(1.0, 1.0),
        import_model=sim.GeometricImport(mean=5.0),
        seed=7,
    )
    base.update(kw)
    return sim.SimConfig(**base)


# -- coalescent ---------------------------------------------------------------


def test_pair_coalescence_time_mean():
    times = [
        sim.simulate_coalescent_tree(2, np.random.default_rng(i)).time[2]
        for i in range(10_000)
    ]
    assert 0.97 < float(np.mean(times)) < 1.03


def test_tree_height_matches_coalescent_formula():
    heights = [
        sim.simulate_coalescent_tree(10, np.random.default_rng(i)).time[-1]
        for i in range(4000)
    ]
    expected = 2.0 * (1.0 - 1.0 / 10.0)
    se = float(np.std(heights)) / math.sqrt(len(heights))
    assert abs(float(np.mean(heights)) - expected) < 3 * se


def test_leaf_count_and_topology():
    tree = sim.simulate_coalescent_tree(17, np.random.default_rng(3))
    assert tree.n_leaves == 17
    assert tree.n_nodes == 33
    assert (tree.parent[: tree.root] >= 0).all()
    assert tree.parent[tree.root] == -1
    # every internal node has exactly two children
    assert all(len(tree.children[v]) == 2 for v in range(17, 33))
    assert all(len(tree.children[v]) == 0 for v in range(17))
    # branch lengths non-negative, times increase toward the root
    assert (tree.branch_lengths() >= 0).all()


def test_event_count_calibration():
    # mutations on a branch of length t arrive at rate t * theta/2
    theta = 3.0
    rng = np.random.default_rng(11)
    lengths = rng.exponential(0.8, size=10_000)
    counts = rng.poisson(lengths * theta / 2.0)
    expected = float(np.mean(lengths)) * theta / 2.0
    se = float(np.std(counts)) / math.sqrt(len(counts))
    assert abs(float(np.mean(counts)) - expected) < 3 * se


def test_pairwise_difference_calibration():
    # without recombination, a pair differs by ~theta_l at a locus
    theta = 4.0
    diffs = []
    for i in range(4000):
        cfg = sim.SimConfig(
            n_samples=2,
            loci=(("a", 400), ("b", 400)),
            theta=(theta, theta),
            lam=(0.0, 0.0),
            import_model=sim.GeometricImport(mean=3.0),
            seed=i,
        )
        res = sim.simulate(cfg)
        if len(res.dataset.profiles) == 1:
            diffs.append(0)
            continue
        enc = res.dataset.encoded_alleles("a")
        arrs = list(enc.values())
        if len(arrs) == 1:
            diffs.append(0)
        else:
            diffs.append(int((arrs[0] != arrs[1]).sum()))
    assert abs(float(np.mean(diffs)) - theta) / theta < 0.05


# -- overlay -------------------------------------------------------------------


def test_zero_rates_collapse_to_single_st():
    cfg = small_config(theta=(0.0, 0.0), lam=(0.0, 0.0), n_samples=20)
    res = sim.simulate(cfg)
    assert len(res.dataset.profiles) == 1
    assert res.dataset.profiles[0].isolate_count == 20
    assert set(res.st_of_sample) == {1}


def test_simulation_is_deterministic():
    cfg = small_config()
    a = sim.simulate(cfg)
    b = sim.simulate(cfg)
    assert a.dataset.profiles == b.dataset.profiles
    assert a.dataset.alleles == b.dataset.alleles
    assert a.st_of_sample == b.st_of_sample
    c = sim.simulate(small_config(seed=8))
    assert c.dataset.profiles != a.dataset.profiles or c.dataset.alleles != a.dataset.alleles


def test_st_identity_matches_sequences():
    res = sim.simulate(small_config(n_samples=60, seed=2))
    # samples sharing an ST have identical allele vectors; distinct STs differ
    by_st = {}
    for sample, st in enumerate(res.st_of_sample):
        by_st.setdefault(st, []).append(sample)
    profiles = {p.st_id: p.alleles for p in res.dataset.profiles}
    assert sum(len(v) for v in by_st.values()) == 60
    assert len(set(profiles.values())) == len(profiles)
    counts = {p.st_id: p.isolate_count for p in res.dataset.profiles}
    assert counts == {st: len(v) for st, v in by_st.items()}


def test_event_log_tracks_events():
    cfg = small_config(track_events=True, seed=3)
    res = sim.simulate(cfg)
    assert len(res.event_log) > 0
    kinds = {e[3] for e in res.event_log}
    assert kinds <= {"mut", "rec"}


def test_table_scale_directional_check():
    # theta=100 over 7 loci, lam=1, N=5000: sequence types and SLV pair
    # counts should be of the same order as published MLST simulations
    # (629 STs / 600 SLVs at this size); require a factor of 3
    loci = tuple((f"g{i}", 450) for i in range(7))
    theta = tuple(100.0 / 7.0 for _ in range(7))
    cfg = sim.SimConfig(
        n_samples=5000,
        loci=loci,
        theta=theta,
        lam=tuple(1.0 for _ in range(7)),
        import_model=sim.CompleteImport(p_a=0.8),
        seed=123,
    )
    res = sim.simulate(cfg)
    n_sts = len(res.dataset.profiles)
    n_slv = sum(
        slv.extract_slv(res.dataset, name).n_pairs for name, _ in loci
    )
    assert 629 / 3 < n_sts < 629 * 3
    assert 600 / 3 < n_slv < 600 * 3


# -- import samplers -------------------------------------------------------------


def test_geometric_import_truncation_and_mean():
    sampler = sim._import_sampler(sim.GeometricImport(mean=6.0), m=40)
    rng = np.random.default_rng(5)
    draws = np.array([sampler(rng) for _ in range(20_000)])
    assert draws.min() >= 1 and draws.max() <= 40
    # truncation at m=40 barely bites, so the mean stays close to 6
    assert abs(float(draws.mean()) - 6.0) < 0.2


def test_empirical_import_replays_pmf():
    pmf = np.zeros(10)
    pmf[2] = 0.25  # D = 3
    pmf[7] = 0.75  # D = 8
    sampler = sim._import_sampler(sim.EmpiricalImport(tuple(pmf)), m=10)
    rng = np.random.default_rng(6)
    draws = np.array([sampler(rng) for _ in range(20_000)])
    assert set(np.unique(draws)) == {3, 8}
    assert abs(float(np.mean(draws == 8)) - 0.75) < 0.02


def test_complete_import_full_rewrites():
    sampler = sim._import_sampler(sim.CompleteImport(p_a=1.0), m=200)
    rng = np.random.default_rng(7)
    draws = np.array([sampler(rng) for _ in range(5000)])
    assert abs(float(draws.mean()) - 150.0) < 2.0  # Binomial(200, 3/4)


def test_import_model_validation():
    with pytest.raises(InvalidImportModelError):
        sim.GeometricImport(mean=0.5)
    with pytest.raises(InvalidImportModelError):
        sim.EmpiricalImport((0.5, 0.2))
    with pytest.raises(InvalidImportModelError):
        sim._import_sampler(sim.EmpiricalImport((0.5, 0.5)), m=5)
    with pytest.raises(InvalidParamsError):
        small_config(theta=(1.0,))
    with pytest.raises(InvalidParamsError):
        small_config(n_samples=1)


def test_per_locus_import_models():
    cfg = small_config(
        import_model={
            "l1": sim.GeometricImport(mean=4.0),
            "l2": sim.CompleteImport(p_a=0.9),
        }
    )
    res = sim.simulate(cfg)
    assert len(res.dataset.profiles) >= 1
    with pytest.raises(InvalidImportModelError):
        small_config(import_model={"l1": sim.GeometricImport(mean=4.0)}).import_for("l2")
