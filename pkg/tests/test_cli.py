from __future__ import annotations

import json
from conftest import DEMO

from slvrate.cli import main, render_json


def run(*argv):
    return main([str(a) for a in argv])


def dataset_args(tmp=None):
    return ["--profiles", DEMO / "profiles.tsv", "--alleles-dir", DEMO]


# -- JSON rendering -------------------------------------------------------------


def test_render_json_floats_and_inf():
    doc = {"a": 1.0 / 3.0, "b": float("inf"), "c": [1, 2.5], "d": None, "e": True}
    text = render_json(doc)
    assert '"a": 0.333333333333' in text
    assert '"b": "inf"' in text
    assert '"e": true' in text
    parsed = json.loads(text)
    assert parsed["b"] == "inf"
    assert abs(parsed["a"] - 1 / 3) < 1e-12


# -- extract ----------------------------------------------------------------------


def test_extract_demo_table(tmp_path, capsys):
    out = tmp_path / "slv.tsv"
    code = run("extract", *dataset_args(), "--out", out)
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "locus\tgroup_id\tst_a\tst_b\tx\tweight"
    body = [line.split("\t") for line in lines[1:]]
    assert len(body) == 4
    assert [row[0] for row in body] == ["glnA", "gltA", "gltA", "gltA"]
    assert [int(row[4]) for row in body] == [1, 5, 6, 1]
    assert body[0][5] == "1"
    w = 3 ** -0.5
    assert all(abs(float(row[5]) - w) < 1e-10 for row in body[1:])
    meta = json.loads((tmp_path / "slv.tsv.meta.json").read_text())
    assert meta["tool"] == "slvrate"
    assert set(meta["inputs"]) >= {str(DEMO / "profiles.tsv")}


def test_extract_missing_file_is_usage_error(tmp_path):
    code = run("extract", "--profiles", tmp_path / "nope.tsv", "--alleles-dir", DEMO)
    assert code == 1


def test_extract_empty_profile_is_data_error(tmp_path):
    (tmp_path / "profiles.tsv").write_text("\n")
    code = run("extract", "--profiles", tmp_path / "profiles.tsv", "--alleles-dir", DEMO,
               "--loci", "aspA,glnA")
    assert code == 2


def test_unknown_flag_exits_one():
    assert run("extract", "--bogus") == 1


# -- import-dist --------------------------------------------------------------------


def test_import_dist_single_locus_reproducible(tmp_path):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    args = ["import-dist", *dataset_args(), "--locus", "gltA", "--pa", "0.8",
            "-M", "2000", "--seed", "42"]
    assert run(*args, "--out", out1) == 0
    assert run(*args, "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    assert doc["locus"] == "gltA"
    assert doc["m"] == 12
    assert len(doc["q"]) == 12
    assert abs(sum(doc["q"]) - 1.0) < 1e-9


def test_import_dist_all_loci(tmp_path):
    out = tmp_path / "dists"
    assert run("import-dist", *dataset_args(), "--locus", "all",
               "-M", "1000", "--out", out) == 0
    files = sorted(p.name for p in out.glob("*.dist.json"))
    assert files == ["aspA.dist.json", "glnA.dist.json", "gltA.dist.json"]


def test_import_dist_bad_pa_exits_one(tmp_path):
    assert run("import-dist", *dataset_args(), "--pa", "1.5", "--out", tmp_path / "x.json") == 1


# -- estimate / joint / test-variation ---------------------------------------------------


def test_estimate_consumes_dist_files(tmp_path):
    dists = tmp_path / "dists"
    assert run("import-dist", *dataset_args(), "-M", "3000", "--seed", "7", "--out", dists) == 0
    out = tmp_path / "est.json"
    assert run("estimate", *dataset_args(), "--dists", dists, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert [entry["locus"] for entry in doc["loci"]] == ["glnA", "gltA"]
    assert doc["skipped_loci"] == ["aspA"]
    for entry in doc["loci"]:
        assert set(entry) >= {"lambda_hat", "ci", "alpha", "sigma2", "I", "J",
                              "gamma", "n_pairs", "G", "cl_max", "boundary_flags"}
        lo, hi = entry["ci"]
        assert lo <= entry["lambda_hat"]
        assert hi == "inf" or entry["lambda_hat"] <= hi


def test_joint_and_variation(tmp_path):
    out = tmp_path / "joint.json"
    assert run("joint", *dataset_args(), "-M", "3000", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert "lambda_hat" in doc and "gamma" in doc

    var_out = tmp_path / "var.json"
    forest = tmp_path / "forest.tsv"
    assert run("test-variation", *dataset_args(), "-M", "3000",
               "--out", var_out, "--forest-out", forest) == 0
    var = json.loads(var_out.read_text())
    assert var["df"] == 1
    assert 0.0 <= var["p_value"] <= 1.0
    lines = forest.read_text().strip().split("\n")
    assert lines[0] == "locus\tlambda_hat\tci_lo\tci_hi"
    assert [line.split("\t")[0] for line in lines[1:]] == ["glnA", "gltA", "_all_"]


# -- simulate / experiment -----------------------------------------------------------------


def sim_config(tmp_path, **overrides):
    cfg = {
        "n_samples": 200,
        "loci": [{"name": "locA", "length": 150}, {"name": "locB", "length": 180},
                 {"name": "locC", "length": 150}],
        "theta": [4.0, 4.0, 4.0],
        "lambda": [1.0, 1.0, 1.0],
        "import": {"model": "complete", "p_a": 0.8},
        "seed": 11,
    }
    cfg.update(overrides)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_round_trips_through_parsers(tmp_path):
    cfg = sim_config(tmp_path)
    out = tmp_path / "sim_out"
    assert run("simulate", "--config", cfg, "--out-dir", out) == 0
    assert (out / "profiles.tsv").exists()
    truth = json.loads((out / "truth.json").read_text())
    assert truth["seed"] == 11
    assert truth["n_sts"] >= 2
    # the simulated files feed straight back into the analysis commands
    est = tmp_path / "est.json"
    assert run("estimate", "--profiles", out / "profiles.tsv", "--alleles-dir", out,
               "-M", "2000", "--out", est) == 0
    doc = json.loads(est.read_text())
    assert len(doc["loci"]) + len(doc["skipped_loci"]) == 3


def test_simulate_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"n_samples\": 100,\n  oops\n}")
    assert run("simulate", "--config", bad, "--out-dir", tmp_path / "o") == 1
    missing = tmp_path / "partial.json"
    missing.write_text(json.dumps({"n_samples": 100}))
    assert run("simulate", "--config", missing, "--out-dir", tmp_path / "o") == 1


def test_full_pipeline_smoke(tmp_path):
    cfg = sim_config(tmp_path)
    sim_out = tmp_path / "data"
    assert run("simulate", "--config", cfg, "--out-dir", sim_out) == 0
    ds = ["--profiles", sim_out / "profiles.tsv", "--alleles-dir", sim_out]
    assert run("extract", *ds, "--out", tmp_path / "slv.tsv") == 0
    assert run("import-dist", *ds, "-M", "2000", "--out", tmp_path / "dists") == 0
    assert run("estimate", *ds, "--dists", tmp_path / "dists",
               "--out", tmp_path / "est.json") == 0
    assert run("test-variation", *ds, "--dists", tmp_path / "dists",
               "--out", tmp_path / "var.json") == 0
    var = json.loads((tmp_path / "var.json").read_text())
    assert 0.0 <= var["p_value"] <= 1.0


def test_experiment_command_and_thread_invariance(tmp_path):
    cfg = {
        "design": "recovery",
        "replicates": 3,
        "lambda": 1.0,
        "loci": [{"name": "a", "length": 120}, {"name": "b", "length": 150}],
        "import_means": [8.0, 10.0],
        "n_pairs": 80,
        "seed": 5,
    }
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert run("experiment", "--config", path, "--out-dir", out1) == 0
    assert run("experiment", "--config", path, "--out-dir", out2, "--threads", "4") == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "replicates.tsv").read_bytes() == (out2 / "replicates.tsv").read_bytes()
    report = json.loads((out1 / "report.json").read_text())
    assert report["design"] == "recovery"
    assert "individual_rmse" in report["per_metric"]


def test_version_flag(capsys):
    assert run("--version") == 0


def test_estimate_pairwise_theta_and_lenient_mode(tmp_path):
    out = tmp_path / "est.json"
    code = run("estimate", *dataset_args(), "--theta-ratio", "pairwise",
               "--alpha", "per-locus", "--mode", "lenient",
               "-M", "2000", "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["meta"]["config"]["theta_method"] == "pairwise"
    assert len(doc["loci"]) == 2


def test_joint_single_informative_locus_exits_two(tmp_path, capsys):
    # restricted to aspA (no SLV pairs) + glnA (one pair): only one locus
    # carries information, so the pooled estimate must refuse
    code = run("joint", *dataset_args(), "--loci", "aspA,glnA", "-M", "1000")
    assert code == 2
