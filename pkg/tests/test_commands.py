"""
End-to-end runs of the command providers on the tiny configuration.

build-eim and train run once per module into a shared output directory; the
other commands read the models they leave behind.
"""

import math
import os
from unittest import mock

import numpy as np
import pytest

from frac_rbm.commands import BenchCommands, EIMCommands, EvalCommands, TrainCommands
from frac_rbm.commands import pipeline
from frac_rbm.commands.command_utils import read_csv
from frac_rbm.core.config import RunConfig
from frac_rbm.core.errors import ModelIOError
from frac_rbm.core.model_io import load
from frac_rbm.methods.problems import Subdomain


def _variant(config: RunConfig, **changes) -> RunConfig:
    values = {k: v for k, v in config.as_metadata().items() if k != "version"}
    values.update(threads=1, output_dir=config.output_dir, log_dir=config.log_dir)
    values.update(changes)
    return RunConfig.from_values(**values)


def _rows(path: str):
    return read_csv(path)[2]


@pytest.fixture(scope="module")
def run(tiny_run_config):
    eim_summary = EIMCommands(tiny_run_config).cmd_build_eim()
    train_summary = TrainCommands(tiny_run_config).cmd_train()
    return tiny_run_config, eim_summary, train_summary


# --- build-eim ---


def test_build_eim_summary(run):
    config, eim_summary, _ = run
    assert set(eim_summary) == {"D1", "D2"}
    for name, entry in eim_summary.items():
        assert 1 <= entry["Q"] <= config.eim_q_max
        assert entry["sup_error"] < 1e-8
        assert entry["positive"] is True
        assert os.path.isfile(entry["path"])
        assert entry["path"].endswith(f"eim_{name}.frbm")


def test_build_eim_tables(run):
    config, eim_summary, _ = run
    out = config.output_dir
    for name, entry in eim_summary.items():
        digest, header, rows = read_csv(os.path.join(out, f"eim_decay_{name}.csv"))
        assert digest == config.config_hash()
        assert header == ["q", "sup_error"]
        assert len(rows) == entry["Q"]
        errors = [float(r[1]) for r in rows]
        assert errors[-1] == min(errors) < config.eim_tol

        _, header, rows = read_csv(os.path.join(out, f"eim_magic_{name}.csv"))
        assert header == ["q", "s", "y"]
        assert len(rows) == entry["Q"]
        assert all(Subdomain(name).contains(float(r[1])) for r in rows)

        assert os.path.isfile(os.path.join(out, f"eim_envelope_{name}.csv"))


# --- train ---


def test_train_summary(run):
    config, _, train_summary = run
    assert set(train_summary) == {"D1", "D2"}
    for name, entry in train_summary.items():
        assert 1 <= entry["N"] <= config.n_max
        assert 0.0 <= entry["median_E"] <= entry["max_E"]
        assert entry["median_F"] >= 0.0
        assert entry["truth_gap_median"] >= 0.0
        bundle = load(entry["path"])
        assert bundle.subdomain is Subdomain(name)
        assert bundle.reduced.N == entry["N"]
        assert bundle.scm.n_constraints == config.n_constraints
        assert set(bundle.timings) == {"eim", "scm", "offline"}
        assert bundle.config == config.as_metadata()


def test_train_tables(run):
    config, _, train_summary = run
    out = config.output_dir
    for name, entry in train_summary.items():
        header, rows = read_csv(os.path.join(out, f"convergence_{name}.csv"))[1:]
        assert header == ["N", "median_E", "max_E", "min_E", "median_F", "max_F", "min_F"]
        assert [int(r[0]) for r in rows] == list(range(1, entry["N"] + 1))
        assert float(rows[-1][1]) == entry["median_E"]

        header, rows = read_csv(os.path.join(out, f"errors_vs_s_{name}.csv"))[1:]
        assert header[:2] == ["s", "nu"]
        assert header[-1] == "truth_gap"
        assert rows
        assert all(r[1] == "nan" for r in rows)

        assert len(_rows(os.path.join(out, f"greedy_{name}.csv"))) == entry["N"]


def test_train_reuses_saved_eim(run):
    """The EIM model in the trained bundle is the one build-eim saved."""
    config, eim_summary, train_summary = run
    for name in ("D1", "D2"):
        saved = load(eim_summary[name]["path"]).eim
        trained = load(train_summary[name]["path"]).eim
        np.testing.assert_array_equal(trained.interp_matrix, saved.interp_matrix)
        np.testing.assert_array_equal(trained.s_snapshots, saved.s_snapshots)


def test_obtain_eim_skips_rebuild_when_config_matches(run):
    config, _, _ = run
    with mock.patch.object(pipeline, "build_eim", side_effect=AssertionError("rebuilt")):
        eim = pipeline.obtain_eim(config, Subdomain.D1)
    assert eim.subdomain is Subdomain.D1


def test_obtain_eim_rebuilds_for_other_config(run):
    config, _, _ = run
    other = _variant(config, eim_tol=1e-9)
    with mock.patch.object(pipeline, "build_eim", return_value="rebuilt") as build:
        assert pipeline.obtain_eim(other, Subdomain.D1) == "rebuilt"
    build.assert_called_once()


def test_runs_are_deterministic(run, tmp_path):
    """Identical configurations reproduce the tables byte for byte."""
    config, _, _ = run
    repeat = _variant(config, output_dir=str(tmp_path / "again"))
    assert repeat.config_hash() == config.config_hash()
    EIMCommands(repeat).cmd_build_eim()
    TrainCommands(repeat).cmd_train()
    for table in ("eim_decay_D1.csv", "eim_magic_D2.csv", "convergence_D1.csv", "greedy_D2.csv"):
        with open(os.path.join(config.output_dir, table), "rb") as a:
            with open(os.path.join(repeat.output_dir, table), "rb") as b:
                assert a.read() == b.read(), table


# --- eval ---


def test_eval(run, tmp_path):
    config, _, train_summary = run
    dump = str(tmp_path / "field.csv")
    result = EvalCommands(config).cmd_eval(model=train_summary["D1"]["path"], s=0.3, dump=dump)
    assert result["subdomain"] == "D1"
    assert result["s"] == 0.3
    assert result["nu"] is None
    assert len(result["coefficients"]) == result["N"] == train_summary["D1"]["N"]
    assert result["l2_norm"] > 0.0
    assert math.isfinite(result["oracle_l2_error"])
    header, rows = read_csv(dump)[1:]
    assert header == ["x1", "x2", "u_N"]
    assert len(rows) == (config.n + 1) ** 2


def test_eval_outside_subdomain(run):
    config, _, train_summary = run
    with pytest.raises(ValueError, match="outside subdomain"):
        EvalCommands(config).cmd_eval(model=train_summary["D1"]["path"], s=0.7)


def test_eval_needs_reduced_model(run):
    config, eim_summary, _ = run
    with pytest.raises(ModelIOError, match="no reduced model"):
        EvalCommands(config).cmd_eval(model=eim_summary["D1"]["path"], s=0.3)


# --- certify ---


def test_certify_all(run):
    config, _, _ = run
    summary = EvalCommands(config).cmd_certify()
    assert set(summary) == {"D1", "D2"}
    for name, entry in summary.items():
        assert entry["points"] == config.validation_points
        for key in ("bound_violations", "beta_violations", "trace_violations"):
            assert 0 <= entry[key] <= entry["points"]
        header, rows = read_csv(os.path.join(config.output_dir, f"certify_{name}.csv"))[1:]
        assert header[-1] == "beta_exact"
        assert len(rows) == config.validation_points
        assert len(_rows(os.path.join(config.output_dir, f"trace_inequality_{name}.csv"))) == config.validation_points
        assert entry["trace_checks"] == config.validation_points
        assert entry["trace_modes"] == config.oracle_modes
        assert 0 <= entry["uncertified"] <= entry["points"]


def test_certify_trace_checks_use_seeded_random_points(run):
    config, _, _ = run
    EvalCommands(config).cmd_certify(model=pipeline.model_path(config, "rb", Subdomain.D1))
    certified = _rows(os.path.join(config.output_dir, "certify_D1.csv"))
    header, traced = read_csv(os.path.join(config.output_dir, "trace_inequality_D1.csv"))[1:]
    assert header == ["s", "nu", "modes_J", "trace_hs_norm_J", "scaled_xh_norm"]
    picks = sorted(np.random.default_rng(config.seed).choice(len(certified), len(traced), replace=False))
    assert [float(r[0]) for r in traced] == [float(certified[i][0]) for i in picks]
    assert {int(r[2]) for r in traced} == {config.oracle_modes}


def test_certify_single_model(run):
    config, _, train_summary = run
    summary = EvalCommands(config).cmd_certify(model=train_summary["D2"]["path"])
    assert list(summary) == ["D2"]


def test_certify_missing_model(run, tmp_path):
    config, _, _ = run
    with pytest.raises(ModelIOError, match="not found"):
        EvalCommands(config).cmd_certify(model=str(tmp_path / "none.frbm"))


# --- bench and validate-oracle ---


def test_bench(run):
    config, _, train_summary = run
    summary = BenchCommands(config).cmd_bench()
    for name, entry in summary.items():
        assert entry["N"] == train_summary[name]["N"]
        assert entry["truth_seconds"] > 0.0
        assert entry["speedup"] > 0.0
        rows = _rows(os.path.join(config.output_dir, f"bench_{name}.csv"))
        assert len(rows) == config.bench_queries
        assert [int(r[0]) for r in rows] == list(range(1, config.bench_queries + 1))
        assert [row["level"] for row in entry["scaling"]] == [0]
        assert not os.path.exists(os.path.join(config.output_dir, f"bench_scaling_{name}.csv"))


def test_bench_scaling_table(run):
    config, _, _ = run
    summary = BenchCommands(config).cmd_bench(levels=2)
    for name, entry in summary.items():
        coarse, fine = entry["scaling"]
        assert (coarse["n"], coarse["M"]) == (config.n, config.M)
        assert (fine["n"], fine["M"]) == (2 * config.n, 2 * config.M)
        assert coarse["n_free"] == entry["n_free"]
        assert fine["n_free"] == (2 * config.n - 1) ** 2 * 2 * config.M
        assert 1 <= fine["N"] <= config.n_max
        assert fine["online_seconds"] > 0.0
        header, rows = read_csv(os.path.join(config.output_dir, f"bench_scaling_{name}.csv"))[1:]
        assert header[:5] == ["level", "n", "M", "n_free", "N"]
        assert [int(r[0]) for r in rows] == [0, 1]


def test_bench_rejects_zero_levels(run):
    config, _, _ = run
    with pytest.raises(ValueError, match="levels"):
        BenchCommands(config).cmd_bench(levels=0)


def test_validate_oracle_single_level(run):
    config, _, _ = run
    result = BenchCommands(config).cmd_validate_oracle(levels=1)
    assert len(result["rows"]) == 3
    for s, n, M, dofs, l2_error, hs_error, rate in result["rows"]:
        assert (n, M) == (config.n, config.M)
        assert dofs == (config.n - 1) ** 2 * config.M
        assert l2_error > 0.0
        assert math.isnan(rate)
    assert os.path.isfile(os.path.join(config.output_dir, "oracle_validation.csv"))


def test_validate_oracle_rejects_zero_levels(run):
    config, _, _ = run
    with pytest.raises(ValueError, match="levels"):
        BenchCommands(config).cmd_validate_oracle(levels=0)


# --- pipeline helpers ---


def test_model_path(run):
    config, _, _ = run
    assert pipeline.model_path(config, "rb", Subdomain.D2) == os.path.join(config.output_dir, "rb_D2.frbm")


def test_config_from_metadata(run):
    config, _, _ = run
    restored = pipeline.config_from_metadata(config.as_metadata())
    assert restored.config_hash() == config.config_hash()
    with pytest.raises(ModelIOError, match="unusable configuration"):
        pipeline.config_from_metadata({"n": 0})


def test_validation_parameters(run):
    config, _, _ = run
    grid = pipeline.validation_parameters(config, Subdomain.D2)
    assert len(grid) == config.validation_points
    assert all(Subdomain.D2.contains(mu.s) and mu.nu is None for mu in grid)

    two = _variant(config, rhs="example2")
    grid = pipeline.validation_parameters(two, Subdomain.D1)
    assert all(0.0 <= mu.nu <= 1.0 for mu in grid)
    assert grid == pipeline.validation_parameters(two, Subdomain.D1)
