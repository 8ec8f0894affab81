from __future__ import annotations

import json
import os

import numpy as np
import pytest

from shellwalk import cli
from shellwalk.environment import EnvironmentSpec, bernoulli_delta, zero_delta
from shellwalk.experiments import (ExperimentConfig, OracleSuiteConfig, REFERENCE_CHECKS,
                                   class_proportions, derive_seed, report_json, run_annealed,
                                   run_landmarks, run_levelsets, run_oracle_suite, run_quenched,
                                   run_walk)

SPEC = EnvironmentSpec(2, delta_law=bernoulli_delta(0.5), seed=1)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(SPEC, n=100)
    with pytest.raises(ValueError):
        ExperimentConfig(SPEC, environments=0)
    with pytest.raises(ValueError):
        ExperimentConfig(SPEC, delta=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(SPEC, epsilon=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"environment": {"d": 2}, "bogus": 1})
    cfg = ExperimentConfig(SPEC, n=5000, offsets=(0, 1))
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_seed_derivation():
    a = derive_seed(0, "env", 1)
    assert a == derive_seed(0, "env", 1)
    assert len({derive_seed(0, "env", e) for e in range(1000)}) == 1000
    assert derive_seed(0, "env", 1) != derive_seed(0, "walk", 1)
    assert derive_seed(2 ** 64 - 1, "x") < 2 ** 63


def test_flat_environment_reports_no_valley():
    cfg = ExperimentConfig(SPEC, n=1000, environments=3, fixed_s=((0.0,) * 40, (0.0,)))
    rep = run_quenched(cfg)
    assert rep["summary"]["no_valley"] == 3
    assert rep["summary"]["walk_replicas"] == 0
    assert rep["pass"]
    json.loads(report_json(rep))


def test_quenched_small_run():
    cfg = ExperimentConfig(SPEC, n=20000, environments=1, trajectories=2, max_environments=400,
                           offsets=(0, 1))
    rep = run_quenched(cfg)
    s = rep["summary"]
    assert s["passing_A_n"] <= 1
    assert s["examined"] == s["no_valley"] + s["outside_A_n"] + s["passing_A_n"]
    for env in rep["environments"]:
        for w in env.get("walks", []):
            assert w["window_fraction_sum"] <= 1
    for v in s["bands"].values():
        assert v["pass_rate"] is None or 0 <= v["pass_rate"] <= 1


def test_comparator_and_target_share_class_law():
    spec = EnvironmentSpec(3, delta_law=bernoulli_delta(0.3))
    p = class_proportions(spec)
    assert abs(sum(p.values()) - 1) < 1e-12
    assert len(p) == 40


def test_annealed_trivial_case_bitwise_and_cdfs():
    spec = EnvironmentSpec(2, delta_law=zero_delta(), seed=4)
    rep = run_annealed(ExperimentConfig(spec, n=2000, environments=6, path_samples=6, window=3))
    assert rep["hard_checks"]["trivial_reduction_bitwise"]
    assert rep["hard_checks"]["cdf_monotone"] and rep["hard_checks"]["cdf_in_unit_interval"]
    obs = rep["cdf"]["observed"]
    assert obs == sorted(obs) and 0 <= obs[0] and obs[-1] <= 1
    assert 0 <= rep["summary"]["ks_distance"] <= 1


def test_annealed_independent_of_worker_count():
    base = dict(n=2000, environments=3, trajectories=2, path_samples=4, window=2)
    a = run_annealed(ExperimentConfig(SPEC, workers=1, **base))
    b = run_annealed(ExperimentConfig(SPEC, workers=2, **base))
    assert report_json(a) == report_json(b)


def test_oracle_suite_small_and_self_test():
    cfg = OracleSuiteConfig(dims=(1, 2), radii=(2,), seeds=2, dirichlet_instances=3,
                            mc_configs=2, mc_repetitions=20000)
    rep = run_oracle_suite(cfg)
    assert rep["pass"]
    assert rep["summary"]["hard_failed"] == 0
    assert report_json(rep) == report_json(run_oracle_suite(cfg))
    bad = run_oracle_suite(OracleSuiteConfig(dims=(1, 2), radii=(2,), seeds=2,
                                             dirichlet_instances=0, corrupt=True))
    assert not bad["pass"]
    assert bad["summary"]["hard_failed"] > 0
    assert REFERENCE_CHECKS <= set(rep["by_check"])
    assert all(rep["by_check"][k]["reference"] for k in REFERENCE_CHECKS)


def test_small_commands():
    rep, tables = run_walk(SPEC, 5000, 3)
    assert rep["pass"] and "shell_histogram.csv" in tables
    rep, tables = run_levelsets(SPEC, [1, 2, 3])
    assert rep["pass"] and rep["bernoulli"]["classes"] == 24
    rep, tables = run_landmarks(SPEC, 1e5, 3, 0.2)
    assert len(rep["environments"]) == 3


def _write(tmp, name, data):
    p = os.path.join(tmp, name)
    with open(p, "w") as fh:
        json.dump(data, fh)
    return p


def test_cli_runs_every_command_deterministically(tmp_path):
    tmp = str(tmp_path)
    env = _write(tmp, "env.json", {"environment": SPEC.to_dict(), "radius": 2, "n": 3000,
                                   "shells": [1, 2], "environments": 2})
    exp = _write(tmp, "exp.json", {"environment": SPEC.to_dict(), "n": 2000, "environments": 2,
                                   "max_environments": 5, "window": 2})
    orc = _write(tmp, "orc.json", {"dims": [1], "radii": [2], "seeds": 1,
                                   "dirichlet_instances": 1})
    runs = [(["env", "dump"], env), (["walk", "run"], env), (["levelsets"], env),
            (["landmarks"], env), (["quenched"], exp), (["annealed"], exp), (["oracle"], orc)]
    for args, cfg in runs:
        for out in ("a", "b"):
            code = cli.main(args + ["--config", cfg, "--out", os.path.join(tmp, out)])
            assert code == 0, args
    for f in os.listdir(os.path.join(tmp, "a")):
        with open(os.path.join(tmp, "a", f), "rb") as fa, open(os.path.join(tmp, "b", f), "rb") as fb:
            assert fa.read() == fb.read(), f


def test_cli_exit_code_reflects_hard_checks(tmp_path):
    cfg = _write(str(tmp_path), "bad.json", {"dims": [1], "radii": [2], "seeds": 2,
                                             "dirichlet_instances": 0, "corrupt": True})
    assert cli.main(["oracle", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_cli_requires_command():
    with pytest.raises(SystemExit):
        cli.main([])
