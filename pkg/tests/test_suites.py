import json

import pytest

from config import SUITE_ALIASES, SUITE_NAMES
from core.errors import ConfigError, PrerequisiteError
from core.experiments import Suites
from core.experiments.ExperimentConfig import ExperimentConfig
from core.experiments.Runner import Runner
from core.experiments.Suites import SUITES, Suite, reproduce
from core.model.Checkpoint import save_checkpoint
from core.model.Encoder import Encoder

TRAIN_CONFIG = {"n": 3, "r": 1, "dist": "uniform", "p_mask": 0.3}


def write_run(directory, masked, total=None, r=1):  # metrics.csv and manifest.json of a finished run
    directory.mkdir(parents=True)
    total = total or masked
    lines = ["step,L,L_obs,L_mask"] + [f"{t},{L},{L},{m}" for t, (L, m) in enumerate(zip(total, masked), start=1)]
    (directory / "metrics.csv").write_text("\n".join(lines) + "\n")
    (directory / "manifest.json").write_text(json.dumps({"config": {"r": r}}))
    return str(directory)


def runner(tmp_path, **params):
    return Runner(ExperimentConfig("reproduce", out=str(tmp_path / "out"), params=params))


def test_every_suite_registered():
    assert set(SUITES) == set(SUITE_NAMES)
    assert set(SUITE_ALIASES.values()) == set(SUITES)
    assert len(SUITE_ALIASES) == 13


def test_loss_drop_passes(tmp_path):
    run_dir = write_run(tmp_path / "run", [1 / 9] * 150 + [1e-3] * 250)
    report = reproduce(runner(tmp_path, run_dir=run_dir), "loss-drop")
    assert report["passed"], report["claims"]
    assert [c["claim"] for c in report["claims"]][0] == "exactly one drop"


def test_loss_drop_fails_without_drop(tmp_path):
    run_dir = write_run(tmp_path / "run", [1 / 9] * 400)
    report = reproduce(runner(tmp_path, run_dir=run_dir), "loss-drop")
    assert not report["passed"]


def test_tolerance_override(tmp_path):
    run_dir = write_run(tmp_path / "run", [1 / 9] * 150 + [0.02] * 250)
    strict = reproduce(runner(tmp_path, run_dir=run_dir), "loss-drop")
    loose = reproduce(runner(tmp_path, run_dir=run_dir, tolerances={"final_L": 0.1}), "loss-drop")
    assert not strict["passed"]
    assert loose["passed"]


def test_rank_sweep(tmp_path):
    runs = {"1": write_run(tmp_path / "r1", [0.01] * 200), "2": write_run(tmp_path / "r2", [0.02] * 200)}
    assert reproduce(runner(tmp_path, rank_runs=runs), "rank-sweep")["passed"]


def test_missing_run_dir(tmp_path):
    with pytest.raises(PrerequisiteError, match="matcomp-lab train"):
        reproduce(runner(tmp_path), "loss-drop")


def test_missing_retrain_runs(tmp_path):
    with pytest.raises(PrerequisiteError, match="retrain-component"):
        reproduce(runner(tmp_path), "component-retrain")


def test_unknown_suite(tmp_path):
    with pytest.raises(ConfigError):
        reproduce(runner(tmp_path), "everything")


@pytest.fixture
def saved_pair(tmp_path, double, tiny_config):  # (pre-drop, final) checkpoints of an untrained tiny model
    paths = []
    for seed, step in ((1, 4000), (0, 14000)):
        path = str(tmp_path / f"step_{step}")
        save_checkpoint(path, Encoder.init(tiny_config, seed), step=step, train_config=TRAIN_CONFIG)
        paths.append(path)
    return paths


def run_suite(tmp_path, name, **params):
    report = reproduce(runner(tmp_path, **params), name)
    assert set(report) == {"suite", "passed", "claims", "tolerances"}
    assert all(set(c) == {"claim", "measured", "target", "passed"} for c in report["claims"])
    assert report["passed"] == all(c["passed"] for c in report["claims"])
    return report


def test_suite_without_claims_fails(tmp_path):
    assert not Suite(runner(tmp_path), "loss-drop").report()["passed"]


def test_alias_runs_named_suite(tmp_path):
    run_dir = write_run(tmp_path / "run", [1 / 9] * 150 + [1e-3] * 250)
    report = reproduce(runner(tmp_path, run_dir=run_dir), "fig2")
    assert report["suite"] == "loss-drop"
    assert report["passed"]


@pytest.mark.parametrize("name, claims", [
    ("vs-nucnorm", ["bert MSE < nuclear norm MSE", "bert nuclear norm > baseline nuclear norm"]),
    ("copying", [f"{loss} ({family}, m={m})" for family in ("low-rank", "random") for m in ("MASK", 0.44, -0.24)
                 for loss in ("L'_mask", "L_obs")]),
    ("pre-drop-attention", ["ablation change of L_obs before the drop", "ablation change of L_mask before the drop",
                            "pre-drop model with final attention: L_mask change"]),
    ("post-drop-attention", ["ablation factor on L_mask", "ablated L_obs", "final model with pre-drop attention: L_obs",
                             "permutation factor on L_mask", "permutation factor on L_obs"]),
    ("negation-patch", ["masked MSE to donor / to input"]),
    ("probes", ["best intermediate / first layer masked-row probe MSE",
                "Spearman correlation of element probe MSE with depth"]),
    ("embeddings", ["token norm asymmetry", "sign separability in top-2 PCs", "pre-drop separability on final PCs",
                    "column clustering gain over pre-drop"]),
    ("distribution-shift", ["L on normal-0.25 / in-distribution L", "L on laplace-0.25 / in-distribution L"]),
])
def test_checkpoint_suites(tmp_path, saved_pair, name, claims):
    pre, final = saved_pair
    report = run_suite(tmp_path, name, checkpoint=final, checkpoint_pre=pre, samples=20)
    assert report["suite"] == name
    assert [c["claim"] for c in report["claims"]] == claims


def test_head_groups_from_labels(tmp_path, saved_pair):
    report = run_suite(tmp_path, "head-groups", checkpoint=saved_pair[1], samples=8)
    found = report["claims"][0]
    assert found["claim"] == "labelled head groups found"
    assert len(report["claims"]) == 1 + found["measured"]
    assert all(c["claim"].startswith("ablating ") for c in report["claims"][1:])


def test_head_groups_fail_without_labelled_heads(tmp_path, saved_pair, monkeypatch):
    monkeypatch.setattr(Suites, "heads_with_label", lambda labels, label: [])
    report = run_suite(tmp_path, "head-groups", checkpoint=saved_pair[1], samples=8)
    assert [c["measured"] for c in report["claims"]] == [0]
    assert not report["passed"]


def test_component_retrain(tmp_path):
    flat = [0.2] * 400
    runs = {
        "token_embeddings": write_run(tmp_path / "tok", flat),
        "mlp": write_run(tmp_path / "mlp", flat),
        "positional_embeddings": write_run(tmp_path / "pos", [0.2] * 300 + [1e-3] * 100),
        "attention": write_run(tmp_path / "att", [0.2] * 150 + [1e-3] * 250),
    }
    report = run_suite(tmp_path, "component-retrain", retrain_runs=runs)
    assert len(report["claims"]) == 3
    assert report["passed"], report["claims"]


def test_component_retrain_fails_when_order_reversed(tmp_path):
    runs = {
        "token_embeddings": write_run(tmp_path / "tok", [0.2] * 400),
        "mlp": write_run(tmp_path / "mlp", [0.2] * 400),
        "positional_embeddings": write_run(tmp_path / "pos", [0.2] * 150 + [1e-3] * 250),
        "attention": write_run(tmp_path / "att", [0.2] * 300 + [1e-3] * 100),
    }
    report = run_suite(tmp_path, "component-retrain", retrain_runs=runs)
    assert [c["passed"] for c in report["claims"]] == [True, True, False]


def test_nucnorm_baseline_exact_claims(tmp_path):
    report = run_suite(tmp_path, "nucnorm-baseline", samples=2)
    claims = {c["claim"]: c["passed"] for c in report["claims"]}
    assert len(claims) == 4
    assert claims["fully observed input returned"]
    assert claims["objective vs grid oracle (worst of 20)"]
