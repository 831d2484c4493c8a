# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
import pandas as pd
import pytest

from cppdd.harness.config import ExperimentConfig
from cppdd.harness.data import sample_payloads
from cppdd.harness.experiments import (
    COLUMNS,
    check_results,
    configured_workflow,
    expected_detector,
    run_experiment,
    run_with_restart,
    trial_seed,
)
from cppdd.protocol import wire
from cppdd.protocol.types import SetupSeed
from cppdd.simnet import FaultPlan, TamperState


def config(experiment: str, **kwargs) -> ExperimentConfig:
    return ExperimentConfig(experiment=experiment, **kwargs)


def test_trial_seed_is_stable_and_label_dependent():
    assert trial_seed(0, "correctness", 2, 0) == trial_seed(0, "correctness", 2, 0)
    assert trial_seed(0, "correctness", 2, 0) != trial_seed(0, "correctness", 2, 1)
    assert 0 <= trial_seed(5, "x") < 2**63


def test_correctness_experiment_passes():
    cfg = config("correctness", n_values=(1, 2, 4), dim=5, trials=2)
    (df,) = run_experiment(cfg).values()
    assert list(df.columns) == COLUMNS["correctness"]
    assert len(df) == 6
    assert df["passed"].all()
    assert check_results(cfg, {"correctness": df}) == []


def test_detection_experiment_finds_every_tamper():
    cfg = config("detection", n_values=(4,), dim=8, trials=3)
    df = run_experiment(cfg)["detection"]
    assert list(df.columns) == COLUMNS["detection"]
    tampered, control = df[~df["control"]], df[df["control"]]
    assert len(tampered) == len(control) == 3
    assert tampered["detected"].all()
    assert (tampered["detector"] == tampered["expected_detector"]).all()
    assert not control["detected"].any()
    assert (control["detector"] == "").all()
    assert check_results(cfg, {"detection": df}) == []


def test_expected_detector():
    assert expected_detector(2, 5) == "client-3"
    assert expected_detector(5, 5) == "board"


def test_accounting_counts_are_exact():
    n, dim = 3, 4
    cfg = config("accounting", n_values=(n,), dim=dim, trials=1)
    row = run_experiment(cfg)["accounting"].iloc[0]
    assert row["obfuscation"] == 2 * n * dim
    assert row["aggregation"] == n * dim
    assert row["encryption"] == n * dim
    assert row["decryption"] == n * dim
    assert row["deobfuscation"] == 2 * n * dim + n
    assert row["reference_4nd"] == 4 * n * dim
    assert row["ratio"] == pytest.approx(1.75 + 1 / (4 * dim))
    assert row["bytes_per_link"] == wire.relay_frame_size(dim)
    assert row["storage_bytes_per_client"] > 0


def test_recovery_error_is_within_codec_step():
    cfg = config(
        "recovery", n_values=(3,), dim=784, payloads=str(sample_payloads())
    )
    tables = run_experiment(cfg)
    summary, values = tables["recovery"], tables["recovery_values"]
    assert summary["client"].tolist() == [1, 2, 3]
    assert (summary["max_abs_error"] <= 2.0**-20).all()
    assert len(values) == 3 * 784
    assert check_results(cfg, tables) == []


def test_recovery_is_exact_for_binary_payloads_without_scaling(tmp_path):
    path = tmp_path / "bits.csv"
    path.write_text("0,1,1\n1,0,1\n")
    cfg = config(
        "recovery", n_values=(2,), dim=3, payloads=str(path), scale_bits=0
    )
    tables = run_experiment(cfg)
    assert (tables["recovery"]["max_abs_error"] == 0.0).all()
    values = tables["recovery_values"]
    assert (values["original"] == values["recovered"]).all()


def test_scalability_experiment_reports_rounds_and_constant_frames():
    cfg = config("scalability", n_values=(2, 3, 5), dim=4, trials=2)
    df = run_experiment(cfg)["scalability"]
    assert list(df.columns) == COLUMNS["scalability"]
    assert df["n_clients"].tolist() == [2, 3, 5]
    assert df["rounds"].tolist() == [4, 5, 7]
    assert df["bytes_per_link"].nunique() == 1
    assert (df["total_ms"] > 0).all()


def test_restart_excludes_the_suspect():
    cfg = config("correctness", n_values=(5,), dim=4, trials=1)
    wf = configured_workflow(cfg, 5)
    wf[SetupSeed] = 11
    plan = FaultPlan({3: TamperState((1, 0, 0, 0))})
    first, second = run_with_restart(wf, plan)
    assert not first.succeeded
    assert first.notice.suspect == 3
    assert second.succeeded
    assert second.rounds == 6
    assert len(second.recovered) == 4


def test_restart_moves_later_behaviors_up():
    cfg = config("correctness", n_values=(4,), dim=2, trials=1)
    wf = configured_workflow(cfg, 4)
    wf[SetupSeed] = 3
    plan = FaultPlan({2: TamperState((1, 0)), 4: TamperState((0, 1))})
    transcripts = run_with_restart(wf, plan)
    # client 2 goes first, then the former client 4, now at priority 3
    assert [t.notice.suspect for t in transcripts[:2]] == [2, 3]
    assert transcripts[-1].succeeded
    assert transcripts[-1].rounds == 4


def test_check_results_reports_violations():
    cfg = config("correctness", n_values=(2,), dim=1, trials=1)
    df = pd.DataFrame(
        [[2, 0, True, True, True, False, False]], columns=COLUMNS["correctness"]
    )
    (message,) = check_results(cfg, {"correctness": df})
    assert "N=2" in message

    recovery = config("recovery", n_values=(2,), dim=1)
    empty = pd.DataFrame(columns=COLUMNS["recovery"])
    assert check_results(recovery, {"recovery": empty}) == [
        "Run aborted, nothing recovered"
    ]

    accounting = config("accounting", n_values=(2,), dim=1)
    row = dict.fromkeys(COLUMNS["accounting"], 0)
    row.update(n_clients=2, dim=1, obfuscation=3, ratio=2.5)
    failures = check_results(accounting, {"accounting": pd.DataFrame([row])})
    assert len(failures) == 2
