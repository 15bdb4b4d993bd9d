"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import fhdp


def test_version_attributes():
    assert fhdp.TOOL_VERSION == "fhdp 0.1.0"
    assert fhdp.SCENARIO_SCHEMA_VERSION == 1
    assert fhdp.PLAN_SCHEMA_VERSION == 1
    assert fhdp.METRICS_SCHEMA_VERSION == 1


def test_compute_time_worked_example():
    # 1 TFLOP of work on a 0.404 TFLOPS device at 50% utilization with
    # 20% overhead: 1e12 * 1.2 / (0.404e12 * 0.5).
    got = fhdp.compute_time(1.0e12, 0.404e12)
    assert got == pytest.approx(5.940594059405941, rel=1e-9)


def test_comm_time_worked_example():
    # 100 MB partition, 10 microbatches, 12.5 MB/s link: forward and
    # backward activations both cross the link.
    got = fhdp.comm_time(100.0e6, 10, 12.5e6)
    assert got == pytest.approx(192.0, rel=1e-9)


def test_generate_is_deterministic_and_hashed():
    a = fhdp.generate_scenario(vehicles=5, seed=11)
    b = fhdp.generate_scenario(vehicles=5, seed=11)
    assert a == b
    c = fhdp.generate_scenario(vehicles=5, seed=12)
    assert c != a
    h = fhdp.scenario_hash(a)
    assert len(h) == 16
    assert int(h, 16) >= 0
    assert a["tool_version"] == fhdp.TOOL_VERSION
    assert fhdp.scenario_warnings(a) == []


def test_build_plan_round_trip():
    scenario = fhdp.generate_scenario(vehicles=5, seed=11)
    plan = fhdp.build_plan(scenario, scheduler="swift", seed=3)
    assert plan["schema_version"] == fhdp.PLAN_SCHEMA_VERSION
    assert plan["scenario_hash"] == fhdp.scenario_hash(scenario)
    assert plan["tool_version"] == fhdp.TOOL_VERSION
    assert plan["scheduler"] == "swift"
    again = fhdp.build_plan(scenario, scheduler="swift", seed=3)
    assert again == plan
    feasible = [c for c in plan["clusters"] if c["feasible"]]
    assert feasible, "expected at least one schedulable cluster"
    for cluster in feasible:
        assert cluster["templates"], "feasible cluster must carry templates"


def test_unknown_scheduler_rejected():
    scenario = fhdp.generate_scenario(vehicles=3, seed=1)
    with pytest.raises(ValueError):
        fhdp.build_plan(scenario, scheduler="sjf")


def test_simulate_fault_free_matches_predictions():
    scenario = fhdp.generate_scenario(vehicles=5, seed=11)
    plan = fhdp.build_plan(scenario, scheduler="swift", seed=3)
    result = fhdp.simulate_round(scenario, plan, seed=3)
    assert not result["aborted"]
    metrics = result["metrics"]
    assert metrics["schema_version"] == fhdp.METRICS_SCHEMA_VERSION
    assert metrics["scenario_hash"] == fhdp.scenario_hash(scenario)
    assert metrics["tool_version"] == fhdp.TOOL_VERSION
    assert metrics["fl_round_time_s"] > 0.0
    # Generated scenarios carry no faults, so every pipeline execution
    # must complete and land on its analytic time prediction.
    for cluster in metrics["clusters"]:
        assert cluster["lost_epochs"] == 0
        for run in cluster["pipeline_runs"]:
            assert run["completed"]
            assert run["simulated_s"] == pytest.approx(
                run["predicted_s"], rel=1e-6
            )
    # Traces are CSV with a fixed header, one per simulated cluster.
    assert set(result["traces"]) == {
        c["anchor_vehicle"] for c in metrics["clusters"]
    }
    for text in result["traces"].values():
        assert text.splitlines()[0] == (
            "timestamp,kind,pipeline_id,vehicle_id,detail"
        )
    repeat = fhdp.simulate_round(scenario, plan, seed=3)
    assert repeat["metrics"] == metrics


def test_train_policy_and_reuse():
    scenario = fhdp.generate_scenario(vehicles=5, seed=11)
    policy, curve = fhdp.train_policy(scenario, episodes=40, seed=5)
    assert policy["scenario_hash"] == fhdp.scenario_hash(scenario)
    assert len(curve) == 40
    assert all(math.isfinite(ret) for _, ret in curve)
    plan = fhdp.build_plan(scenario, scheduler="swift", seed=3, policy=policy)
    assert any(c["feasible"] for c in plan["clusters"])
