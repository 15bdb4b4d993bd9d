"""Federated hierarchical pipeline scheduling toolkit.

Thin python wrapper around the native ``_fhdp`` extension.  The native
module exchanges JSON strings; this package converts to and from python
dicts at the boundary so callers can work with plain data structures.
"""

import json as _json

try:  # installed layout: extension lives inside the package
    from . import _fhdp as _core
except ImportError:  # development layout: extension at the build-tree root
    import _fhdp as _core

TOOL_VERSION = _core.TOOL_VERSION
SCENARIO_SCHEMA_VERSION = _core.SCENARIO_SCHEMA_VERSION
PLAN_SCHEMA_VERSION = _core.PLAN_SCHEMA_VERSION
METRICS_SCHEMA_VERSION = _core.METRICS_SCHEMA_VERSION

compute_time = _core.compute_time
comm_time = _core.comm_time

__all__ = [
    "TOOL_VERSION",
    "SCENARIO_SCHEMA_VERSION",
    "PLAN_SCHEMA_VERSION",
    "METRICS_SCHEMA_VERSION",
    "generate_scenario",
    "scenario_hash",
    "scenario_warnings",
    "build_plan",
    "train_policy",
    "simulate_round",
    "compute_time",
    "comm_time",
]


def _dumps(obj):
    """Accept either an already-serialized JSON string or a dict."""
    if isinstance(obj, str):
        return obj
    return _json.dumps(obj)


def generate_scenario(
    vehicles=5,
    seed=0,
    preset="jetson",
    name="",
    model_scale=1.0,
    components=4,
    units_per_component=3,
    dwell_min_s=60.0,
    dwell_max_s=600.0,
):
    """Generate a reproducible scenario; returns it as a dict."""
    return _json.loads(
        _core.generate_scenario(
            vehicles=vehicles,
            seed=seed,
            preset=preset,
            name=name,
            model_scale=model_scale,
            components=components,
            units_per_component=units_per_component,
            dwell_min_s=dwell_min_s,
            dwell_max_s=dwell_max_s,
        )
    )


def scenario_hash(scenario):
    """Canonical content hash of a scenario (dict or JSON string)."""
    return _core.scenario_hash(_dumps(scenario))


def scenario_warnings(scenario):
    """Non-fatal validation warnings for a scenario."""
    return _core.scenario_warnings(_dumps(scenario))


def build_plan(scenario, scheduler="swift", seed=0, policy=None):
    """Run admission, clustering, and pipeline scheduling; returns a plan dict."""
    policy_json = None if policy is None else _dumps(policy)
    return _json.loads(
        _core.build_plan(_dumps(scenario), scheduler=scheduler, seed=seed,
                         policy_json=policy_json)
    )


def train_policy(scenario, episodes=None, seed=None):
    """Train a scheduling policy on a scenario's feasible clusters.

    Returns ``(policy_dict, curve)`` where ``curve`` is a list of
    ``(episode, mean_return)`` pairs.
    """
    policy_json, curve = _core.train_policy(
        _dumps(scenario), episodes=episodes, seed=seed
    )
    return _json.loads(policy_json), list(curve)


def simulate_round(scenario, plan, recovery="", seed=0,
                   aggregation_overhead_s=0.0):
    """Simulate one federated round under a plan.

    Returns a dict with keys ``metrics`` (dict), ``traces`` (map from
    anchor vehicle id to CSV text), ``aborted`` (bool), and ``warnings``.
    """
    raw = _core.simulate_round(
        _dumps(scenario),
        _dumps(plan),
        recovery=recovery,
        seed=seed,
        aggregation_overhead_s=aggregation_overhead_s,
    )
    return {
        "metrics": _json.loads(raw["metrics_json"]),
        "traces": dict(raw["traces"]),
        "aborted": raw["aborted"],
        "warnings": list(raw["warnings"]),
    }
