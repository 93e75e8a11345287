"""Named desk-scale experiment presets.

Each preset returns a list of specs; a preset with several arms (for
example the MMC x bonus factorial) labels each arm in the spec name.
Environment and agent constants come from pilot calibration and are
recorded in the project's decisions ledger.
"""

from __future__ import annotations

from typing import Callable, Dict, List

from pseudocount.harness.spec import ExperimentSpec

# Four-room gridworld arms. Q is linear over rendered frames.
ROOMS_ENV = {"kind": "rooms", "rooms": 2, "room_size": 5, "cap": 100}
ROOMS_AGENT = {"q": "linear", "gamma": 0.99, "alpha": 0.01, "beta": 0.5, "epsilon_steps": 1000,
               "epsilon_end": 0.05, "batch_size": 16, "replay_capacity": 1000}

# Chain with intrinsic-only learning.
CHAIN_ENV = {"kind": "chain", "length": 30, "cap": 60}
CHAIN_AGENT = {"q": "tabular", "gamma": 0.95, "alpha": 0.3, "beta": 0.1, "epsilon_steps": 1000,
               "epsilon_end": 0.1, "batch_size": 4, "replay_capacity": 2000}

STREAM = {"height": 42, "width": 42, "bins": 8, "n_generators": 4, "period": 4000}


def four_way(seeds=tuple(range(20)), budget=20_000) -> List[ExperimentSpec]:
    """{MMC, Q-learning} x {bonus, no bonus} on the four-room gridworld."""
    specs = []
    for bonus in (True, False):
        for mmc in (True, False):
            agent = dict(ROOMS_AGENT, update="mmc" if mmc else "q")
            name = f"four_way_{'bonus' if bonus else 'nobonus'}_{'mmc' if mmc else 'q'}"
            specs.append(ExperimentSpec(
                name=name, env=dict(ROOMS_ENV), agent=agent,
                model={"kind": "empirical"} if bonus else {"kind": "none"},
                bonus={"c": 0.1}, seeds=list(seeds), budget=budget, stop_at_first_reward=True))
    return specs


def pg_scale(seeds=tuple(range(5)), budget=20_000) -> List[ExperimentSpec]:
    """Bonus + MMC agent with PG scale c in {0.1, 1, 10}."""
    return [ExperimentSpec(name=f"pg_scale_c{c:g}", env=dict(ROOMS_ENV),
                           agent=dict(ROOMS_AGENT, update="mmc"), model={"kind": "empirical"},
                           bonus={"c": c}, seeds=list(seeds), budget=budget)
            for c in (0.1, 1.0, 10.0)]


def intrinsic_only(seeds=tuple(range(20)), budget=15_000) -> List[ExperimentSpec]:
    """Chain agent learning from the bonus alone, and the epsilon-greedy baseline."""
    return [
        ExperimentSpec(name="intrinsic_only", env=dict(CHAIN_ENV),
                       agent=dict(CHAIN_AGENT, update="mmc", intrinsic_only=True),
                       model={"kind": "empirical"}, bonus={"c": 0.1}, seeds=list(seeds), budget=budget),
        ExperimentSpec(name="intrinsic_only_baseline", env=dict(CHAIN_ENV),
                       agent=dict(CHAIN_AGENT, update="q"), model={"kind": "none"},
                       seeds=list(seeds), budget=budget),
    ]


def lr_schedules(seeds=(0, 1, 2), budget=20_000) -> List[ExperimentSpec]:
    """Constant, 1/n and 1/sqrt(n) PixelCNN learning rates on the switching stream."""
    return [ExperimentSpec(
        name="lr_schedules", kind="lr_sweep", stream=dict(STREAM), seeds=list(seeds), budget=budget,
        window=1000,
        schedules=[{"schedule": "constant", "lr": 1e-3}, {"schedule": "inverse", "lr": 0.1},
                   {"schedule": "inverse_sqrt", "lr": 0.1}])]


def online_vs_permuted(seeds=(0,), budget=50_000) -> List[ExperimentSpec]:
    """Sequential against single-pass permuted training on the switching stream."""
    return [ExperimentSpec(
        name="online_vs_permuted", kind="lr_sweep", stream=dict(STREAM, orders=["sequential", "permuted"]),
        seeds=list(seeds), budget=budget, window=1000, schedules=[{"schedule": "constant", "lr": 1e-3}])]


def pg_compare(seeds=(0, 1, 2), budget=10_000) -> List[ExperimentSpec]:
    """PixelCNN and CTS prediction gains on a shared stream."""
    return [ExperimentSpec(
        name="pg_comparison", kind="pg_comparison", stream=dict(STREAM), seeds=list(seeds), budget=budget,
        models=[{"kind": "pixelcnn", "label": "pixelcnn"}, {"kind": "cts", "label": "cts"}])]


PRESETS: Dict[str, Callable[..., List[ExperimentSpec]]] = {
    "four-way": four_way,
    "pg-scale": pg_scale,
    "intrinsic-only": intrinsic_only,
    "lr-schedules": lr_schedules,
    "online-vs-permuted": online_vs_permuted,
    "pg-comparison": pg_compare,
}


def preset(name: str, **kwargs) -> List[ExperimentSpec]:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)


def intrinsic_only_preset(spec: ExperimentSpec, out_dir=None, plots: bool = True):
    """Run ``spec`` with the extrinsic reward withheld from learning.

    The environment return is still logged as the evaluation metric.
    """
    from pseudocount.harness.runner import run_experiment

    variant = spec.with_overrides({"agent": dict(spec.agent, intrinsic_only=True)})
    return run_experiment(variant, out_dir, plots)
