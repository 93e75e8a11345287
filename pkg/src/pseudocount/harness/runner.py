"""Seeded experiment execution and artifact writing.

Every output file is a pure function of the spec and the seed: no
timestamps, host names or wall-clock timings are written into metric files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import traceback
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from pseudocount.agents import Agent
from pseudocount.envs import replay_order
from pseudocount.harness import factory
from pseudocount.harness.metrics import RunMetrics
from pseudocount.harness.spec import ExperimentSpec, agent_config, bonus_config

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PSEUDOCOUNT_OUTPUT_ROOT"
STEP_COLUMNS = ("step", "episode", "action", "r_ext", "bonus", "reward", "pg", "loss",
                "bonus_computed", "epsilon")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def resolve_output_dir(spec: ExperimentSpec, out_dir=None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if spec.output_dir:
        return Path(spec.output_dir)
    return output_root() / spec.name


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# -- agent experiments ------------------------------------------------------


def run_seed(spec: ExperimentSpec, seed: int, step_log: Optional[list] = None) -> RunMetrics:
    """Train one agent for ``spec.budget`` steps; append per-step rows to ``step_log``."""
    env = factory.make_env(spec.env, seed)
    model = factory.make_model(spec.model, factory.frame_geometry(env), seed, spec.optimizer)
    q = factory.make_q(spec.agent, env)
    agent = Agent(q, agent_config(spec.agent), seed)
    cfg = bonus_config(spec.bonus)
    observe = (lambda e: e.render()) if spec.agent.get("q") == "linear" else None
    m = RunMetrics(seed=seed, budget=spec.budget, window=spec.effective_window)
    for _ in range(spec.budget):
        _, d = agent.step(env, model, cfg, observe)
        m.intrinsic_rewards.append(d["bonus"])
        m.density_losses.append(d["loss"])
        if step_log is not None:
            step_log.append([d[k] for k in STEP_COLUMNS])
        if d["r_ext"] > 0 and m.first_reward_step is None:
            m.first_reward_step = d["step"]
        if d["episode_end"]:
            m.episode_returns.append(d["episode_return"])
            m.episode_end_steps.append(d["step"])
        if spec.stop_at_first_reward and m.first_reward_step is not None:
            break
    return m


def _write_seed(seed_dir: Path, m: RunMetrics, step_log) -> None:
    seed_dir.mkdir(parents=True, exist_ok=True)
    write_csv(seed_dir / "steps.csv", STEP_COLUMNS, step_log)
    write_csv(seed_dir / "episodes.csv", ("episode", "end_step", "return"),
              ((i, s, r) for i, (s, r) in enumerate(zip(m.episode_end_steps, m.episode_returns))))
    x, y = m.curve
    write_csv(seed_dir / "curve.csv", ("step", "windowed_return"), zip(x.astype(int).tolist(), y.tolist()))
    write_json(seed_dir / "metrics.json", m.summary())


def run_experiment(spec: ExperimentSpec, out_dir=None, plots: bool = True) -> Dict[int, RunMetrics]:
    """Run every seed of an agent spec; write per-seed and summary artifacts.

    A seed that raises is recorded as ``status = "failed"`` with its
    traceback in ``seed_<k>/error.txt``; the remaining seeds still run.
    """
    spec.validate()
    if spec.kind != "agent":
        raise ValueError(f"run_experiment needs an agent spec, got kind {spec.kind!r}")
    out = resolve_output_dir(spec, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / "spec.json")
    results: Dict[int, RunMetrics] = {}
    for seed in spec.seeds:
        seed_dir = out / f"seed_{seed}"
        step_log: list = []
        try:
            m = run_seed(spec, seed, step_log)
            _write_seed(seed_dir, m, step_log)
        except Exception as exc:  # crash isolation: record and move on
            log.warning("seed %s failed: %s", seed, exc)
            m = RunMetrics(seed=seed, budget=spec.budget, window=spec.effective_window,
                           status="failed", error=f"{type(exc).__name__}: {exc}")
            seed_dir.mkdir(parents=True, exist_ok=True)
            (seed_dir / "error.txt").write_text(traceback.format_exc())
            write_json(seed_dir / "metrics.json", m.summary())
        results[seed] = m
    summaries = [results[s].summary() for s in spec.seeds]
    done = [s for s in summaries if s["status"] == "complete"]
    firsts = [s["first_reward_step"] for s in done]
    write_json(out / "summary.json", {
        "name": spec.name, "kind": spec.kind, "budget": spec.budget, "window": spec.effective_window,
        "seeds": summaries,
        "mean_auc": float(np.mean([s["auc"] for s in done])) if done else None,
        "seeds_reaching_reward": sum(f is not None for f in firsts),
        "median_first_reward_step": _median_censored(firsts, spec.budget),
    })
    if plots and done:
        from pseudocount.harness import plots as plotting

        plotting.plot_return_curves({spec.name: [results[s["seed"]] for s in done]}, out / "returns.png")
    return results


def _median_censored(firsts, budget):
    if not firsts:
        return None
    return float(np.median([budget if f is None else f for f in firsts]))


def load_summaries(run_dir) -> List[Dict]:
    data = json.loads((Path(run_dir) / "summary.json").read_text())
    return data["seeds"]


# -- density-model experiments ----------------------------------------------


def _stream_frames(spec: ExperimentSpec, seed: int):
    return factory.make_stream(spec.stream, seed).record(spec.budget)


def train_losses(model, frames, order: Sequence[int]) -> np.ndarray:
    """Online loss of each frame, taken just before the model trains on it."""
    return np.array([model.update(frames[i]) for i in order])


def _schedule_label(s: Dict) -> str:
    return s.get("label") or f"{s.get('schedule', 'constant')}@{s.get('lr', 1e-3):g}"


def lr_schedule_sweep(spec: ExperimentSpec, out_dir=None, plots: bool = True) -> Dict:
    """Train a fresh PixelCNN per (schedule, order, seed) on the seed's recorded stream.

    ``spec.stream`` may list ``orders`` (default ``["sequential"]``) among
    ``sequential``, ``permuted`` and ``sampled``. Reports mean online loss
    over the first and the final window.
    """
    spec.validate()
    if spec.kind != "lr_sweep":
        raise ValueError(f"lr_schedule_sweep needs an lr_sweep spec, got kind {spec.kind!r}")
    stream_cfg = dict(spec.stream)
    orders = stream_cfg.pop("orders", ["sequential"])
    model_cfg = dict(spec.model) if spec.model.get("kind") == "pixelcnn" else {"kind": "pixelcnn"}
    w = spec.effective_window
    out = resolve_output_dir(spec, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / "spec.json")
    results = {}
    traces = {}
    for seed in spec.seeds:
        stream = factory.make_stream(stream_cfg, seed)
        frames = stream.record(spec.budget)
        geometry = (stream.height, stream.width, stream.bins)
        for sched in spec.schedules:
            for order_name in orders:
                label = f"{_schedule_label(sched)}/{order_name}"
                order = replay_order(len(frames), order_name, np.random.default_rng([seed, 1]))
                model = factory.make_model(model_cfg, geometry, seed, sched)
                losses = train_losses(model, frames, order)
                traces.setdefault(label, {})[seed] = losses
                results.setdefault(label, {})[str(seed)] = {
                    "first_window_loss": float(losses[:w].mean()),
                    "final_window_loss": float(losses[-w:].mean()),
                    "optimizer_faults": model.optimizer.faults,
                }
    for label, per_seed in results.items():
        finals = [v["final_window_loss"] for v in per_seed.values()]
        per_seed["mean_final_window_loss"] = float(np.mean(finals))
    write_json(out / "summary.json", {"name": spec.name, "window": w, "budget": spec.budget,
                                      "results": results})
    labels = list(traces)
    for seed in spec.seeds:
        write_csv(out / f"losses_seed_{seed}.csv", ["step"] + labels,
                  ([k + 1] + [traces[l][seed][k] for l in labels] for k in range(spec.budget)))
    if plots:
        from pseudocount.harness import plots as plotting

        plotting.plot_loss_curves(traces, w, out / "losses.png")
    return results


def pg_statistics(trace: np.ndarray) -> Dict:
    finite = trace[np.isfinite(trace)]
    diffs = np.diff(finite)
    return {
        "mean": float(finite.mean()) if finite.size else math.nan,
        "successive_difference_variance": float(diffs.var()) if diffs.size else math.nan,
        "non_finite": int(trace.size - finite.size),
        "negative_fraction": float((finite < 0).mean()) if finite.size else math.nan,
    }


def _model_label(cfg: Dict, i: int) -> str:
    return cfg.get("label") or f"{cfg['kind']}_{i}"


def pg_comparison(spec: ExperimentSpec, out_dir=None, plots: bool = True) -> Dict:
    """Feed the same recorded stream to every listed model and record PG traces."""
    spec.validate()
    if spec.kind != "pg_comparison":
        raise ValueError(f"pg_comparison needs a pg_comparison spec, got kind {spec.kind!r}")
    out = resolve_output_dir(spec, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / "spec.json")
    labels = [_model_label(m, i) for i, m in enumerate(spec.models)]
    stats = {}
    traces = {}
    for seed in spec.seeds:
        stream = factory.make_stream(spec.stream, seed)
        frames = stream.record(spec.budget)
        geometry = (stream.height, stream.width, stream.bins)
        for label, cfg in zip(labels, spec.models):
            model = factory.make_model(cfg, geometry, seed, spec.optimizer)
            trace = np.array([model.pg_update(f).pg for f in frames])
            traces.setdefault(label, {})[seed] = trace
            stats.setdefault(label, {})[str(seed)] = pg_statistics(trace)
        write_csv(out / f"pg_seed_{seed}.csv", ["step"] + labels,
                  ([k + 1] + [traces[l][seed][k] for l in labels] for k in range(spec.budget)))
    write_json(out / "summary.json", {"name": spec.name, "budget": spec.budget, "stats": stats})
    if plots:
        from pseudocount.harness import plots as plotting

        plotting.plot_pg_traces(traces, out / "pg.png")
    return {"stats": stats, "traces": traces}


def run_spec(spec: ExperimentSpec, out_dir=None, plots: bool = True):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "agent":
        return run_experiment(spec, out_dir, plots)
    if spec.kind == "lr_sweep":
        return lr_schedule_sweep(spec, out_dir, plots)
    return pg_comparison(spec, out_dir, plots)
