"""Declarative experiment specs, stored as JSON."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from pseudocount.agents import AgentConfig
from pseudocount.bonus import BonusConfig
from pseudocount.errors import DomainError, SpecError
from pseudocount.pixelcnn import RmsProp

EXPERIMENT_KINDS = ("agent", "lr_sweep", "pg_comparison")
ENV_KINDS = ("chain", "rooms", "random_mdp")
MODEL_KINDS = ("none", "empirical", "cts", "conv_cts", "pixelcnn")
Q_KINDS = ("tabular", "linear")

_AGENT_FIELDS = {f.name for f in dataclasses.fields(AgentConfig)}
_BONUS_FIELDS = {f.name for f in dataclasses.fields(BonusConfig)}


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment.

    ``kind`` selects the runner: ``"agent"`` trains agents in ``env``;
    ``"lr_sweep"`` trains one PixelCNN per entry of ``schedules`` on a
    synthetic ``stream``; ``"pg_comparison"`` feeds the same stream to every
    model in ``models`` and records prediction gains.

    ``agent`` holds :class:`~pseudocount.agents.AgentConfig` fields plus
    ``q`` (``"tabular"`` or ``"linear"``, the latter over rendered frames)
    and ``initial_value`` for tabular tables. ``window`` defaults to
    ``budget // 100``.
    """

    name: str = "experiment"
    kind: str = "agent"
    env: Dict[str, Any] = field(default_factory=lambda: {"kind": "chain"})
    model: Dict[str, Any] = field(default_factory=lambda: {"kind": "none"})
    agent: Dict[str, Any] = field(default_factory=dict)
    bonus: Dict[str, Any] = field(default_factory=dict)
    optimizer: Dict[str, Any] = field(default_factory=lambda: {"lr": 1e-3, "schedule": "constant"})
    seeds: List[int] = field(default_factory=lambda: [0])
    budget: int = 1000
    window: Optional[int] = None
    stop_at_first_reward: bool = False
    stream: Dict[str, Any] = field(default_factory=dict)
    schedules: List[Dict[str, Any]] = field(default_factory=list)
    models: List[Dict[str, Any]] = field(default_factory=list)
    output_dir: Optional[str] = None

    @property
    def effective_window(self) -> int:
        return self.window if self.window else max(1, self.budget // 100)

    def problems(self) -> List[str]:
        """Every validation failure, one line each (empty when valid)."""
        out = []
        if self.kind not in EXPERIMENT_KINDS:
            out.append(f"kind: unknown experiment kind {self.kind!r}")
        if not isinstance(self.seeds, list) or not self.seeds:
            out.append("seeds: at least one seed is required")
        elif not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in self.seeds):
            out.append("seeds: seeds must be nonnegative integers")
        elif len(set(self.seeds)) != len(self.seeds):
            out.append("seeds: duplicate seeds")
        if not isinstance(self.budget, int) or self.budget <= 0:
            out.append(f"budget: must be a positive integer, got {self.budget!r}")
        if self.window is not None and (not isinstance(self.window, int) or self.window <= 0):
            out.append(f"window: must be a positive integer, got {self.window!r}")
        out += _check_optimizer(self.optimizer, "optimizer")
        if self.kind == "agent":
            if self.env.get("kind") not in ENV_KINDS:
                out.append(f"env.kind: unknown environment {self.env.get('kind')!r}")
            out += _check_model(self.model, "model")
            out += _check_agent(self.agent)
            out += _check_bonus(self.bonus)
        elif self.kind == "lr_sweep":
            if not self.schedules:
                out.append("schedules: at least one learning-rate schedule is required")
            for i, s in enumerate(self.schedules):
                out += _check_optimizer(s, f"schedules[{i}]")
        elif self.kind == "pg_comparison":
            if not self.models:
                out.append("models: at least one density model is required")
            for i, m in enumerate(self.models):
                out += _check_model(m, f"models[{i}]", allow_none=False)
        return out

    def validate(self) -> "ExperimentSpec":
        problems = self.problems()
        if problems:
            raise SpecError(problems)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise SpecError(["spec: top level must be a JSON object"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SpecError([f"{k}: unknown spec field" for k in unknown])
        return cls(**copy.deepcopy(data)).validate()

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpecError([f"spec: invalid JSON ({exc})"]) from exc
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentSpec":
        """Copy with dotted-path overrides, e.g. ``{"bonus.c": 1.0, "budget": 500}``."""
        data = self.to_dict()
        for key, value in overrides.items():
            parts = key.split(".")
            node = data
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise SpecError([f"{key}: cannot override inside non-object field {p!r}"])
                node = node[p]
            if len(parts) == 1 and parts[0] not in data:
                raise SpecError([f"{key}: unknown spec field"])
            node[parts[-1]] = value
        return ExperimentSpec.from_dict(data)


def _check_optimizer(cfg, where) -> List[str]:
    try:
        RmsProp(lr=cfg.get("lr", 1e-3), schedule=cfg.get("schedule", "constant"))
    except (DomainError, TypeError) as exc:
        return [f"{where}: {exc}"]
    extra = set(cfg) - {"lr", "schedule", "label"}
    return [f"{where}.{k}: unknown optimizer field" for k in sorted(extra)]


def _check_model(cfg, where, allow_none=True) -> List[str]:
    kind = cfg.get("kind")
    kinds = MODEL_KINDS if allow_none else MODEL_KINDS[1:]
    if kind not in kinds:
        return [f"{where}.kind: unknown density model {kind!r}"]
    return []


def _check_agent(cfg) -> List[str]:
    out = []
    extra = set(cfg) - _AGENT_FIELDS - {"q", "initial_value"}
    out += [f"agent.{k}: unknown agent field" for k in sorted(extra)]
    if cfg.get("q", "tabular") not in Q_KINDS:
        out.append(f"agent.q: unknown Q representation {cfg.get('q')!r}")
    try:
        AgentConfig(**{k: v for k, v in cfg.items() if k in _AGENT_FIELDS})
    except (DomainError, TypeError) as exc:
        out.append(f"agent: {exc}")
    return out


def _check_bonus(cfg) -> List[str]:
    extra = set(cfg) - _BONUS_FIELDS
    out = [f"bonus.{k}: unknown bonus field" for k in sorted(extra)]
    try:
        bonus_config(cfg)
    except (DomainError, TypeError) as exc:
        out.append(f"bonus: {exc}")
    return out


def bonus_config(cfg: Dict[str, Any]) -> BonusConfig:
    cfg = dict(cfg)
    if "reward_clip" in cfg:
        cfg["reward_clip"] = tuple(cfg["reward_clip"])
    return BonusConfig(**{k: v for k, v in cfg.items() if k in _BONUS_FIELDS})


def agent_config(cfg: Dict[str, Any]) -> AgentConfig:
    return AgentConfig(**{k: v for k, v in cfg.items() if k in _AGENT_FIELDS})
