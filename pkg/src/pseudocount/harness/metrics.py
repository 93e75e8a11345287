"""Return curves, area under the curve and improvement reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


def windowed_returns(end_steps: Sequence[int], returns: Sequence[float], budget: int,
                     window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mean episode return per window of ``window`` agent steps.

    Window ``k`` covers steps ``(k*window, (k+1)*window]`` and is reported at
    its right edge; the last window is clipped to ``budget``. A window in
    which no episode ended repeats the previous value (0 before the first
    finished episode).
    """
    edges = np.arange(window, budget + window, window)
    edges[-1] = min(edges[-1], budget)
    end_steps = np.asarray(end_steps, dtype=np.int64)
    returns = np.asarray(returns, dtype=np.float64)
    which = np.searchsorted(edges, end_steps, side="left")
    values = np.empty(len(edges))
    last = 0.0
    for k in range(len(edges)):
        hit = returns[which == k]
        if hit.size:
            last = float(hit.mean())
        values[k] = last
    return edges.astype(np.float64), values


def auc(x: Sequence[float], y: Sequence[float]) -> float:
    """Trapezoidal area under ``y(x)``."""
    return float(np.trapezoid(np.asarray(y, dtype=np.float64), np.asarray(x, dtype=np.float64)))


@dataclass
class RunMetrics:
    """Outcome of one seed of an agent experiment."""

    seed: int
    budget: int
    window: int
    episode_returns: List[float] = field(default_factory=list)
    episode_end_steps: List[int] = field(default_factory=list)
    intrinsic_rewards: List[float] = field(default_factory=list)
    density_losses: List[float] = field(default_factory=list)
    first_reward_step: Optional[int] = None
    status: str = "complete"
    error: Optional[str] = None

    @property
    def curve(self) -> Tuple[np.ndarray, np.ndarray]:
        return windowed_returns(self.episode_end_steps, self.episode_returns, self.budget, self.window)

    @property
    def auc(self) -> float:
        return auc(*self.curve)

    @property
    def max_windowed_return(self) -> float:
        return float(self.curve[1].max())

    def summary(self) -> Dict:
        out = {"seed": self.seed, "status": self.status, "budget": self.budget, "window": self.window}
        if self.status != "complete":
            out["error"] = self.error
            return out
        losses = [v for v in self.density_losses if not math.isnan(v)]
        bonuses = np.asarray(self.intrinsic_rewards, dtype=float)
        finite = bonuses[np.isfinite(bonuses)]
        out.update({
            "episodes": len(self.episode_returns),
            "first_reward_step": self.first_reward_step,
            "auc": self.auc,
            "max_windowed_return": self.max_windowed_return,
            "mean_episode_return": float(np.mean(self.episode_returns)) if self.episode_returns else 0.0,
            # Unseen states under the empirical model get an infinite bonus
            # (clipped in the reward); count them instead of averaging them.
            "mean_finite_bonus": float(finite.mean()) if finite.size else 0.0,
            "infinite_bonuses": int(bonuses.size - finite.size),
            "final_density_loss": losses[-1] if losses else None,
        })
        return out


def improvement_report(baseline: Sequence[Dict], variant: Sequence[Dict]) -> Dict:
    """Percent AUC improvement of ``variant`` over ``baseline`` plus max-score figures.

    Both arguments are per-seed summaries (``RunMetrics.summary()`` dicts);
    failed seeds are ignored. AUCs are averaged over seeds before the
    percentage is taken. A zero baseline AUC yields ``percent = None`` with
    ``undefined = True`` and the raw difference.
    """
    base = [s for s in baseline if s.get("status") == "complete"]
    var = [s for s in variant if s.get("status") == "complete"]
    if not base or not var:
        raise ValueError("both sides need at least one completed seed")
    budgets = {s["budget"] for s in base} | {s["budget"] for s in var}
    if len(budgets) != 1:
        raise ValueError(f"budgets differ between runs: {sorted(budgets)}")
    auc_b = float(np.mean([s["auc"] for s in base]))
    auc_v = float(np.mean([s["auc"] for s in var]))
    diff = auc_v - auc_b
    undefined = auc_b == 0.0
    report = {
        "baseline_auc": auc_b,
        "variant_auc": auc_v,
        "difference": diff,
        "percent": None if undefined else 100.0 * diff / abs(auc_b),
        "undefined": undefined,
        "baseline_max_per_seed": {str(s["seed"]): s["max_windowed_return"] for s in base},
        "variant_max_per_seed": {str(s["seed"]): s["max_windowed_return"] for s in var},
        "baseline_seed_mean_of_max": float(np.mean([s["max_windowed_return"] for s in base])),
        "variant_seed_mean_of_max": float(np.mean([s["max_windowed_return"] for s in var])),
        "seeds": {"baseline": len(base), "variant": len(var)},
    }
    return report
