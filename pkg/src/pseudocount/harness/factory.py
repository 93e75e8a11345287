"""Build environments, density models and Q-functions from spec dictionaries."""

from __future__ import annotations

from typing import Any, Dict, Optional, Tuple

import numpy as np

from pseudocount.agents import LinearQ, TabularQ
from pseudocount.cts import CtsFrameModel
from pseudocount.density import DensityModel, EmpiricalCountModel
from pseudocount.envs import ChainMdp, RandomMdp, RoomsGridworld, SwitchingFrameStream
from pseudocount.errors import SpecError
from pseudocount.pixelcnn import RmsProp, SlimPixelCNN

_ENVS = {"chain": ChainMdp, "rooms": RoomsGridworld, "random_mdp": RandomMdp}


def _params(cfg: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in cfg.items() if k not in ("kind", "label")}


def make_env(cfg: Dict[str, Any], seed: int = 0):
    kind = cfg.get("kind")
    if kind not in _ENVS:
        raise SpecError([f"env.kind: unknown environment {kind!r}"])
    params = _params(cfg)
    if kind == "random_mdp":
        params.setdefault("seed", seed)
    return _ENVS[kind](**params)


def frame_geometry(env) -> Tuple[int, int, int]:
    f = env.render()
    return f.height, f.width, f.bins


def make_model(cfg: Dict[str, Any], geometry: Tuple[int, int, int], seed: int = 0,
               optimizer: Optional[Dict[str, Any]] = None) -> Optional[DensityModel]:
    """``None`` for kind ``"none"``; otherwise a fresh model for frames of ``geometry``."""
    kind = cfg.get("kind", "none")
    h, w, bins = geometry
    params = _params(cfg)
    if kind == "none":
        return None
    if kind == "empirical":
        return EmpiricalCountModel(h, w, bins)
    if kind == "cts":
        return CtsFrameModel(h, w, bins, **params)
    if kind == "conv_cts":
        return CtsFrameModel(h, w, bins, mode="convolutional", **params)
    if kind == "pixelcnn":
        opt = dict(optimizer or {})
        opt.pop("label", None)
        dtype = np.dtype(params.pop("dtype", "float32"))
        params.setdefault("seed", seed)
        return SlimPixelCNN(h, w, bins, dtype=dtype, optimizer=RmsProp(**opt), **params)
    raise SpecError([f"model.kind: unknown density model {kind!r}"])


def make_q(cfg: Dict[str, Any], env):
    """Tabular Q over ``env.state()`` or linear Q over rendered frames."""
    gamma = cfg.get("gamma", 0.99)
    alpha = cfg.get("alpha", 0.1)
    if cfg.get("q", "tabular") == "linear":
        h, w, _ = frame_geometry(env)
        return LinearQ(h * w, env.n_actions, gamma=gamma, alpha=alpha)
    return TabularQ(env.n_states, env.n_actions, gamma=gamma, alpha=alpha,
                    initial_value=cfg.get("initial_value", 0.0))


def make_stream(cfg: Dict[str, Any], seed: int) -> SwitchingFrameStream:
    params = dict(cfg)
    params.pop("length", None)
    params["seed"] = seed
    return SwitchingFrameStream(**params)
