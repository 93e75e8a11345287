"""Context tree switching (CTS) density models over quantized frames.

Each pixel is predicted from the symbols of its causal L-shaped neighbourhood
(left, top-left, top, top-right by default) by a context tree of depth ``D``.
A depth-``d`` node conditions on the first ``d`` neighbours. Every node holds
a Dirichlet(1/2)-smoothed symbol counter and a pair of switching weights
mixing its own estimate (``stay``) with the prediction of the child selected
by the next neighbour symbol (``split``). With ``t`` the tree's update count,
the switch rate at update ``t`` is ``1 / (t + 1)``.

Two frame models are provided. ``mode="location"`` keeps one tree per pixel
location and is vectorized over pixels. ``mode="convolutional"`` shares one
tree across all locations and updates it pixel by pixel in raster order.
Out-of-frame neighbours take the extra symbol ``bins``.
"""

from __future__ import annotations

import io
import json
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pseudocount.bonus import PGOutcome
from pseudocount.density import DEFAULT_BINS, DensityModel, QuantizedFrame
from pseudocount.errors import DomainError, ShapeError

L_SHAPE: Tuple[Tuple[int, int], ...] = ((0, -1), (-1, -1), (-1, 0), (-1, 1))
CHECKPOINT_VERSION = 1


class _Node:
    __slots__ = ("counts", "total", "w_stay", "children")

    def __init__(self, bins):
        self.counts = [0] * bins
        self.total = 0
        self.w_stay = 0.5
        self.children: Dict[int, "_Node"] = {}


class CtsPixelModel:
    """A single context tree predicting one symbol from a context sequence."""

    def __init__(self, bins: int, depth: int = 4, prior: float = 0.5):
        if depth < 0:
            raise DomainError("depth must be >= 0", field="depth")
        self.bins = bins
        self.depth = depth
        self.prior = prior
        self.root = _Node(bins)
        self.time = 0

    def _check_symbol(self, symbol):
        if not 0 <= symbol < self.bins:
            raise DomainError(f"symbol {symbol} outside [0, {self.bins})", field="symbol")

    def _path(self, context: Sequence[int], create: bool) -> List[Optional[_Node]]:
        if len(context) < self.depth:
            raise ShapeError(f"context needs {self.depth} symbols, got {len(context)}")
        path = [self.root]
        node = self.root
        for d in range(self.depth):
            if node is not None:
                child = node.children.get(context[d])
                if child is None and create:
                    child = node.children[context[d]] = _Node(self.bins)
                node = child
            path.append(node)
        return path

    def _estimate(self, node: Optional[_Node], symbol: int) -> float:
        if node is None:
            return 1.0 / self.bins
        return (node.counts[symbol] + self.prior) / (node.total + self.prior * self.bins)

    def _mix(self, path, symbol) -> List[float]:
        # probs[d] is the mixture prediction of the depth-d node.
        probs = [0.0] * len(path)
        probs[-1] = self._estimate(path[-1], symbol)
        for d in range(len(path) - 2, -1, -1):
            node = path[d]
            if node is None:
                probs[d] = 1.0 / self.bins
                continue
            w = node.w_stay
            probs[d] = w * self._estimate(node, symbol) + (1.0 - w) * probs[d + 1]
        return probs

    def predict(self, context: Sequence[int], symbol: int) -> float:
        """Probability of ``symbol`` in ``context``."""
        self._check_symbol(symbol)
        return self._mix(self._path(context, create=False), symbol)[0]

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        path = self._path(context, create=False)
        return np.array([self._mix(path, s)[0] for s in range(self.bins)])

    def update(self, context: Sequence[int], symbol: int) -> float:
        """Observe ``symbol`` in ``context``; return its pre-update log-probability."""
        self._check_symbol(symbol)
        self.time += 1
        alpha = 1.0 / (self.time + 1)
        path = self._path(context, create=True)
        probs = self._mix(path, symbol)
        for d, node in enumerate(path):
            if d < len(path) - 1:
                est = self._estimate(node, symbol)
                w = node.w_stay
                stay = (1.0 - alpha) * w * est + alpha * (1.0 - w) * probs[d + 1]
                split = (1.0 - alpha) * (1.0 - w) * probs[d + 1] + alpha * w * est
                node.w_stay = stay / (stay + split)
            node.counts[symbol] += 1
            node.total += 1
        return math.log(probs[0])

    def iter_nodes(self):
        """Yield ``(path_symbols, node)`` for every node, depth first."""
        stack = [((), self.root)]
        while stack:
            key, node = stack.pop()
            yield key, node
            for s in sorted(node.children, reverse=True):
                stack.append((key + (s,), node.children[s]))


def frame_contexts(pixels: np.ndarray, offsets: Sequence[Tuple[int, int]], boundary: int) -> np.ndarray:
    """Neighbour symbols for every pixel, shape ``(H*W, len(offsets))`` in raster order."""
    h, w = pixels.shape
    padded = np.full((h + 2 * _PAD, w + 2 * _PAD), boundary, dtype=np.int64)
    padded[_PAD:_PAD + h, _PAD:_PAD + w] = pixels
    cols = [padded[_PAD + dy:_PAD + dy + h, _PAD + dx:_PAD + dx + w].reshape(-1) for dy, dx in offsets]
    return np.stack(cols, axis=1) if cols else np.zeros((h * w, 0), dtype=np.int64)


_PAD = 8


class _NodeStore:
    """Flat arrays of node statistics addressed through a key dictionary.

    Row 0 is a pristine node that is never updated; lookups of missing keys
    resolve to it, which reproduces the prediction of an unvisited subtree.
    """

    def __init__(self, bins, capacity=1024):
        self.bins = bins
        self.index: Dict[int, int] = {}
        self.counts = np.zeros((capacity, bins))
        self.totals = np.zeros(capacity)
        self.w_stay = np.full(capacity, 0.5)
        self.size = 1

    def _grow(self, needed):
        cap = len(self.totals)
        if needed <= cap:
            return
        new_cap = max(needed, 2 * cap)
        self.counts = np.concatenate([self.counts, np.zeros((new_cap - cap, self.bins))])
        self.totals = np.concatenate([self.totals, np.zeros(new_cap - cap)])
        self.w_stay = np.concatenate([self.w_stay, np.full(new_cap - cap, 0.5)])

    def lookup(self, keys: np.ndarray, create: bool) -> np.ndarray:
        get = self.index.get
        rows = np.fromiter((get(k, 0) for k in keys.ravel().tolist()), dtype=np.int64, count=keys.size)
        if create:
            missing = np.flatnonzero(rows == 0)
            if missing.size:
                self._grow(self.size + missing.size)
                for m in missing.tolist():
                    k = int(keys.flat[m])
                    row = self.index.get(k)
                    if row is None:
                        row = self.index[k] = self.size
                        self.size += 1
                    rows.flat[m] = row
        return rows.reshape(keys.shape)


class CtsFrameModel(DensityModel):
    """Product of per-pixel CTS predictions over a frame.

    Args:
        height, width, bins: frame geometry.
        depth: maximum context depth ``D``.
        mode: ``"location"`` for one tree per pixel, ``"convolutional"`` for
            a single tree shared by every location.
        offsets: ordered causal neighbourhood as ``(dy, dx)`` pairs.
        prior: Dirichlet smoothing per symbol.
    """

    def __init__(
        self,
        height: int,
        width: int,
        bins: int = DEFAULT_BINS,
        depth: int = 4,
        mode: str = "location",
        offsets: Sequence[Tuple[int, int]] = L_SHAPE,
        prior: float = 0.5,
    ):
        super().__init__(height, width, bins)
        if mode not in ("location", "convolutional"):
            raise DomainError(f"unknown CTS mode {mode!r}", field="mode")
        offsets = tuple((int(dy), int(dx)) for dy, dx in offsets)
        if len(offsets) < depth:
            raise DomainError("neighbourhood smaller than tree depth", field="offsets")
        for dy, dx in offsets:
            if not (dy < 0 or (dy == 0 and dx < 0)) or max(abs(dy), abs(dx)) > _PAD:
                raise DomainError(f"offset {(dy, dx)} is not a causal neighbour", field="offsets")
        self.depth = depth
        self.mode = mode
        self.offsets = offsets[:depth]
        self.prior = prior
        self.boundary = bins
        self._alphabet = bins + 1
        if mode == "location":
            self._store = _NodeStore(bins)
            self._shared = None
        else:
            self._store = None
            self._shared = CtsPixelModel(bins, depth, prior)

    @property
    def n_parameter_sets(self) -> int:
        return 1 if self.mode == "convolutional" else self.height * self.width

    # -- vectorized location-dependent path ---------------------------------

    def _keys(self, pixels: np.ndarray) -> np.ndarray:
        ctx = frame_contexts(pixels, self.offsets, self.boundary)
        n = ctx.shape[0]
        place = self._alphabet ** np.arange(self.depth, dtype=np.int64)
        codes = np.zeros((n, self.depth + 1), dtype=np.int64)
        if self.depth:
            codes[:, 1:] = np.cumsum(ctx * place, axis=1)
        loc = np.arange(n, dtype=np.int64)[:, None] * (self.depth + 1) + np.arange(self.depth + 1)
        return loc * self._alphabet ** self.depth + codes

    def _estimates(self, rows, symbols, extra=0.0):
        st = self._store
        c = st.counts[rows, symbols[:, None]]
        return (c + extra + self.prior) / (st.totals[rows] + extra + self.prior * self.bins)

    def _mixture(self, est, w):
        # est: (n, D+1), w: (n, D+1) stay weights; returns (n, D+1) mixtures.
        probs = np.empty_like(est)
        probs[:, -1] = est[:, -1]
        for d in range(self.depth - 1, -1, -1):
            probs[:, d] = w[:, d] * est[:, d] + (1.0 - w[:, d]) * probs[:, d + 1]
        return probs

    def _posterior_weights(self, est, probs, w, t):
        alpha = 1.0 / (t + 1)
        stay = (1.0 - alpha) * w[:, :-1] * est[:, :-1] + alpha * (1.0 - w[:, :-1]) * probs[:, 1:]
        split = (1.0 - alpha) * (1.0 - w[:, :-1]) * probs[:, 1:] + alpha * w[:, :-1] * est[:, :-1]
        return stay / (stay + split)

    def _location_terms(self, x: QuantizedFrame, create: bool):
        rows = self._store.lookup(self._keys(x.pixels), create=create)
        symbols = x.pixels.reshape(-1).astype(np.int64)
        est = self._estimates(rows, symbols)
        w = self._store.w_stay[rows]
        return rows, symbols, est, w, self._mixture(est, w)

    def _location_post(self, est_post_args, t):
        rows, symbols, est, w, probs = est_post_args
        w_post = w.copy()
        w_post[:, :-1] = self._posterior_weights(est, probs, w, t)
        est_post = self._estimates(rows, symbols, extra=1.0)
        return w_post, est_post

    # -- public interface ----------------------------------------------------

    def log_prob(self, x: QuantizedFrame) -> float:
        self.check_frame(x)
        if self.mode == "location":
            probs = self._location_terms(x, create=False)[-1]
            return float(np.log(probs[:, 0]).sum())
        ctx = frame_contexts(x.pixels, self.offsets, self.boundary)
        symbols = x.pixels.reshape(-1).tolist()
        return float(sum(math.log(self._shared.predict(c, s)) for c, s in zip(ctx.tolist(), symbols)))

    def update(self, x: QuantizedFrame) -> float:
        self.check_frame(x)
        loss = -self.log_prob(x)
        if self.mode == "location":
            terms = self._location_terms(x, create=True)
            rows, symbols = terms[0], terms[1]
            w_post, _ = self._location_post(terms, self.update_count + 1)
            st = self._store
            st.w_stay[rows[:, :-1]] = w_post[:, :-1]
            st.counts[rows, symbols[:, None]] += 1.0
            st.totals[rows] += 1.0
        else:
            ctx = frame_contexts(x.pixels, self.offsets, self.boundary)
            for c, s in zip(ctx.tolist(), x.pixels.reshape(-1).tolist()):
                self._shared.update(c, s)
        self.update_count += 1
        return loss

    def query_pg(self, x: QuantizedFrame) -> PGOutcome:
        """PG of ``x`` without mutating the model."""
        self.check_frame(x)
        if self.mode == "convolutional":
            # the shared tree is updated sequentially within a frame
            return self.clone().pg_update(x)
        terms = self._location_terms(x, create=False)
        before = float(np.log(terms[-1][:, 0]).sum())
        w_post, est_post = self._location_post(terms, self.update_count + 1)
        after = float(np.log(self._mixture(est_post, w_post)[:, 0]).sum())
        return PGOutcome(after - before, self.update_count + 1, before, after)

    def pixel_predict(self, row: int, col: int, context: Sequence[int], symbol: int) -> float:
        """Probability of ``symbol`` at ``(row, col)`` given neighbour symbols ``context``."""
        if not 0 <= symbol < self.bins:
            raise DomainError(f"symbol {symbol} outside [0, {self.bins})", field="symbol")
        for s in context:
            if not 0 <= s <= self.boundary:
                raise DomainError(f"context symbol {s} invalid", field="context")
        return float(self.pixel_distribution(row, col, context)[symbol])

    def pixel_distribution(self, row: int, col: int, context: Sequence[int]) -> np.ndarray:
        context = [int(s) for s in context[: self.depth]]
        if self.mode == "convolutional":
            return self._shared.distribution(context)
        loc = row * self.width + col
        code, keys = 0, []
        for d in range(self.depth + 1):
            keys.append((loc * (self.depth + 1) + d) * self._alphabet ** self.depth + code)
            if d < self.depth:
                code += context[d] * self._alphabet ** d
        rows = self._store.lookup(np.array(keys, dtype=np.int64), create=False)
        st = self._store
        est = (st.counts[rows] + self.prior) / (st.totals[rows][:, None] + self.prior * self.bins)
        dist = est[-1]
        for d in range(self.depth - 1, -1, -1):
            w = st.w_stay[rows[d]]
            dist = w * est[d] + (1.0 - w) * dist
        return dist

    def sample(self, rng: np.random.Generator) -> QuantizedFrame:
        px = np.zeros((self.height, self.width), dtype=np.int64)
        for i in range(self.height):
            for j in range(self.width):
                ctx = [
                    int(px[i + dy, j + dx]) if 0 <= i + dy < self.height and 0 <= j + dx < self.width else self.boundary
                    for dy, dx in self.offsets
                ]
                p = self.pixel_distribution(i, j, ctx)
                px[i, j] = rng.choice(self.bins, p=p / p.sum())
        return QuantizedFrame(px, bins=self.bins)

    # -- checkpoints -----------------------------------------------------------

    def state_dict(self) -> dict:
        config = {
            "height": self.height, "width": self.width, "bins": self.bins, "depth": self.depth,
            "mode": self.mode, "offsets": [list(o) for o in self.offsets], "prior": self.prior,
        }
        header = {"format": "cts-checkpoint", "version": CHECKPOINT_VERSION, "config": config,
                  "update_count": self.update_count}
        if self.mode == "location":
            st = self._store
            keys = np.zeros(st.size, dtype=np.int64)
            for k, row in st.index.items():
                keys[row] = k
            arrays = {"keys": keys, "counts": st.counts[: st.size], "totals": st.totals[: st.size],
                      "w_stay": st.w_stay[: st.size]}
        else:
            nodes = list(self._shared.iter_nodes())
            width = self.depth
            paths = np.full((len(nodes), width + 1), -1, dtype=np.int64)
            for r, (path, _) in enumerate(nodes):
                paths[r, 0] = len(path)
                paths[r, 1:1 + len(path)] = path
            arrays = {"paths": paths,
                      "counts": np.array([n.counts for _, n in nodes], dtype=np.float64),
                      "totals": np.array([n.total for _, n in nodes], dtype=np.float64),
                      "w_stay": np.array([n.w_stay for _, n in nodes]),
                      "time": np.array([self._shared.time], dtype=np.int64)}
        return {"header": header, "arrays": arrays}

    def save(self, path) -> None:
        """Write a versioned checkpoint (NumPy ``.npz`` with a JSON header entry)."""
        state = self.state_dict()
        header = np.frombuffer(json.dumps(state["header"]).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, header=header, **state["arrays"])

    @classmethod
    def load(cls, path) -> "CtsFrameModel":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            arrays = {k: data[k] for k in data.files if k != "header"}
        if header.get("format") != "cts-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise ShapeError(f"{path}: not a version-{CHECKPOINT_VERSION} CTS checkpoint")
        cfg = dict(header["config"])
        cfg["offsets"] = [tuple(o) for o in cfg["offsets"]]
        model = cls(**cfg)
        model.update_count = header["update_count"]
        if model.mode == "location":
            st = model._store
            n = len(arrays["keys"])
            st._grow(n)
            st.counts[:n] = arrays["counts"]
            st.totals[:n] = arrays["totals"]
            st.w_stay[:n] = arrays["w_stay"]
            st.size = n
            st.index = {int(k): r for r, k in enumerate(arrays["keys"].tolist()) if r > 0}
        else:
            tree = model._shared
            tree.time = int(arrays["time"][0])
            for r, row in enumerate(arrays["paths"].tolist()):
                node = tree.root
                for s in row[1:1 + row[0]]:
                    node = node.children.setdefault(s, _Node(model.bins))
                node.counts = [int(c) for c in arrays["counts"][r]]
                node.total = int(arrays["totals"][r])
                node.w_stay = float(arrays["w_stay"][r])
        return model
