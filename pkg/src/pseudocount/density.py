"""Quantized frames, the density-model contract and the empirical count oracle."""

from __future__ import annotations

import abc
import copy
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Tuple

import numpy as np

from pseudocount.bonus import PGOutcome, ProbabilityPair
from pseudocount.errors import DomainError, ShapeError, UnsupportedOperation

DEFAULT_BINS = 8


@dataclass(frozen=True, eq=False)
class QuantizedFrame:
    """An ``height x width`` image of pixel bins in ``[0, bins)``.

    ``pixels`` is stored as a read-only row-major ``uint8`` array.
    """

    pixels: np.ndarray
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.int64, copy=True)
        if px.ndim != 2 or px.size == 0:
            raise ShapeError(f"frame pixels must be a nonempty 2-D array, got shape {px.shape}")
        if not 2 <= self.bins <= 256:
            raise DomainError(f"bins must lie in [2, 256], got {self.bins}", field="bins")
        if px.min() < 0 or px.max() >= self.bins:
            raise DomainError(f"pixel values must lie in [0, {self.bins})", field="pixels")
        px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def key(self) -> tuple:
        """Hashable identity: dimensions, bin count and the full pixel tuple."""
        return (self.height, self.width, self.bins, self.pixels.tobytes())

    def __eq__(self, other):
        if not isinstance(other, QuantizedFrame):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"QuantizedFrame({self.height}x{self.width}, bins={self.bins})"


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # Row i averages the input interval [i*n_in/n_out, (i+1)*n_in/n_out).
    edges = np.arange(n_out + 1) * (n_in / n_out)
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), n_in)):
            weights[i, j] = min(hi, j + 1) - max(lo, j)
    return weights / weights.sum(axis=1, keepdims=True)


def preprocess(raw, target_w: int, target_h: int, bins: int = DEFAULT_BINS) -> QuantizedFrame:
    """Downsample a greyscale image by area averaging and quantize it.

    ``raw`` is a 2-D array of intensities in ``[0, 1]`` (``uint8`` input is
    scaled by 1/255) or a :class:`QuantizedFrame`, whose bins are mapped to
    their centre intensities first. The averaged intensity is cut into
    ``bins`` equal-width bins, the top edge belonging to the last bin.
    """
    if bins < 2:
        raise DomainError(f"bins must be >= 2, got {bins}", field="bins")
    if isinstance(raw, QuantizedFrame):
        img = (raw.pixels.astype(np.float64) + 0.5) / raw.bins
    else:
        img = np.asarray(raw)
        if img.dtype == np.uint8:
            img = img.astype(np.float64) / 255.0
        else:
            img = img.astype(np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ShapeError(f"raw image must be a nonempty 2-D array, got shape {img.shape}")
    h, w = img.shape
    if not (1 <= target_h <= h and 1 <= target_w <= w):
        raise ShapeError(f"target {target_h}x{target_w} does not fit inside raw {h}x{w}")
    if (h, w) != (target_h, target_w):
        img = _area_weights(h, target_h) @ img @ _area_weights(w, target_w).T
    img = np.clip(img, 0.0, 1.0)
    q = np.minimum(np.floor(img * bins), bins - 1).astype(np.int64)
    return QuantizedFrame(q, bins=bins)


class DensityModel(abc.ABC):
    """An online density model over fixed-size quantized frames.

    Subclasses implement :meth:`log_prob` and :meth:`update`; the default
    :meth:`pg_update` brackets one update with two evaluations, so the
    post-update term equals a later ``log_prob`` call exactly.
    """

    def __init__(self, height: int, width: int, bins: int = DEFAULT_BINS):
        self.height = int(height)
        self.width = int(width)
        self.bins = int(bins)
        self.update_count = 0

    def check_frame(self, x: QuantizedFrame) -> None:
        if x.shape != (self.height, self.width) or x.bins != self.bins:
            raise ShapeError(
                f"model expects {self.height}x{self.width} frames with {self.bins} bins, "
                f"got {x.height}x{x.width} with {x.bins}"
            )

    @abc.abstractmethod
    def log_prob(self, x: QuantizedFrame) -> float:
        """Natural-log probability of ``x`` under the current model."""

    @abc.abstractmethod
    def update(self, x: QuantizedFrame) -> float:
        """Train once on ``x``; return the pre-update loss ``-log_prob(x)``."""

    def pg_update(self, x: QuantizedFrame) -> PGOutcome:
        before = self.log_prob(x)
        self.update(x)
        after = self.log_prob(x)
        return PGOutcome(after - before, self.update_count, before, after)

    def query_pg(self, x: QuantizedFrame) -> PGOutcome:
        raise UnsupportedOperation(f"{type(self).__name__} cannot compute PG without updating")

    def sample(self, rng: np.random.Generator) -> QuantizedFrame:
        raise UnsupportedOperation(f"{type(self).__name__} does not support sampling")

    def clone(self):
        return copy.deepcopy(self)


@dataclass
class _Entry:
    frame: QuantizedFrame
    count: int = 0


class EmpiricalCountModel(DensityModel):
    """Tabular model: ``rho(x) = N(x) / n`` with exact frame identity.

    Unseen frames (and every frame before the first update) have probability
    zero, reported as ``-inf`` log-probability.
    """

    def __init__(self, height: int, width: int, bins: int = DEFAULT_BINS):
        super().__init__(height, width, bins)
        self._table: Dict[tuple, _Entry] = {}

    @property
    def total(self) -> int:
        return self.update_count

    def count(self, x: QuantizedFrame) -> int:
        entry = self._table.get(x.key())
        return entry.count if entry else 0

    @property
    def counts(self) -> Dict[QuantizedFrame, int]:
        return {e.frame: e.count for e in self._table.values()}

    @classmethod
    def from_counts(cls, counts: Dict[QuantizedFrame, int]) -> "EmpiricalCountModel":
        """A model that has seen each frame ``counts[frame]`` times."""
        if not counts:
            raise DomainError("from_counts needs at least one frame")
        first = next(iter(counts))
        model = cls(first.height, first.width, first.bins)
        for frame, n in counts.items():
            model.check_frame(frame)
            if n < 0:
                raise DomainError(f"negative count {n}", field="counts")
            if n:
                model._table[frame.key()] = _Entry(frame, int(n))
                model.update_count += int(n)
        return model

    def probability_pair(self, x: QuantizedFrame) -> ProbabilityPair:
        """Exact rational ``(N(x) / n, (N(x) + 1) / (n + 1))``."""
        self.check_frame(x)
        if self.total == 0:
            raise DomainError("probability undefined before the first update")
        n_x = self.count(x)
        return ProbabilityPair(Fraction(n_x, self.total), Fraction(n_x + 1, self.total + 1))

    def log_prob(self, x: QuantizedFrame) -> float:
        self.check_frame(x)
        n_x = self.count(x)
        if n_x == 0:
            return -math.inf
        return math.log(n_x) - math.log(self.total)

    def recoding_log_prob(self, x: QuantizedFrame) -> float:
        self.check_frame(x)
        return math.log(self.count(x) + 1) - math.log(self.total + 1)

    def update(self, x: QuantizedFrame) -> float:
        loss = -self.log_prob(x)
        entry = self._table.setdefault(x.key(), _Entry(x))
        entry.count += 1
        self.update_count += 1
        return loss

    def query_pg(self, x: QuantizedFrame) -> PGOutcome:
        before = self.log_prob(x)
        after = self.recoding_log_prob(x)
        return PGOutcome(after - before, self.update_count + 1, before, after)

    def sample(self, rng: np.random.Generator) -> QuantizedFrame:
        if self.total == 0:
            raise DomainError("cannot sample from an empty count table")
        entries = list(self._table.values())
        p = np.array([e.count for e in entries], dtype=np.float64) / self.total
        return entries[int(rng.choice(len(entries), p=p))].frame
