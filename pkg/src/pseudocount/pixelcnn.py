"""A slim gated PixelCNN written directly in NumPy.

Architecture (single greyscale channel, ``bins`` output logits per pixel)::

    7x7 masked conv (mask A), 1 -> C channels
    2 x gated residual block on C channels:
        1x1 masked conv (mask B) C -> 2C, split, tanh(a) * sigmoid(b),
        1x1 masked conv (mask B) C -> C, added to the block input
    1x1 masked conv (mask B) C -> 64, rectifier
    1x1 masked conv (mask B) 64 -> bins logits

Convolutions gather only the taps their mask allows, so raster-order future
pixels never enter the arithmetic. Weights are still stored as full
``(out, in, k, k)`` kernels with exact zeros at masked positions.

Training is strictly online with batch size one: every :meth:`update` is a
single forward, backward and optimizer step on one frame.
"""

from __future__ import annotations

import json
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from pseudocount.bonus import PGOutcome
from pseudocount.density import DEFAULT_BINS, DensityModel, QuantizedFrame
from pseudocount.errors import DomainError, OptimizerFault, ShapeError

CHECKPOINT_VERSION = 1


def causal_taps(kernel_size: int, kind: str) -> List[Tuple[int, int]]:
    """Offsets ``(dy, dx)`` a mask of the given kind lets through.

    Mask A admits rows above the centre and the pixels left of centre in the
    centre row. Mask B additionally admits the centre.
    """
    if kind not in ("A", "B"):
        raise DomainError(f"mask kind must be 'A' or 'B', got {kind!r}", field="kind")
    if kernel_size % 2 != 1:
        raise DomainError("kernel size must be odd", field="kernel_size")
    r = kernel_size // 2
    taps = [(dy, dx) for dy in range(-r, 1) for dx in range(-r, r + 1) if dy < 0 or dx < 0]
    if kind == "B":
        taps.append((0, 0))
    return taps


def causal_mask(kernel_size: int, kind: str) -> np.ndarray:
    r = kernel_size // 2
    mask = np.zeros((kernel_size, kernel_size))
    for dy, dx in causal_taps(kernel_size, kind):
        mask[dy + r, dx + r] = 1.0
    return mask


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MaskedConv2d:
    """Same-padded masked convolution on ``(channels, H, W)`` arrays."""

    def __init__(self, in_channels, out_channels, kernel_size, kind, rng=None, dtype=np.float64):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.kind = kind
        self.taps = causal_taps(kernel_size, kind)
        self.mask = causal_mask(kernel_size, kind).astype(dtype)
        self._rows = np.array([dy for dy, _ in self.taps]) + kernel_size // 2
        self._cols = np.array([dx for _, dx in self.taps]) + kernel_size // 2
        bound = math.sqrt(1.0 / (in_channels * len(self.taps)))
        rng = rng if rng is not None else np.random.default_rng(0)
        w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_size, kernel_size))
        self.weight = (w * self.mask).astype(dtype)
        self.bias = rng.uniform(-bound, bound, size=out_channels).astype(dtype)
        self.grads: Dict[str, np.ndarray] = {}
        self._cache = None

    def params(self) -> Dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def _active(self) -> np.ndarray:
        # (out, in * taps), ordered channel-major to match _patches.
        return self.weight[:, :, self._rows, self._cols].reshape(self.out_channels, -1)

    def _patches(self, x):
        c, h, w = x.shape
        if len(self.taps) == 1 and self.taps[0] == (0, 0):
            return x.reshape(c, h * w)
        p = self.kernel_size // 2
        xp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=x.dtype)
        xp[:, p:p + h, p:p + w] = x
        cols = np.empty((c, len(self.taps), h, w), dtype=x.dtype)
        for t, (dy, dx) in enumerate(self.taps):
            cols[:, t] = xp[:, p + dy:p + dy + h, p + dx:p + dx + w]
        return cols.reshape(c * len(self.taps), h * w)

    def forward(self, x):
        if x.shape[0] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {x.shape[0]}")
        _, h, w = x.shape
        patches = self._patches(x)
        out = self._active() @ patches + self.bias[:, None]
        self._cache = (patches, x.shape)
        return out.reshape(self.out_channels, h, w)

    def backward(self, dout):
        patches, (c, h, w) = self._cache
        d = dout.reshape(self.out_channels, h * w)
        dw_active = (d @ patches.T).reshape(self.out_channels, c, len(self.taps))
        dw = np.zeros_like(self.weight)
        dw[:, :, self._rows, self._cols] = dw_active
        self.grads = {"weight": dw, "bias": d.sum(axis=1)}
        dpatches = self._active().T @ d
        if len(self.taps) == 1 and self.taps[0] == (0, 0):
            return dpatches.reshape(c, h, w)
        p = self.kernel_size // 2
        dxp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        dcols = dpatches.reshape(c, len(self.taps), h, w)
        for t, (dy, dx) in enumerate(self.taps):
            dxp[:, p + dy:p + dy + h, p + dx:p + dx + w] += dcols[:, t]
        return dxp[:, p:p + h, p:p + w]


class GatedResidualBlock:
    """``h + W_out(tanh(a) * sigmoid(b))`` with ``[a; b] = W_in h`` (1x1 mask-B convs)."""

    def __init__(self, channels, rng=None, dtype=np.float64):
        self.channels = channels
        self.conv_in = MaskedConv2d(channels, 2 * channels, 1, "B", rng, dtype)
        self.conv_out = MaskedConv2d(channels, channels, 1, "B", rng, dtype)
        self._cache = None

    def layers(self):
        return {"conv_in": self.conv_in, "conv_out": self.conv_out}

    def forward(self, h):
        z = self.conv_in.forward(h)
        t = np.tanh(z[: self.channels])
        s = _sigmoid(z[self.channels:])
        self._cache = (t, s)
        return h + self.conv_out.forward(t * s)

    def backward(self, dout):
        t, s = self._cache
        dg = self.conv_out.backward(dout)
        dz = np.concatenate([dg * s * (1.0 - t * t), dg * t * s * (1.0 - s)])
        return dout + self.conv_in.backward(dz)


def log_softmax(logits):
    """Per-pixel log-softmax over the leading (bin) axis."""
    m = logits.max(axis=0, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def nll_loss(logits, x) -> float:
    """Negative log-likelihood of frame bins ``x`` (H, W) under ``logits`` (bins, H, W)."""
    pixels = x.pixels if isinstance(x, QuantizedFrame) else np.asarray(x)
    if logits.shape[1:] != pixels.shape:
        raise ShapeError(f"logits {logits.shape} do not match frame {pixels.shape}")
    lsm = log_softmax(logits)
    picked = np.take_along_axis(lsm, pixels[None].astype(np.int64), axis=0)
    return float(-picked.sum())


def nll_grad(logits, pixels):
    """Gradient of :func:`nll_loss` with respect to the logits."""
    g = np.exp(log_softmax(logits))
    rows, cols = np.indices(pixels.shape)
    g[pixels.astype(np.int64), rows, cols] -= 1.0
    return g


class RmsProp:
    """Uncentered RMSProp with momentum.

    Per parameter and step ``n``::

        ms  <- decay * ms + (1 - decay) * g**2
        mom <- momentum * mom + lr(n) * g / sqrt(ms + eps)
        w   <- w - mom

    ``schedule`` picks ``lr(n)``: ``"constant"`` gives ``lr``,
    ``"inverse"`` gives ``lr / n`` and ``"inverse_sqrt"`` gives ``lr / sqrt(n)``.
    A step whose gradients contain non-finite values is skipped and counted
    in ``faults``.
    """

    SCHEDULES = ("constant", "inverse", "inverse_sqrt")

    def __init__(self, lr=1e-3, momentum=0.9, decay=0.95, eps=1e-4, schedule="constant"):
        if not lr > 0:
            raise DomainError("learning rate must be positive", field="lr")
        if schedule not in self.SCHEDULES:
            raise DomainError(f"unknown schedule {schedule!r}", field="schedule")
        self.lr = lr
        self.momentum = momentum
        self.decay = decay
        self.eps = eps
        self.schedule = schedule
        self.ms: Dict[str, np.ndarray] = {}
        self.mom: Dict[str, np.ndarray] = {}
        self.faults = 0

    def learning_rate(self, n: int) -> float:
        if n < 1:
            raise DomainError("optimizer step count must be >= 1", field="n")
        if self.schedule == "inverse":
            return self.lr / n
        if self.schedule == "inverse_sqrt":
            return self.lr / math.sqrt(n)
        return self.lr

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], n: int) -> bool:
        """Update ``params`` in place; return ``False`` if the step was skipped."""
        if any(not np.all(np.isfinite(g)) for g in grads.values()):
            self.faults += 1
            return False
        lr = self.learning_rate(n)
        for name, w in params.items():
            g = grads[name]
            if g.shape != w.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, weight {w.shape}")
            ms = self.ms.get(name)
            if ms is None:
                ms = self.ms[name] = np.zeros_like(w)
                self.mom[name] = np.zeros_like(w)
            mom = self.mom[name]
            ms *= self.decay
            ms += (1.0 - self.decay) * g * g
            mom *= self.momentum
            mom += lr * g / np.sqrt(ms + self.eps)
            w -= mom
        return True


class SlimPixelCNN(DensityModel):
    """Online gated PixelCNN density model.

    Args:
        height, width, bins: frame geometry.
        channels: feature maps in the first layer and the residual blocks.
        hidden: feature maps of the pre-logit 1x1 layer.
        n_blocks: number of gated residual blocks.
        kernel_size: size of the first (mask A) convolution.
        seed: weight initialization seed.
        dtype: ``np.float64`` for exact checks, ``np.float32`` for speed.
        optimizer: an :class:`RmsProp`; a fresh default one if omitted.
        zero_output: start the logit layer at zero (uniform predictions).
    """

    def __init__(
        self,
        height: int,
        width: int,
        bins: int = DEFAULT_BINS,
        channels: int = 16,
        hidden: int = 64,
        n_blocks: int = 2,
        kernel_size: int = 7,
        seed: int = 0,
        dtype=np.float64,
        optimizer: Optional[RmsProp] = None,
        zero_output: bool = False,
    ):
        super().__init__(height, width, bins)
        self.dtype = np.dtype(dtype)
        self.config = dict(channels=channels, hidden=hidden, n_blocks=n_blocks,
                           kernel_size=kernel_size, seed=seed, zero_output=zero_output)
        rng = np.random.default_rng(seed)
        self.conv_in = MaskedConv2d(1, channels, kernel_size, "A", rng, self.dtype)
        self.blocks = [GatedResidualBlock(channels, rng, self.dtype) for _ in range(n_blocks)]
        self.conv_hidden = MaskedConv2d(channels, hidden, 1, "B", rng, self.dtype)
        self.conv_out = MaskedConv2d(hidden, bins, 1, "B", rng, self.dtype)
        if zero_output:
            self.conv_out.weight[...] = 0.0
            self.conv_out.bias[...] = 0.0
        self.optimizer = optimizer if optimizer is not None else RmsProp()
        self.last_loss: Optional[float] = None
        self._hidden_pre = None

    # -- parameters ------------------------------------------------------------

    def layers(self) -> Dict[str, MaskedConv2d]:
        named = {"conv_in": self.conv_in}
        for i, block in enumerate(self.blocks):
            for k, layer in block.layers().items():
                named[f"block{i}.{k}"] = layer
        named["conv_hidden"] = self.conv_hidden
        named["conv_out"] = self.conv_out
        return named

    def parameters(self) -> Dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers().items() for pn, p in layer.params().items()}

    def masks(self) -> Dict[str, np.ndarray]:
        return {f"{ln}.weight": layer.mask for ln, layer in self.layers().items()}

    # -- computation -------------------------------------------------------------

    def encode(self, x: QuantizedFrame) -> np.ndarray:
        self.check_frame(x)
        scaled = x.pixels.astype(self.dtype) * (2.0 / (self.bins - 1)) - 1.0
        return scaled[None]

    def forward(self, x: QuantizedFrame) -> np.ndarray:
        """Logits of shape ``(bins, H, W)``."""
        h = self.conv_in.forward(self.encode(x))
        for block in self.blocks:
            h = block.forward(h)
        pre = self.conv_hidden.forward(h)
        self._hidden_pre = pre
        return self.conv_out.forward(np.maximum(pre, 0.0))

    def backward(self, x: QuantizedFrame, logits: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """Gradients of ``nll_loss`` for ``x`` with respect to every parameter.

        Uses the cached activations of the most recent :meth:`forward` when
        ``logits`` is supplied, otherwise runs a fresh forward pass.
        """
        if logits is None:
            logits = self.forward(x)
        d = nll_grad(logits, x.pixels)
        d = self.conv_out.backward(d)
        d = self.conv_hidden.backward(d * (self._hidden_pre > 0))
        for block in reversed(self.blocks):
            d = block.backward(d)
        self.conv_in.backward(d)
        return {f"{ln}.{pn}": g for ln, layer in self.layers().items() for pn, g in layer.grads.items()}

    def log_prob(self, x: QuantizedFrame) -> float:
        return -nll_loss(self.forward(x), x)

    def update(self, x: QuantizedFrame) -> float:
        logits = self.forward(x)
        loss = nll_loss(logits, x)
        grads = self.backward(x, logits)
        self.update_count += 1
        self.optimizer.step(self.parameters(), grads, self.update_count)
        self.last_loss = loss
        return loss

    def pg_update(self, x: QuantizedFrame) -> PGOutcome:
        """Two evaluations around one optimizer step; the step is kept."""
        before = -self.update(x)
        after = self.log_prob(x)
        return PGOutcome(after - before, self.update_count, before, after)

    def sample(self, rng: np.random.Generator) -> QuantizedFrame:
        px = np.zeros((self.height, self.width), dtype=np.int64)
        for i in range(self.height):
            for j in range(self.width):
                logits = self.forward(QuantizedFrame(px, bins=self.bins))[:, i, j].astype(np.float64)
                p = np.exp(logits - logits.max())
                px[i, j] = rng.choice(self.bins, p=p / p.sum())
        return QuantizedFrame(px, bins=self.bins)

    # -- checkpoints -------------------------------------------------------------

    def save(self, path) -> None:
        """Write weights, optimizer state and update count to a versioned ``.npz``."""
        opt = self.optimizer
        header = {
            "format": "pixelcnn-checkpoint", "version": CHECKPOINT_VERSION,
            "geometry": [self.height, self.width, self.bins], "dtype": self.dtype.name,
            "config": self.config, "update_count": self.update_count,
            "optimizer": {"lr": opt.lr, "momentum": opt.momentum, "decay": opt.decay,
                          "eps": opt.eps, "schedule": opt.schedule, "faults": opt.faults},
        }
        arrays = {f"param/{k}": v for k, v in self.parameters().items()}
        arrays.update({f"ms/{k}": v for k, v in opt.ms.items()})
        arrays.update({f"mom/{k}": v for k, v in opt.mom.items()})
        blob = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, header=blob, **arrays)

    @classmethod
    def load(cls, path) -> "SlimPixelCNN":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            arrays = {k: data[k] for k in data.files if k != "header"}
        if header.get("format") != "pixelcnn-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise ShapeError(f"{path}: not a version-{CHECKPOINT_VERSION} PixelCNN checkpoint")
        o = header["optimizer"]
        opt = RmsProp(o["lr"], o["momentum"], o["decay"], o["eps"], o["schedule"])
        opt.faults = o["faults"]
        h, w, b = header["geometry"]
        model = cls(h, w, b, dtype=np.dtype(header["dtype"]), optimizer=opt, **header["config"])
        for k, v in model.parameters().items():
            v[...] = arrays[f"param/{k}"]
        for k in model.parameters():
            if f"ms/{k}" in arrays:
                opt.ms[k] = arrays[f"ms/{k}"].copy()
                opt.mom[k] = arrays[f"mom/{k}"].copy()
        model.update_count = header["update_count"]
        return model
