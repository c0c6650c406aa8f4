"""Desk-scale per-pixel learner trained with the barrier loss on single-trajectory labels."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import GridMap, _atomic_write_bytes
from .losses import BarrierLossConfig, barrier_logit_grad, clip_gradient

HEADS = ("lane", "entry", "exit")


@dataclass(frozen=True)
class ToyConfig:
    patch: int = 5
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    power: float = 0.9
    batch: int = 28
    iters: int = 400
    seed: int = 0
    checkpoints: int = 5
    loss: BarrierLossConfig = field(default_factory=BarrierLossConfig)


def poly_lr(t: int, iters: int, lr_start: float = 1e-3, lr_end: float = 1e-5, power: float = 0.9) -> float:
    """Polynomial decay from ``lr_start`` at t=0 to ``lr_end`` at t=iters."""
    if iters <= 0:
        return lr_start
    frac = min(max(t / iters, 0.0), 1.0)
    return lr_end + (lr_start - lr_end) * (1.0 - frac) ** power


def downsample(input_map: GridMap | np.ndarray) -> np.ndarray:
    """2x2 block average of a (C, 2H, 2W) observation."""
    x = input_map.data if isinstance(input_map, GridMap) else np.asarray(input_map, dtype=np.float64)
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def padded_features(input_map, patch: int = 5) -> np.ndarray:
    """Label-resolution observation, zero padded by ``patch // 2`` on each side."""
    x = downsample(input_map)
    r = patch // 2
    c, h, w = x.shape
    pad = np.zeros((c, h + 2 * r, w + 2 * r))
    pad[:, r:r + h, r:r + w] = x
    return pad


def patch_matrix(input_map, patch: int = 5) -> np.ndarray:
    """One row of ``channels * patch * patch`` features per label cell (row-major cells)."""
    pad = padded_features(input_map, patch)
    c, hp, wp = pad.shape
    h, w = hp - patch + 1, wp - patch + 1
    win = sliding_window_view(pad, (patch, patch), axis=(1, 2))  # (c, h, w, p, p)
    return np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(h * w, c * patch * patch)


def _forward(pad: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Logits ``(h, w, heads)`` of a patch-linear model; ``kernel`` is ``(c, p, p, heads)``."""
    c, hp, wp = pad.shape
    p = kernel.shape[1]
    h, w = hp - p + 1, wp - p + 1
    out = np.broadcast_to(bias, (h, w, len(bias))).copy()
    for a in range(p):
        for b in range(p):
            out += np.tensordot(pad[:, a:a + h, b:b + w], kernel[:, a, b, :], axes=([0], [0]))
    return out


def _backward(pad: np.ndarray, gz: np.ndarray, p: int) -> np.ndarray:
    """Kernel gradient ``(c, p, p, heads)`` for logit gradients ``gz`` shaped ``(h, w, heads)``."""
    c = pad.shape[0]
    h, w = gz.shape[:2]
    out = np.empty((c, p, p, gz.shape[2]))
    for a in range(p):
        for b in range(p):
            out[:, a, b, :] = np.tensordot(pad[:, a:a + h, b:b + w], gz, axes=([1, 2], [0, 1]))
    return out


@dataclass
class PixelModel:
    """Three logistic heads over a shared patch feature vector."""

    weights: np.ndarray  # (features, heads)
    bias: np.ndarray  # (heads,)
    patch: int = 5

    @classmethod
    def zeros(cls, patch: int = 5, channels: int = 2) -> "PixelModel":
        return cls(np.zeros((channels * patch * patch, len(HEADS))), np.zeros(len(HEADS)), patch)

    def kernel(self) -> np.ndarray:
        """Weights viewed as ``(channels, patch, patch, heads)``."""
        p = self.patch
        return self.weights.reshape(-1, p, p, self.weights.shape[1])

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Logits for rows of :func:`patch_matrix` features."""
        return features @ self.weights + self.bias

    def predict(self, input_map) -> dict[str, GridMap]:
        z = _forward(padded_features(input_map, self.patch), self.kernel(), self.bias)
        y = 0.5 * (1.0 + np.tanh(0.5 * z))
        return {name: GridMap(y[..., k]) for k, name in enumerate(HEADS)}

    def to_dict(self) -> dict:
        return {"patch": self.patch,
                "heads": {name: {"weights": [float(v) for v in self.weights[:, k]], "bias": float(self.bias[k])}
                          for k, name in enumerate(HEADS)}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "PixelModel":
        heads = data["heads"]
        w = np.stack([np.asarray(heads[h]["weights"], dtype=np.float64) for h in HEADS], axis=1)
        b = np.array([float(heads[h]["bias"]) for h in HEADS])
        return cls(w, b, int(data.get("patch", 5)))


def head_masks(sample) -> np.ndarray:
    """(h, w, 3) positive masks: trajectory, entry blob, exit blob."""
    lab = sample.label.data
    h, w = lab.shape[1:]
    ii, jj = np.indices((h, w))
    blob = lab[3] > 0.5
    de = (ii - sample.entry_cell[0]) ** 2 + (jj - sample.entry_cell[1]) ** 2
    dx = (ii - sample.exit_cell[0]) ** 2 + (jj - sample.exit_cell[1]) ** 2
    entry = blob & (de <= dx)
    exit_ = blob & (dx < de)
    return np.stack([lab[0] > 0.5, entry, exit_], axis=-1).astype(np.float64)


@dataclass
class _SparseSample:
    """Cells whose patch is all zero share the logit ``bias``; only the rest is stored."""

    feats: np.ndarray  # (n, features) float32
    masks: np.ndarray  # (n, heads)
    n_zero: int
    n_total: int

    @classmethod
    def build(cls, sample, patch: int) -> "_SparseSample":
        feats = patch_matrix(sample.input, patch)
        masks = head_masks(sample).reshape(-1, len(HEADS))
        keep = np.any(feats != 0, axis=1) | np.any(masks > 0, axis=1)
        return cls(feats[keep].astype(np.float32), masks[keep], int((~keep).sum()), feats.shape[0])

    def head_grad(self, z, bias: float, head: int, cfg: BarrierLossConfig):
        """Loss and map-level clipped logit gradients (stored cells, each shared-bias cell)."""
        loss, g = barrier_logit_grad(z, self.masks[:, head], cfg, n=self.n_total)
        y0 = 0.5 * (1.0 + math.tanh(0.5 * bias))
        g0 = y0 * (1.0 - y0) / self.n_total if cfg.eps < y0 < 1.0 - cfg.eps else 0.0
        loss += self.n_zero * min(max(y0, cfg.eps), 1.0 - cfg.eps) / self.n_total
        norm = math.sqrt(float(g @ g) + self.n_zero * g0 * g0)
        if norm > cfg.clip_norm:
            g = g * (cfg.clip_norm / norm)
            g0 = g0 * (cfg.clip_norm / norm)
        return loss, g, g0


@dataclass
class CurvePoint:
    iter: int
    loss: float
    acc_pos: float
    l1_neg: float


def _evaluate(model: PixelModel, eval_set) -> tuple[float, float]:
    from ..metrics import acc_pos, l1_neg

    accs, l1s = [], []
    for input_map, lane_label in eval_set:
        pred = model.predict(input_map)["lane"]
        accs.append(acc_pos(pred, lane_label))
        l1s.append(l1_neg(pred, lane_label))
    if not accs:
        return float("nan"), float("nan")
    return float(np.mean(accs)), float(np.mean(l1s))


def toy_train(samples, cfg: ToyConfig = ToyConfig(), eval_set=()):
    """Mini-batch SGD on the three heads; returns ``(model, curve)``.

    Each sample's barrier gradient is clipped at map level before being
    propagated to the weights. ``eval_set`` holds ``(input, lane label)`` pairs
    scored at evenly spaced checkpoints, including iteration 0 and the last one.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("toy_train needs at least one sample")
    rng = np.random.default_rng(cfg.seed)
    model = PixelModel.zeros(cfg.patch, samples[0].input.channels)
    cache: dict[int, _SparseSample] = {}

    def data(k):
        if k not in cache:
            cache[k] = _SparseSample.build(samples[k], cfg.patch)
        return cache[k]

    n_ck = max(int(cfg.checkpoints), 2)
    check_at = sorted({int(round(v)) for v in np.linspace(0, cfg.iters, n_ck)})
    curve: list[CurvePoint] = []
    last_loss = float("nan")
    for t in range(cfg.iters + 1):
        if t in check_at:
            acc, l1 = _evaluate(model, eval_set)
            curve.append(CurvePoint(t, last_loss, acc, l1))
        if t == cfg.iters:
            break
        lr = poly_lr(t, cfg.iters, cfg.lr_start, cfg.lr_end, cfg.power)
        batch = rng.integers(0, len(samples), size=cfg.batch)
        gw = np.zeros_like(model.weights)
        gb = np.zeros_like(model.bias)
        w32 = model.weights.astype(np.float32)
        total = 0.0
        for k in batch:
            s = data(int(k))
            z = (s.feats @ w32).astype(np.float64) + model.bias
            for h in range(len(HEADS)):
                loss, g_nz, g_zero = s.head_grad(z[:, h], model.bias[h], h, cfg.loss)
                gw[:, h] += s.feats.T.astype(np.float64) @ g_nz
                gb[h] += g_nz.sum() + s.n_zero * g_zero
                total += loss
        # the batch loss is the sum of per-sample losses
        model.weights -= lr * gw
        model.bias -= lr * gb
        last_loss = total / (cfg.batch * len(HEADS))
    return model, curve


def curves_csv(curve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "loss", "acc_pos", "l1_neg"])
    for p in curve:
        writer.writerow([p.iter, f"{p.loss:.10g}", f"{p.acc_pos:.10g}", f"{p.l1_neg:.10g}"])
    return buf.getvalue()


def write_model(model: PixelModel, path) -> None:
    _atomic_write_bytes(Path(path), (model.to_json() + "\n").encode("utf-8"))


def read_model(path) -> PixelModel:
    return PixelModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def two_pixel_toy(x_pos: float, x_neg: float, iters: int = 2000, cfg: BarrierLossConfig = BarrierLossConfig(),
                  w0: float = 0.0, b0: float = 0.0, lr_start: float = 1e-3, lr_end: float = 1e-5):
    """Train ``y = sigmoid(w x + b)`` on one labeled and one unlabeled pixel.

    The shared parameters force a trade between the positive pixel (pulled up
    by the barrier) and the unlabeled pixel (pulled down by L1). Uses the
    training schedule; returns the positive pixel's clamped prediction before
    every step and after the last one.
    """
    x = np.array([x_pos, x_neg], dtype=np.float64)
    mask = np.array([1.0, 0.0])
    w, b = float(w0), float(b0)
    out = []
    for t in range(iters + 1):
        z = w * x + b
        y_pos = 0.5 * (1.0 + math.tanh(0.5 * z[0]))
        out.append(min(max(y_pos, cfg.eps), 1.0 - cfg.eps))
        if t == iters:
            break
        _, gz = barrier_logit_grad(z, mask, cfg)
        g = clip_gradient(np.array([np.dot(gz, x), gz.sum()]), cfg.clip_norm)
        lr = poly_lr(t, iters, lr_start, lr_end)
        w -= lr * g[0]
        b -= lr * g[1]
    return np.array(out)
