"""Barrier loss for partial labels, directional KL loss, and a finite-difference gradient checker."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..fields import DirectionalField
from .vonmises import LOG_FLOOR, TWO_PI, bessel_i0, bessel_i1, grid

ALPHA = 1e5
LABEL_KAPPA = 8.0


@dataclass(frozen=True)
class BarrierLossConfig:
    """``ce_sign=+1`` makes the cross-entropy on known positives a penalty (-alpha * log y per cell)."""

    alpha: float = ALPHA
    eps: float = 1e-7
    clip_norm: float = 1.0
    ce_sign: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")


def clip_gradient(grad: np.ndarray, clip_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > clip_norm:
        return grad * (clip_norm / norm)
    return grad


def barrier_loss(y, label_mask, cfg: BarrierLossConfig = BarrierLossConfig(), clip: bool = True):
    """L1 over all cells plus alpha-weighted cross entropy on labeled cells, averaged over N cells.

    Returns ``(loss, gradient)``. The gradient is taken w.r.t. ``y`` (zero where
    the clamp is active) and rescaled to L2 norm ``<= clip_norm`` when ``clip``.
    """
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(label_mask, dtype=np.float64)
    if y.shape != m.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("label mask values must be 0 or 1")
    n = y.size
    yc = np.clip(y, cfg.eps, 1.0 - cfg.eps)
    pos = m == 1
    loss = (np.abs(m - yc).sum() + cfg.ce_sign * cfg.alpha * (-np.log(yc[pos])).sum()) / n
    grad = np.sign(yc - m)
    grad[pos] -= cfg.ce_sign * cfg.alpha / yc[pos]
    grad = np.where((y > cfg.eps) & (y < 1.0 - cfg.eps), grad, 0.0) / n
    if clip:
        grad = clip_gradient(grad, cfg.clip_norm)
    return float(loss), grad


def barrier_logit_grad(logits, label_mask, cfg: BarrierLossConfig = BarrierLossConfig(), n: int | None = None):
    """Barrier loss of ``sigmoid(logits)`` with its gradient w.r.t. the logits (unclipped).

    Stays finite for saturated logits: on positives d(-log y)/dz = -(1 - y).
    ``n`` overrides the normalizing cell count when only part of a map is passed.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = 0.5 * (1.0 + np.tanh(0.5 * z))
    n = y.size if n is None else int(n)
    loss, _ = barrier_loss(y, label_mask, cfg, clip=False)
    loss = loss * y.size / n
    m = np.asarray(label_mask, dtype=np.float64)
    pos = m == 1
    inside = (y > cfg.eps) & (y < 1.0 - cfg.eps)
    dy = y * (1.0 - y)
    g = np.sign(y - m) * dy
    g[pos] -= cfg.ce_sign * cfg.alpha * (1.0 - y[pos])
    g = np.where(inside, g, 0.0) / n
    return loss, g


def _cell_kl_and_grads(w, mu, kap, label_mu, label_kappa, bins):
    """KL(model || label) for N cells, with gradients w.r.t. weights, means and concentrations."""
    th = grid(bins)
    dth = TWO_PI / bins
    diff = th[None, None, :] - mu[..., None]
    dens = np.exp(kap[..., None] * np.cos(diff)) / (TWO_PI * bessel_i0(kap))[..., None]
    p = np.einsum("nk,nkb->nb", w, dens)
    q = np.exp(label_kappa * np.cos(th[None, :] - label_mu[:, None])) / (TWO_PI * bessel_i0(label_kappa))
    logp = np.log(np.maximum(p, LOG_FLOOR))
    kl = np.sum(p * (logp - np.log(q)), axis=1) * dth
    # d/dp [p log p~ - p log q] = log p~ - log q + (1 where p is above the floor)
    outer = (logp - np.log(q) + (p > LOG_FLOOR)) * dth
    g_w = np.einsum("nkb,nb->nk", dens, outer)
    g_mu = np.einsum("nkb,nb->nk", w[..., None] * dens * kap[..., None] * np.sin(diff), outer)
    a = bessel_i1(kap) / bessel_i0(kap)
    g_k = np.einsum("nkb,nb->nk", w[..., None] * dens * (np.cos(diff) - a[..., None]), outer)
    return kl, g_w, g_mu, g_k


def directional_loss(pred: DirectionalField, label_dirs, mask, kappa_label: float = LABEL_KAPPA, bins: int = 256):
    """Mean over mask cells of KL(pred || unimodal label), model distribution first.

    Returns ``(loss, (grad_weights, grad_means, grad_kappas))`` with gradients
    shaped like the field arrays and zero off the mask.
    """
    m = np.asarray(mask) > 0.5
    h, w = pred.shape
    zeros = np.zeros(pred.weights.shape)
    if m.shape != (h, w):
        raise ValueError("mask and field differ in size")
    n = int(m.sum())
    if n == 0:
        warnings.warn("no labeled cells", stacklevel=2)
        return 0.0, (zeros, zeros.copy(), zeros.copy())
    pw = pred.weights[m]
    if np.any(pw.sum(axis=1) <= 0):
        raise ValueError("undefined direction prediction on labeled cell")
    labels = np.asarray(label_dirs, dtype=np.float64)[m]
    kl, g_w, g_mu, g_k = _cell_kl_and_grads(pw, pred.means[m], pred.kappas[m], labels, kappa_label, bins)
    grads = []
    for g in (g_w, g_mu, g_k):
        full = zeros.copy()
        full[m] = g / n
        grads.append(full)
    return float(kl.mean()), tuple(grads)


def grad_check(f, point, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of ``f`` and central differences.

    ``f(x)`` must return ``(value, gradient)`` with the gradient shaped like ``x``.
    """
    x = np.array(point, dtype=np.float64)
    _, g = f(x.copy())
    g = np.asarray(g, dtype=np.float64).ravel()
    flat = x.ravel()
    worst = 0.0
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp.reshape(x.shape))[0]
        fm = f(xm.reshape(x.shape))[0]
        g_fd = (fp - fm) / (2.0 * h)
        err = abs(g_fd - g[i]) / (abs(g_fd) + abs(g[i]) + 1e-8)
        worst = max(worst, err)
    return worst
