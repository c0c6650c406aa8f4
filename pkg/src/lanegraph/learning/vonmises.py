"""Von Mises densities, mixtures, quadrature KL divergence and mixture fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
KAPPA_LIMIT = 700.0
LOG_FLOOR = 1e-12


def _check_range(x: np.ndarray) -> None:
    if np.any(x < 0):
        raise ValueError("Bessel argument must be nonnegative")
    if np.any(x > KAPPA_LIMIT):
        raise ValueError("concentration out of supported range")


def bessel_i0(x):
    """Modified Bessel function I0 by its power series, summed until terms fall below 1e-16 of the total."""
    xa = np.asarray(x, dtype=np.float64)
    _check_range(xa)
    q = xa * xa / 4.0
    term = np.ones_like(xa)
    total = np.ones_like(xa)
    k = 0
    while True:
        k += 1
        term = term * q / (k * k)
        total = total + term
        if np.all(term < 1e-16 * total):
            break
    return float(total) if np.ndim(x) == 0 else total


def bessel_i1(x):
    """Modified Bessel function I1 by its power series."""
    xa = np.asarray(x, dtype=np.float64)
    _check_range(xa)
    q = xa * xa / 4.0
    term = xa / 2.0
    total = term.copy()
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + 1))
        total = total + term
        if np.all(term <= 1e-16 * total):
            break
    return float(total) if np.ndim(x) == 0 else total


def vm_pdf(theta, mu, kappa):
    """exp(kappa cos(theta - mu)) / (2 pi I0(kappa))."""
    kappa = np.asarray(kappa, dtype=np.float64)
    out = np.exp(kappa * np.cos(np.asarray(theta) - mu)) / (TWO_PI * bessel_i0(kappa))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class VonMisesMixture:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    kappas: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.means) == len(self.kappas)):
            raise ValueError("component lists differ in length")
        if any(w < 0 for w in self.weights) or any(k < 0 for k in self.kappas):
            raise ValueError("weights and concentrations must be nonnegative")
        total = sum(self.weights)
        if total > 0 and abs(total - 1.0) > 1e-6:
            raise ValueError("mixture weights must sum to 1")

    @classmethod
    def unimodal(cls, mu: float, kappa: float) -> "VonMisesMixture":
        return cls((1.0,), (float(mu),), (float(kappa),))

    @classmethod
    def from_components(cls, comps) -> "VonMisesMixture":
        comps = [c for c in comps if c[0] > 0]
        total = sum(c[0] for c in comps)
        return cls(tuple(c[0] / total for c in comps), tuple(float(c[1]) for c in comps),
                   tuple(float(c[2]) for c in comps))

    def arrays(self):
        return np.array(self.weights), np.array(self.means), np.array(self.kappas)


def mixture_pdf(theta, m: VonMisesMixture):
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros_like(theta)
    for w, mu, k in zip(m.weights, m.means, m.kappas):
        if w > 0:
            out = out + w * vm_pdf(theta, mu, k)
    return float(out) if out.ndim == 0 else out


def grid(bins: int) -> np.ndarray:
    return np.arange(bins) * (TWO_PI / bins)


def kl_divergence(p: VonMisesMixture, q: VonMisesMixture, bins: int = 256) -> float:
    """Periodic trapezoid estimate of the integral of p log(p / q) over the circle."""
    if bins < 64:
        raise ValueError("need at least 64 quadrature bins")
    th = grid(bins)
    pv = mixture_pdf(th, p)
    qv = mixture_pdf(th, q)
    return float(np.sum(pv * (np.log(np.maximum(pv, LOG_FLOOR)) - np.log(qv))) * (TWO_PI / bins))


def mixture_components(weights, means, kappas, bins: int):
    """Per-component weighted densities ``(..., K, bins)`` and the mixture ``(..., bins)``."""
    th = grid(bins)
    w = np.asarray(weights, dtype=np.float64)[..., None]
    mu = np.asarray(means, dtype=np.float64)[..., None]
    k = np.asarray(kappas, dtype=np.float64)[..., None]
    dens = np.exp(k * np.cos(th - mu)) / (TWO_PI * bessel_i0(k))
    comp = w * dens
    return comp, dens, comp.sum(axis=-2)


def kl_divergence_arrays(p, q, bins: int = 256) -> np.ndarray:
    """Vectorized KL(p || q) for mixtures given as ``(weights, means, kappas)`` arrays of shape ``(N, K)``."""
    _, _, pv = mixture_components(*p, bins)
    _, _, qv = mixture_components(*q, bins)
    return np.sum(pv * (np.log(np.maximum(pv, LOG_FLOOR)) - np.log(qv)), axis=-1) * (TWO_PI / bins)


def _softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max())
    return e / e.sum()


def fit_vm_mixture(sample_angles, k: int = 3, iters: int = 500, seed: int = 0, lr: float = 0.05,
                   label_kappa: float = 8.0, bins: int = 256, return_history: bool = False):
    """Fit a K-component mixture to the label distribution of the samples by gradient descent.

    The target is the average of unimodal label densities centered on the
    samples; the loss is KL(target || model), which covers every target mode.
    Parameters are softmax logits, means and log concentrations. Means start
    at well-spread samples chosen with ``seed``.
    """
    s = np.mod(np.asarray(sample_angles, dtype=np.float64).ravel(), TWO_PI)
    if s.size == 0:
        raise ValueError("need at least one sample angle")
    if not 1 <= k <= 3:
        raise ValueError("K must be 1, 2 or 3")
    rng = np.random.default_rng(seed)
    th = grid(bins)
    dth = TWO_PI / bins
    target = np.mean(np.exp(label_kappa * np.cos(th[None, :] - s[:, None])), axis=0) / (TWO_PI * bessel_i0(label_kappa))

    # farthest-point initialization of the means
    means = [s[rng.integers(s.size)]]
    while len(means) < k:
        d = np.min(np.abs(np.angle(np.exp(1j * (s[:, None] - np.array(means)[None, :])))), axis=1)
        means.append(s[int(np.argmax(d))] if d.max() > 1e-9 else means[-1] + TWO_PI / k)
    mu = np.array(means, dtype=np.float64)
    logit = np.zeros(k)
    logk = np.zeros(k)
    history = []
    for _ in range(iters):
        w = _softmax(logit)
        kap = np.exp(logk)
        dens = np.exp(kap[:, None] * np.cos(th[None, :] - mu[:, None])) / (TWO_PI * bessel_i0(kap))[:, None]
        model = w @ dens
        ratio = target / model
        loss = float(np.sum(target * (np.log(np.maximum(target, LOG_FLOOR)) - np.log(model))) * dth)
        history.append((loss, kap.copy(), w.copy(), mu.copy()))
        # d loss / d param = -sum target/model * d model / d param
        g_w = -(dens @ ratio) * dth
        g_logit = w * (g_w - np.dot(w, g_w))
        g_mu = -(w[:, None] * dens * kap[:, None] * np.sin(th[None, :] - mu[:, None])) @ ratio * dth
        ratio_i = bessel_i1(kap) / bessel_i0(kap)
        g_kap = -(w[:, None] * dens * (np.cos(th[None, :] - mu[:, None]) - ratio_i[:, None])) @ ratio * dth
        g_logk = g_kap * kap
        logit -= lr * 20.0 * g_logit
        mu -= lr * g_mu / max(float(np.max(kap)), 1.0) * 4.0
        logk = np.clip(logk - lr * 10.0 * g_logk, math.log(1e-3), math.log(KAPPA_LIMIT / 2))
    w = _softmax(logit)
    fit = VonMisesMixture(tuple(float(v) for v in w), tuple(float(v) for v in np.mod(mu, TWO_PI)),
                          tuple(float(v) for v in np.exp(logk)))
    if return_history:
        return fit, history
    return fit
