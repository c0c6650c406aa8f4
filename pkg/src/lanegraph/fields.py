"""Dense model-output types: per-cell von Mises mixtures and affordance bundles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GridMap

K_MAX = 3


@dataclass(frozen=True, eq=False)
class DirectionalField:
    """``K=3`` von Mises components per cell, arrays shaped ``(H, W, K)``.

    Inactive components carry zero weight (and zero mean and concentration).
    """

    weights: np.ndarray
    means: np.ndarray
    kappas: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "kappas"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.ndim != 3:
                raise ValueError(f"{name} must be (H, W, K)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.weights.shape == self.means.shape == self.kappas.shape):
            raise ValueError("weights, means and kappas must share a shape")

    @classmethod
    def empty(cls, height: int, width: int | None = None, k: int = K_MAX) -> "DirectionalField":
        z = np.zeros((height, height if width is None else width, k))
        return cls(z, z, z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape[:2]

    @property
    def active(self) -> np.ndarray:
        return self.weights > 0

    def defined(self) -> np.ndarray:
        """Cells with at least one active component."""
        return self.active.any(axis=2)

    def cell(self, i: int, j: int) -> list[tuple[float, float, float]]:
        return [(float(w), float(m), float(k))
                for w, m, k in zip(self.weights[i, j], self.means[i, j], self.kappas[i, j]) if w > 0]

    def dominant(self) -> np.ndarray:
        """Mean of the heaviest component per cell (NaN where undefined)."""
        k = np.argmax(self.weights, axis=2)
        mu = np.take_along_axis(self.means, k[..., None], axis=2)[..., 0]
        return np.where(self.defined(), mu, np.nan)

    def to_map(self) -> GridMap:
        """9-channel tensor: weights 1..3, means 1..3, concentrations 1..3."""
        return GridMap(np.concatenate([np.moveaxis(a, 2, 0) for a in (self.weights, self.means, self.kappas)]))

    @classmethod
    def from_map(cls, m: GridMap) -> "DirectionalField":
        if m.channels % 3:
            raise ValueError("direction tensor needs 3*K channels")
        k = m.channels // 3
        d = m.data
        return cls(np.moveaxis(d[:k], 0, 2), np.moveaxis(d[k:2 * k], 0, 2), np.moveaxis(d[2 * k:], 0, 2))

    def __eq__(self, other):
        if not isinstance(other, DirectionalField):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("weights", "means", "kappas"))


@dataclass(frozen=True, eq=False)
class AffordanceBundle:
    lane: GridMap
    entry: GridMap
    exit: GridMap
    direction: DirectionalField
    warnings: tuple[str, ...] = field(default=())

    def to_map(self) -> GridMap:
        """Lane, entry and exit stacked as a 3-channel tensor."""
        return GridMap(np.stack([self.lane.data[0], self.entry.data[0], self.exit.data[0]]))

    @classmethod
    def from_maps(cls, affordance: GridMap, direction: GridMap) -> "AffordanceBundle":
        if affordance.channels != 3:
            raise ValueError("affordance tensor needs 3 channels (lane, entry, exit)")
        if direction.height != affordance.height or direction.width != affordance.width:
            raise ValueError("affordance and direction tensors differ in size")
        d = affordance.data
        return cls(GridMap(d[0]), GridMap(d[1]), GridMap(d[2]), DirectionalField.from_map(direction))

    def __eq__(self, other):
        if not isinstance(other, AffordanceBundle):
            return NotImplemented
        return (self.lane == other.lane and self.entry == other.entry and self.exit == other.exit
                and self.direction == other.direction)
