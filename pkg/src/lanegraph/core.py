"""Grid tensors, grid geometry, angle helpers and the LGT1 tensor file format."""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi
MAGIC = b"LGT1"
_HEADER = struct.Struct("<4sIII")

# observation encoding of the input layers
POSITIVE, UNKNOWN, NEGATIVE = 1.0, 0.5, 0.0


class TensorFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridMap:
    """Dense ``channels x height x width`` grid of 64-bit floats.

    ``data`` is stored channel-major, then row, then column, so every channel
    is a contiguous slice.  The array is made read-only on construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"GridMap expects a 3-D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, channels: int, height: int, width: int | None = None) -> "GridMap":
        return cls(np.zeros((channels, height, height if width is None else width)))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def channel(self, c: int) -> np.ndarray:
        return self.data[c]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"GridMap(channels={self.channels}, height={self.height}, width={self.width})"


@dataclass(frozen=True)
class GridSpec:
    """Square grid placed in world coordinates (meters).

    Cell ``(i, j)`` covers ``x in [ox + j*m, ox + (j+1)*m)`` and
    ``y in [oy + i*m, oy + (i+1)*m)``; rows follow world ``y``, columns world ``x``.
    Headings are measured as ``atan2(dy, dx)`` which equals ``atan2(di, dj)``.
    """

    cells_per_side: int
    meters_per_cell: float
    origin: tuple[float, float]

    def __post_init__(self):
        if self.meters_per_cell <= 0:
            raise ValueError("meters_per_cell must be positive")
        if self.cells_per_side <= 0:
            raise ValueError("cells_per_side must be positive")

    @property
    def extent(self) -> float:
        return self.cells_per_side * self.meters_per_cell

    def downscaled(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.cells_per_side // factor, self.meters_per_cell * factor, self.origin)

    def to_grid(self, points) -> np.ndarray:
        """World ``(x, y)`` points to continuous ``(row, col)`` coordinates."""
        p = np.asarray(points, dtype=np.float64)
        col = (p[..., 0] - self.origin[0]) / self.meters_per_cell
        row = (p[..., 1] - self.origin[1]) / self.meters_per_cell
        return np.stack([row, col], axis=-1)

    def to_cell(self, points) -> np.ndarray:
        return np.floor(self.to_grid(points)).astype(np.int64)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World ``x`` and ``y`` of every cell center as two ``(n, n)`` arrays."""
        n, m = self.cells_per_side, self.meters_per_cell
        c = (np.arange(n) + 0.5) * m
        return np.meshgrid(self.origin[0] + c, self.origin[1] + c, indexing="xy")

    def cell_center(self, cell) -> np.ndarray:
        i, j = cell
        m = self.meters_per_cell
        return np.array([self.origin[0] + (j + 0.5) * m, self.origin[1] + (i + 0.5) * m])

    def contains(self, cell) -> bool:
        i, j = cell
        return 0 <= i < self.cells_per_side and 0 <= j < self.cells_per_side


INPUT_SPEC = GridSpec(256, 0.25, (-32.0, -32.0))
LABEL_SPEC = INPUT_SPEC.downscaled(2)


def wrap_angle(a):
    """Map angles into ``[0, 2*pi)``."""
    w = np.mod(a, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    if np.ndim(w) == 0:
        return 0.0 if w >= TWO_PI else float(w)
    w[w >= TWO_PI] = 0.0
    return w


def angle_diff(a, b):
    """Absolute circular difference of two angles, in ``[0, pi]``."""
    d = np.abs(np.mod(np.asarray(a, dtype=np.float64) - b + math.pi, TWO_PI) - math.pi)
    if np.ndim(d) == 0:
        return float(min(d, math.pi))
    return np.minimum(d, math.pi)


def heading(dx, dy):
    return wrap_angle(np.arctan2(dy, dx))


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_tensor(map: GridMap) -> bytes:
    data = map.data
    if not np.all(np.isfinite(data)):
        raise TensorFormatError("non-finite tensor element")
    c, h, w = data.shape
    return _HEADER.pack(MAGIC, c, h, w) + data.astype("<f4").tobytes(order="C")


def decode_tensor(payload: bytes) -> GridMap:
    if len(payload) < _HEADER.size or payload[:4] != MAGIC:
        raise TensorFormatError("unrecognized format")
    _, c, h, w = _HEADER.unpack_from(payload)
    n = c * h * w
    body = payload[_HEADER.size:]
    if len(body) != 4 * n:
        raise TensorFormatError(f"truncated tensor: expected {4 * n} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(c, h, w)
    return GridMap(arr)


def write_tensor(map: GridMap, path) -> None:
    """Write ``map`` as an LGT1 file (magic, u32 channels/height/width, f32 data)."""
    payload = encode_tensor(map)
    try:
        _atomic_write_bytes(Path(path), payload)
    except OSError as exc:
        raise OSError(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path) -> GridMap:
    payload = Path(path).read_bytes()
    try:
        return decode_tensor(payload)
    except TensorFormatError as exc:
        raise TensorFormatError(f"{path}: {exc}") from exc


def write_ppm(map: GridMap, path, channel: int = 0) -> None:
    """Binary PPM (P6) of one channel, grayscale values in [0,1] copied to RGB."""
    img = np.clip(map.data[channel], 0.0, 1.0)
    gray = np.round(img * 255.0).astype(np.uint8)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    header = f"P6\n{map.width} {map.height}\n255\n".encode("ascii")
    _atomic_write_bytes(Path(path), header + rgb.tobytes())
