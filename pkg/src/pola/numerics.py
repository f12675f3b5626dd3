"""Dense arithmetic helpers and the flat parameter container used by every model."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(ValueError):
    """Raised when NaN or Inf shows up at a module boundary."""


def check_finite(arr, what: str = "array") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite values")
    return arr


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return check_finite(m @ v, "matvec result")


class ParamVector:
    """Flat float64 parameter storage with named, shaped views.

    ``layout`` is a tuple of ``(name, offset, shape)`` entries that tile
    ``data`` contiguously from offset 0.
    """

    __slots__ = ("data", "layout")

    def __init__(self, data, layout: Sequence[tuple[str, int, tuple[int, ...]]]):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 1:
            raise ValueError("ParamVector data must be one-dimensional")
        layout = tuple((str(n), int(o), tuple(int(s) for s in shp)) for n, o, shp in layout)
        offset = 0
        for name, off, shape in layout:
            if off != offset:
                raise ValueError(f"layout entry {name!r} is not contiguous (offset {off}, expected {offset})")
            offset += int(np.prod(shape, dtype=np.int64))
        if offset != data.size:
            raise ValueError(f"layout covers {offset} entries but data has {data.size}")
        self.data = data
        self.layout = layout

    @classmethod
    def from_shapes(cls, shapes: Iterable[tuple[str, tuple[int, ...]]], data=None) -> "ParamVector":
        layout = []
        offset = 0
        for name, shape in shapes:
            layout.append((name, offset, tuple(shape)))
            offset += int(np.prod(shape, dtype=np.int64))
        if data is None:
            data = np.zeros(offset)
        return cls(data, layout)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ParamVector":
        shapes = [(k, np.shape(v)) for k, v in arrays.items()]
        flat = np.concatenate([np.ravel(np.asarray(v, dtype=np.float64)) for v in arrays.values()])
        return cls.from_shapes(shapes, flat)

    def __len__(self) -> int:
        return self.data.size

    def __getitem__(self, name: str) -> np.ndarray:
        """Reshaped view of one named block (writes go through to ``data``)."""
        for n, off, shape in self.layout:
            if n == name:
                size = int(np.prod(shape, dtype=np.int64))
                return self.data[off:off + size].reshape(shape)
        raise KeyError(name)

    def names(self) -> list[str]:
        return [n for n, _, _ in self.layout]

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.data), self.layout)

    def with_data(self, data) -> "ParamVector":
        return ParamVector(data, self.layout)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.layout == other.layout

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        blocks = ", ".join(f"{n}{list(s)}" for n, _, s in self.layout)
        return f"ParamVector({len(self)} entries: {blocks})"


def _require_same_layout(a: ParamVector, b: ParamVector) -> None:
    if not a.same_layout(b):
        raise ValueError("ParamVector layout mismatch")


def dot(a: ParamVector, b: ParamVector) -> float:
    _require_same_layout(a, b)
    return float(np.dot(a.data, b.data))


def axpy(y: ParamVector, alpha: float, x: ParamVector) -> ParamVector:
    """Return ``y + alpha * x`` as a new ParamVector."""
    _require_same_layout(y, x)
    return ParamVector(y.data + alpha * x.data, y.layout)


# central stencils: offsets (in units of eps) and weights
_STENCILS = {
    2: ((1.0, -1.0), (0.5, -0.5)),
    4: ((2.0, 1.0, -1.0, -2.0), (-1.0 / 12.0, 8.0 / 12.0, -8.0 / 12.0, 1.0 / 12.0)),
}


def finite_difference_grad(f: Callable[[ParamVector], float], p: ParamVector, eps: float = 1e-5,
                           order: int = 2) -> ParamVector:
    """Central-difference gradient of a scalar function of a ParamVector.

    ``order=4`` uses the five-point stencil, whose smaller truncation error
    permits a larger ``eps`` and so less round-off on small entries.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if order not in _STENCILS:
        raise ValueError(f"order must be one of {sorted(_STENCILS)}")
    offsets, weights = _STENCILS[order]
    grad = np.empty_like(p.data)
    probe = p.data.copy()
    for i in range(probe.size):
        orig = probe[i]
        acc = 0.0
        for off, w in zip(offsets, weights):
            probe[i] = orig + off * eps
            val = f(p.with_data(probe.copy()))
            if not np.isfinite(val):
                probe[i] = orig
                raise NonFiniteError(f"non-finite function value while probing entry {i}")
            acc += w * val
        probe[i] = orig
        grad[i] = acc / eps
    return p.with_data(grad)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    """Element-wise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
