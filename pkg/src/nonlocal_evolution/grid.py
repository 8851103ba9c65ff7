"""Uniform time grids and grid-sampled trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OffGridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    a: float
    n_steps: int

    def __post_init__(self):
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ValueError(f"horizon a must be positive, got {self.a}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2 or self.n_steps % 2:
            raise ValueError(f"n_steps must be a positive even integer, got {self.n_steps}")

    @property
    def h(self) -> float:
        return self.a / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    def index_of(self, t: float, atol: float = 1e-9) -> int:
        """Index of grid node ``t``; off-grid times raise ``OffGridError``."""
        x = t / self.h
        i = int(round(x))
        if abs(x - i) > atol * max(1.0, abs(x)) or not 0 <= i <= self.n_steps:
            raise OffGridError(f"t = {t!r} is not a node of the grid (a={self.a}, n={self.n_steps})")
        return i

    def is_node(self, t: float) -> bool:
        try:
            self.index_of(t)
        except OffGridError:
            return False
        return True

    def snap(self, t: float) -> float:
        return self.nodes[min(max(int(round(t / self.h)), 0), self.n_steps)]


def trapezoid_cumulative(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative composite trapezoid along axis 0, starting at exactly 0."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    if len(values) > 1:
        out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]), axis=0)
    return out


def trapezoid(values: np.ndarray, h: float, upto: int | None = None):
    """Composite trapezoid of nodal ``values`` over nodes ``0..upto``.

    Scalar samples give a float; vector samples (shape ``(n, d)``) give an array.
    """
    v = np.asarray(values, dtype=float)
    if upto is not None:
        v = v[: upto + 1]
    if len(v) < 2:
        return 0.0 if v.ndim == 1 else np.zeros(v.shape[1:])
    out = h * (0.5 * v[0] + np.sum(v[1:-1], axis=0) + 0.5 * v[-1])
    return float(out) if v.ndim == 1 else out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Path ``t -> u(t)`` in R^d sampled on grid nodes, linear in between."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"trajectory needs {self.grid.n_steps + 1} nodes, got {v.shape[0]}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def at(self, t) -> np.ndarray:
        """Linear interpolation; ``t`` scalar -> (d,), array (m,) -> (m, d)."""
        t = np.asarray(t, dtype=float)
        nodes = self.grid.nodes
        if t.ndim == 0:
            return np.array([np.interp(t, nodes, self.values[:, c]) for c in range(self.d)])
        return np.stack([np.interp(t, nodes, self.values[:, c]) for c in range(self.d)], axis=-1)

    def __call__(self, t):
        return self.at(t)

    @classmethod
    def zeros(cls, grid: TimeGrid, d: int) -> "Trajectory":
        return cls(grid, np.zeros((grid.n_steps + 1, d)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn, d: int | None = None) -> "Trajectory":
        vals = np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        return cls(grid, vals)
