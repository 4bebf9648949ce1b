"""Grid and field containers shared by all modules.

Three grid kinds appear in the lab:

* RadialGrid   -- uniform samples r_k = k*dr on [0, rmax] for the ground
                  state solver.
* BoxGrid2D    -- uniform tensor grid on a rectangle, Dirichlet truncation,
                  used for profiles and spectral checks.
* PeriodicGrid2D -- uniform periodic grid with its FFT frequency lattices,
                  used by the pseudo-spectral simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGridError


@dataclass(frozen=True)
class RadialGrid:
    dr: float
    n: int

    def __post_init__(self):
        if self.dr <= 0:
            raise InvalidGridError(f"dr must be positive, got {self.dr}")
        if self.n < 16:
            raise InvalidGridError(f"need at least 16 radial points, got {self.n}")

    @classmethod
    def from_rmax(cls, dr: float, rmax: float) -> "RadialGrid":
        n = int(round(rmax / dr)) + 1
        return cls(dr=dr, n=n)

    @property
    def rmax(self) -> float:
        return (self.n - 1) * self.dr

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n) * self.dr


@dataclass(frozen=True)
class RadialProfile:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise InvalidGridError(
                f"profile has {v.shape} samples for a {self.grid.n}-point grid"
            )
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise InvalidGridError("profile contains non-finite samples")


@dataclass(frozen=True)
class BoxGrid2D:
    """Uniform tensor grid on [x1min, x1max] x [x2min, x2max]."""

    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        for axis in (self.x1, self.x2):
            if len(axis) < 3:
                raise InvalidGridError("box grid needs >= 3 points per axis")
            d = np.diff(axis)
            if not np.allclose(d, d[0], rtol=1e-12, atol=0.0):
                raise InvalidGridError("box grid must be uniform")

    @classmethod
    def square(cls, half_width: float, h: float) -> "BoxGrid2D":
        m = int(round(half_width / h))
        ax = np.arange(-m, m + 1) * h
        return cls(x1=ax, x2=ax.copy())

    @property
    def h1(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def h2(self) -> float:
        return float(self.x2[1] - self.x2[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.x1), len(self.x2))

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def integrate(self, f: np.ndarray) -> float:
        """Trapezoid quadrature over the box."""
        return float(np.trapezoid(np.trapezoid(f, dx=self.h2, axis=1), dx=self.h1))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(f * g)


@dataclass(frozen=True)
class Field2D:
    """A real scalar field sampled on a 2D grid (box or periodic)."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidGridError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PeriodicGrid2D:
    """Periodic box [0, L1) x [0, L2), n1 x n2 points, FFT frequency lattices.

    The physical coordinates are centered: x in [-L/2, L/2)."""

    n1: int
    n2: int
    L1: float
    L2: float
    xi1: np.ndarray = field(init=False)
    xi2: np.ndarray = field(init=False)

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if n < 64 or (n & (n - 1)) != 0:
                raise InvalidGridError(f"periodic grid size must be a power of two >= 64, got {n}")
        object.__setattr__(self, "xi1", 2.0 * np.pi * np.fft.fftfreq(self.n1, d=self.h1))
        object.__setattr__(self, "xi2", 2.0 * np.pi * np.fft.rfftfreq(self.n2, d=self.h2))

    @property
    def h1(self) -> float:
        return self.L1 / self.n1

    @property
    def h2(self) -> float:
        return self.L2 / self.n2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def x1(self) -> np.ndarray:
        return -0.5 * self.L1 + np.arange(self.n1) * self.h1

    @property
    def x2(self) -> np.ndarray:
        return -0.5 * self.L2 + np.arange(self.n2) * self.h2

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def xi_meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xi1, self.xi2, indexing="ij")

    def integrate(self, f: np.ndarray) -> float:
        # equal-weight (periodic trapezoid) quadrature
        return float(np.sum(f) * self.h1 * self.h2)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(f * g)
