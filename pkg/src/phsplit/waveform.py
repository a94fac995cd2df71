"""Uniformly sampled vector-valued trajectories on [0, T].

A :class:`Waveform` stores samples of a function ``f: [0, T] -> R^d`` on the
uniform grid ``t_i = i * h`` with ``h = T / (N - 1)``. Norms are evaluated by
trapezoidal quadrature, which is exact for the piecewise-linear interpolant
the samples represent. Waveforms are immutable after construction; operations
that appear to modify one return a new instance.

Operations that combine two waveforms require identical grids. Resampling is
always explicit (via :func:`eval_at`), never implicit, so that interpolation
error cannot masquerade as iteration error.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, GridMismatch


class Waveform:
    """Samples of a vector-valued function on a uniform grid over [0, T].

    Parameters
    ----------
    T : float
        Final time, > 0.
    values : array_like
        Shape ``(N, d)`` with ``N >= 2`` samples of dimension ``d >= 1``.
        A 1-d array of length N is treated as scalar-valued.
    """

    __slots__ = ("T", "values")

    def __init__(self, T: float, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 1:
            raise DimensionMismatch(f"values must be (N>=2, d>=1), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("waveform samples must be finite")
        if not (T > 0):
            raise ValueError("T must be positive")
        object.__setattr__(self, "T", float(T))
        object.__setattr__(self, "values", values)
        values.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("Waveform is immutable")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> float:
        return self.T / (self.n_samples - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_samples)

    def component(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def same_grid(self, other: "Waveform") -> bool:
        return self.n_samples == other.n_samples and abs(self.T - other.T) <= 1e-12 * max(
            self.T, other.T
        )

    def __repr__(self):
        return f"Waveform(T={self.T}, N={self.n_samples}, d={self.dim})"


def from_function(fn, T: float, n_samples: int, dim: int | None = None) -> Waveform:
    """Sample a callable ``fn(t) -> scalar or vector`` on the uniform grid."""
    t = np.linspace(0.0, T, n_samples)
    rows = [np.atleast_1d(np.asarray(fn(ti), dtype=float)) for ti in t]
    values = np.vstack(rows)
    if dim is not None and values.shape[1] != dim:
        raise DimensionMismatch(f"fn returned dimension {values.shape[1]}, expected {dim}")
    return Waveform(T, values)


def zeros_like(f: Waveform, dim: int | None = None) -> Waveform:
    return Waveform(f.T, np.zeros((f.n_samples, dim if dim is not None else f.dim)))


def _quad_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def weighted_l2_norm(f: Waveform, omega: float = 0.0) -> float:
    """Exponentially damped L2 norm ``(int_0^T e^{-2*omega*t} |f(t)|^2 dt)^(1/2)``.

    ``omega = 0`` gives the plain L2 norm. Quadrature is trapezoidal, second
    order in the grid spacing.
    """
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    sq = np.einsum("ij,ij->i", f.values, f.values)
    damp = np.exp(-2.0 * omega * f.grid)
    w = _quad_weights(f.n_samples, f.h)
    return float(np.sqrt(np.sum(w * damp * sq)))


def sup_norm(f: Waveform) -> float:
    """Maximum over grid points of the Euclidean norm of the samples."""
    return float(np.sqrt(np.einsum("ij,ij->i", f.values, f.values).max()))


def combine(a: float, f: Waveform, b: float, g: Waveform) -> Waveform:
    """Pointwise linear combination ``a*f + b*g`` on a shared grid."""
    if not f.same_grid(g) or f.dim != g.dim:
        raise GridMismatch("combine needs identical grids and dimensions")
    return Waveform(f.T, a * f.values + b * g.values)


def restrict(f: Waveform, t_a: float, t_b: float) -> Waveform:
    """Exact sub-grid extraction of ``f`` on ``[t_a, t_b]``.

    Both endpoints must lie on the grid (within 1e-9 of a node).
    """
    h = f.h
    ia = t_a / h
    ib = t_b / h
    if abs(ia - round(ia)) > 1e-9 or abs(ib - round(ib)) > 1e-9:
        raise GridMismatch(f"restriction endpoints ({t_a}, {t_b}) not on the grid")
    ia, ib = int(round(ia)), int(round(ib))
    if not (0 <= ia < ib <= f.n_samples - 1):
        raise GridMismatch(f"restriction window ({t_a}, {t_b}) outside [0, {f.T}]")
    return Waveform((ib - ia) * h, f.values[ia : ib + 1])


def eval_at(f: Waveform, t: float) -> np.ndarray:
    """Piecewise-linear evaluation at ``t`` within [0, T]; exact at nodes."""
    if t < -1e-12 or t > f.T * (1 + 1e-12):
        raise GridMismatch(f"t={t} outside [0, {f.T}]")
    pos = min(max(t, 0.0), f.T) / f.h
    i = min(int(pos), f.n_samples - 2)
    frac = pos - i
    return (1.0 - frac) * f.values[i] + frac * f.values[i + 1]


def write_csv(f: Waveform, path) -> None:
    """Write ``t,c1,...,cd`` rows with 17 significant digits."""
    header = "t," + ",".join(f"c{j + 1}" for j in range(f.dim))
    data = np.column_stack([f.grid, f.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_csv(path) -> Waveform:
    """Read a waveform written by :func:`write_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    return Waveform(float(t[-1]), data[:, 1:])
