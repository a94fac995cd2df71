"""Implicit one-step integration of linear constant-coefficient DAEs.

Solves ``d/dt (E x) = A x + f(t)`` with either implicit Euler (order 1,
L-stable) or the trapezoidal rule (order 2, A-stable). Because the
coefficients are constant, the step matrix is factorized once per solve and
reused across all steps; this factorization is local to the solve, so
independent solves can run concurrently.

The initial sample is always the supplied ``x0``. When E is singular the
weak formulation only constrains ``E x(0)``, so an inconsistent algebraic
part of ``x0`` is projected onto the constraint manifold by the first
implicit step; a warning records that jump instead of rejecting the data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .errors import DimensionMismatch, IrregularPencil, SingularStepMatrix
from .phdae import PHDae, pencil_regular
from .waveform import Waveform

SCHEME_KINDS = ("implicit-euler", "trapezoidal")


@dataclass(frozen=True)
class SolverScheme:
    """Time discretization: method plus uniform grid ``(T, N)``."""

    kind: str = "trapezoidal"
    T: float = 1.0
    N: int = 201

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"kind must be one of {SCHEME_KINDS}, got {self.kind!r}")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not (self.T > 0):
            raise ValueError("T must be positive")

    @property
    def h(self) -> float:
        return self.T / (self.N - 1)

    def with_refinement(self, refine: int) -> "SolverScheme":
        return SolverScheme(self.kind, self.T, (self.N - 1) * refine + 1)


def default_scheme(sys: PHDae, T: float, kind: str = "trapezoidal") -> SolverScheme:
    """Grid fine enough that discretization error sits below iteration error.

    Caps the step at ``min(1 / (10 * |(J-R)Q|), T/200)``.
    """
    a_norm = linalg.spectral_norm((sys.J - sys.R) @ sys.Q)
    h = min(1.0 / (10.0 * a_norm) if a_norm > 0 else np.inf, T / 200.0)
    n = max(int(np.ceil(T / h)) + 1, 201)
    return SolverScheme(kind, T, n)


class _StepOperator:
    """Factorized one-step recursion ``x_{n+1} = P x_n + d_n``."""

    def __init__(self, E: np.ndarray, A: np.ndarray, scheme: SolverScheme):
        h = scheme.h
        if scheme.kind == "implicit-euler":
            lhs = E - h * A
            self.rhs_mat = E.copy()
        else:
            lhs = E - 0.5 * h * A
            self.rhs_mat = E + 0.5 * h * A
        try:
            self.lu = scipy.linalg.lu_factor(lhs)
        except scipy.linalg.LinAlgError as exc:
            raise SingularStepMatrix(
                f"step matrix singular at h={h:.3e}; choose a different grid"
            ) from exc
        diag = np.abs(np.diag(self.lu[0]))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SingularStepMatrix(
                f"step matrix numerically singular at h={h:.3e}; choose a different grid"
            )
        self.P = scipy.linalg.lu_solve(self.lu, self.rhs_mat)
        self.h = h
        self.kind = scheme.kind

    def forcing_terms(self, f_samples: np.ndarray) -> np.ndarray:
        """Per-step inhomogeneous contributions, solved in one batched call."""
        h = self.h
        if self.kind == "implicit-euler":
            g = h * f_samples[1:]
        else:
            g = 0.5 * h * (f_samples[:-1] + f_samples[1:])
        return scipy.linalg.lu_solve(self.lu, g.T).T

    def run(self, x0: np.ndarray, f_samples: np.ndarray) -> np.ndarray:
        d = self.forcing_terms(f_samples)
        n_steps = d.shape[0]
        out = np.empty((n_steps + 1, x0.size))
        out[0] = x0
        x = x0
        P = self.P
        for i in range(n_steps):
            x = P @ x + d[i]
            out[i + 1] = x
        return out


def _warn_if_inconsistent(E, A, f0, x0):
    w = linalg.kernel_basis(E.T)
    if w.shape[1] == 0:
        return
    resid = w.T @ (A @ x0 + f0)
    scale = max(np.abs(A).max() * max(np.abs(x0).max(), 1.0), np.abs(f0).max(), 1.0)
    if np.abs(resid).max() > 1e-8 * scale:
        warnings.warn(
            "algebraic part of the initial value is inconsistent "
            f"(residual {np.abs(resid).max():.3e}); the first implicit step projects it",
            stacklevel=3,
        )


def solve_linear_dae(E, A, f: Waveform, x0, scheme: SolverScheme) -> Waveform:
    """Integrate ``d/dt (E x) = A x + f(t)``, ``E x(0) = E x0`` on the scheme grid.

    ``f`` must be sampled on exactly the scheme's grid. The pencil
    ``(E, A)`` must be regular, otherwise the DAE has no unique solution.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = E.shape[0]
    if A.shape != E.shape or E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise DimensionMismatch(f"E and A must be equal square matrices, got {E.shape}, {A.shape}")
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 must have length {n}")
    if f.dim != n or f.n_samples != scheme.N or abs(f.T - scheme.T) > 1e-12 * scheme.T:
        raise DimensionMismatch(
            f"forcing must be sampled on the scheme grid (T={scheme.T}, N={scheme.N}, d={n})"
        )
    if not pencil_regular(E, A):
        raise IrregularPencil("pencil s*E - A is singular; the DAE is not uniquely solvable")
    _warn_if_inconsistent(E, A, f.values[0], x0)
    op = _StepOperator(E, A, scheme)
    return Waveform(scheme.T, op.run(x0, f.values))


def system_forcing(sys: PHDae, u: Waveform) -> Waveform:
    """Inhomogeneity ``B u(t)`` sampled on the grid of ``u``."""
    if u.dim != sys.m:
        raise DimensionMismatch(f"input has {u.dim} components, model expects {sys.m}")
    return Waveform(u.T, u.values @ sys.B.T)


def solve_phdae(sys: PHDae, u: Waveform, scheme: SolverScheme) -> Waveform:
    """Monolithic solve of the full model ``d/dt(E x) = (J-R)Q x + B u``."""
    return solve_linear_dae(
        sys.E, (sys.J - sys.R) @ sys.Q, system_forcing(sys, u), sys.x0, scheme
    )


def reference_solution(
    sys: PHDae,
    u: Waveform,
    refine: int = 1,
    scheme: SolverScheme | None = None,
    u_func=None,
) -> Waveform:
    """Monolithic ground-truth trajectory on the experiment grid.

    Solves on a grid ``refine`` times finer and restricts the result back.
    With ``refine > 1`` the input is resampled from ``u_func`` when given,
    otherwise by linear interpolation of ``u``.
    """
    if scheme is None:
        scheme = SolverScheme("trapezoidal", u.T, u.n_samples)
    if refine < 1 or int(refine) != refine:
        raise ValueError("refine must be a positive integer")
    refine = int(refine)
    if u.n_samples != scheme.N or abs(u.T - scheme.T) > 1e-12 * scheme.T:
        raise DimensionMismatch("input must be sampled on the experiment grid")
    fine = scheme.with_refinement(refine)
    if refine == 1:
        u_fine = u
    elif u_func is not None:
        grid = np.linspace(0.0, fine.T, fine.N)
        u_fine = Waveform(fine.T, np.vstack([np.atleast_1d(u_func(t)) for t in grid]))
    else:
        coarse = np.arange(u.n_samples) * u.h
        grid = np.linspace(0.0, fine.T, fine.N)
        vals = np.column_stack(
            [np.interp(grid, coarse, u.values[:, j]) for j in range(u.dim)]
        )
        u_fine = Waveform(fine.T, vals)
    x_fine = solve_phdae(sys, u_fine, fine)
    return Waveform(scheme.T, x_fine.values[::refine])
