"""Linear port-Hamiltonian differential-algebraic model.

The model is

    d/dt (E x) = (J - R) Q x + B u,      y = B^T Q x,

with skew-symmetric ``J``, symmetric PSD ``R``, and symmetric PSD ``E^T Q``.
The state is partitioned into blocks; ``E``, ``R``, ``Q`` are block-diagonal
with respect to the partition and the coupling between blocks lives entirely
in the off-diagonal blocks of ``J``. The quadratic energy (Hamiltonian) is
``H(x) = x^T Q^T E x / 2`` and grows at most by the supplied power ``u^T y``.

Instances are immutable after construction and all operations here are
read-only, hence thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DimensionMismatch
from .linalg import DEFAULT_TOL, Tolerance
from .waveform import Waveform, eval_at


@dataclass(frozen=True)
class PHDae:
    """Port-Hamiltonian DAE with an explicit block partition.

    ``E, J, R, Q`` are n-by-n, ``B`` is n-by-m, ``x0`` has length n, and
    ``partition`` lists the block sizes (summing to n). Structural
    properties are checked by :func:`validate`, not the constructor; the
    constructor only enforces shapes.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    partition: tuple = field(default=())

    def __post_init__(self):
        for name in ("E", "J", "R", "Q", "B", "x0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.E.shape[0]
        for name in ("E", "J", "R", "Q"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}, got {m.shape}")
        if self.B.ndim == 1:
            object.__setattr__(self, "B", self.B[:, None])
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.shape}")
        if self.x0.shape != (n,):
            raise DimensionMismatch(f"x0 must have length {n}, got {self.x0.shape}")
        part = tuple(int(p) for p in (self.partition or (n,)))
        if any(p < 1 for p in part) or sum(part) != n:
            raise DimensionMismatch(f"partition {part} does not sum to n={n}")
        object.__setattr__(self, "partition", part)

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_blocks(self) -> int:
        return len(self.partition)

    def block_slices(self):
        """Slices delimiting the partition blocks, in order."""
        out, start = [], 0
        for p in self.partition:
            out.append(slice(start, start + p))
            start += p
        return out


@dataclass(frozen=True)
class JSplit:
    """Decomposition ``J = J_d + J_o`` into block-diagonal and coupling parts."""

    J_d: np.ndarray
    J_o: np.ndarray


@dataclass
class ValidationReport:
    """Outcome of the structural and consistency checks on a model.

    ``structure_ok`` maps check names to booleans. Kernel bases ``Z``
    (of E) and ``Z1`` (of the stacked constraint matrix) plus the
    consistency flag are populated only when the structure checks pass.
    ``rank_ER`` tracks rk[E R]; when it is deficient the iteration has no
    convergence guarantee (degenerate case) even though the model itself
    is well posed, so it is reported separately from the assumptions.
    """

    structure_ok: dict
    rank_ERJ: int = -1
    rank_ER: int = -1
    n: int = 0
    pencil_regular: bool = False
    consistency_ok: bool = False
    degenerate_no_convergence: bool = False
    Z: np.ndarray | None = None
    Z1: np.ndarray | None = None
    messages: list = field(default_factory=list)

    @property
    def structure_all_ok(self) -> bool:
        return all(self.structure_ok.values())

    @property
    def assumptions_ok(self) -> bool:
        """All model well-posedness checks (structure, rank, pencil, consistency)."""
        return (
            self.structure_all_ok
            and self.rank_ERJ == self.n
            and self.pencil_regular
            and self.consistency_ok
        )

    @property
    def ok(self) -> bool:
        """Everything the experiment pipeline relies on, including rk[E R] = n."""
        return self.assumptions_ok and not self.degenerate_no_convergence

    def summary_lines(self):
        lines = []
        for name, flag in self.structure_ok.items():
            lines.append(f"{'PASS' if flag else 'FAIL'}  structure: {name}")
        lines.append(f"{'PASS' if self.rank_ERJ == self.n else 'FAIL'}  rank [E R J] = {self.rank_ERJ} (need {self.n})")
        lines.append(
            f"{'PASS' if not self.degenerate_no_convergence else 'FAIL'}  rank [E R] = {self.rank_ER} (need {self.n} for convergent iteration)"
        )
        lines.append(f"{'PASS' if self.pencil_regular else 'FAIL'}  pencil s*E - (J-R)Q regular")
        lines.append(f"{'PASS' if self.consistency_ok else 'FAIL'}  initial data consistency")
        lines.extend(f"note  {m}" for m in self.messages)
        return lines

    def to_dict(self) -> dict:
        return {
            "structure_ok": dict(self.structure_ok),
            "rank_ERJ": self.rank_ERJ,
            "rank_ER": self.rank_ER,
            "n": self.n,
            "pencil_regular": self.pencil_regular,
            "consistency_ok": self.consistency_ok,
            "degenerate_no_convergence": self.degenerate_no_convergence,
            "ok": self.ok,
            "messages": list(self.messages),
        }


def split_J(sys: PHDae) -> JSplit:
    """Exact extraction of the block-diagonal and off-block parts of J."""
    j_d = np.zeros_like(sys.J)
    for sl in sys.block_slices():
        j_d[sl, sl] = sys.J[sl, sl]
    return JSplit(J_d=j_d, J_o=sys.J - j_d)


def pencil_regular(E, A, trials: int = 5) -> bool:
    """Probabilistic regularity test of the pencil ``s*E - A``.

    Evaluates ``det(sigma*E - A) != 0`` (via a full-rank check) for a fixed
    log-spaced family of shifts, alternating sign; regular pencils pass on
    the first nonsingular shift. Deterministic so that experiment outputs
    are reproducible.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    if E.shape != A.shape or E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise DimensionMismatch(f"pencil needs equal square matrices, got {E.shape}, {A.shape}")
    n = E.shape[0]
    shifts = np.logspace(-2, 2, max(trials, 1))
    for i, sigma in enumerate(shifts):
        s = sigma if i % 2 == 0 else -sigma
        if linalg.numerical_rank(s * E - A) == n:
            return True
    return False


def validate(sys: PHDae, u: Waveform, tol: Tolerance = DEFAULT_TOL) -> ValidationReport:
    """Run the full set of model checks against an input trajectory.

    Checks, in order: block-diagonality of E/R/Q, skewness of J, symmetric
    positive semidefiniteness of R and of E^T Q, invertibility of every Q
    block; rk[E R J] = n; regularity of the pencil; and the algebraic
    compatibility of (x0, u(0)) on the constrained directions. Membership
    of the constrained input combinations in a differentiable class cannot
    be decided from samples, so the report only names which input
    components enter them.
    """
    if u.dim != sys.m:
        raise DimensionMismatch(f"input has {u.dim} components, model expects {sys.m}")
    n = sys.n
    checks: dict[str, bool] = {}
    messages: list[str] = []

    for name, mat in (("E", sys.E), ("R", sys.R), ("Q", sys.Q)):
        off = mat.copy()
        for sl in sys.block_slices():
            off[sl, sl] = 0.0
        ok = np.abs(off).max() <= tol.threshold(max(np.abs(mat).max(), 1.0))
        checks[f"{name}_block_diagonal"] = bool(ok)
        if not ok:
            messages.append(f"{name} has entries outside the partition blocks")

    ok, diag = linalg.structure_check(sys.J, "skew", tol)
    checks["J_skew"] = ok
    if not ok:
        messages.append(f"J: {diag}")

    ok, diag = linalg.structure_check(sys.R, "symmetric-psd", tol)
    checks["R_sym_psd"] = ok
    if not ok:
        messages.append(f"R: {diag}")

    ok, diag = linalg.structure_check(sys.E, "sym-pair", tol, b=sys.Q)
    checks["EtQ_sym_psd"] = ok
    if not ok:
        messages.append(f"E^T Q: {diag}")

    q_ok = True
    for idx, sl in enumerate(sys.block_slices()):
        blk = sys.Q[sl, sl]
        if linalg.numerical_rank(blk, tol) < blk.shape[0]:
            q_ok = False
            messages.append(f"Q block {idx} is singular")
    checks["Q_blocks_invertible"] = q_ok

    report = ValidationReport(structure_ok=checks, n=n, messages=messages)

    report.rank_ERJ = linalg.numerical_rank(np.hstack([sys.E, sys.R, sys.J]), tol)
    if report.rank_ERJ < n:
        messages.append(f"rank [E R J] = {report.rank_ERJ} < n = {n}: model not well posed")

    report.rank_ER = linalg.numerical_rank(np.hstack([sys.E, sys.R]), tol)
    if report.rank_ER < n:
        report.degenerate_no_convergence = True
        messages.append(
            f"rank [E R] = {report.rank_ER} < n = {n}: undamped algebraic coupling, "
            "the splitting iteration cannot be guaranteed (or expected) to converge"
        )

    report.pencil_regular = pencil_regular(sys.E, (sys.J - sys.R) @ sys.Q)
    if not report.pencil_regular:
        messages.append("pencil s*E - (J-R)Q numerically singular for all test shifts")

    if report.structure_all_ok:
        z = linalg.kernel_basis(sys.E, tol)
        report.Z = z
        if z.shape[1] == 0:
            report.Z1 = np.zeros((0, 0))
            report.consistency_ok = True
        else:
            qz = sys.Q @ z
            stacked = np.vstack([sys.R @ qz, z.T @ sys.Q.T @ sys.J @ qz])
            z1 = linalg.kernel_basis(stacked, tol)
            report.Z1 = z1
            if z1.shape[1] == 0:
                report.consistency_ok = True
            else:
                proj = z1.T @ z.T @ sys.Q.T
                resid = proj @ (sys.J @ sys.Q @ sys.x0 + sys.B @ eval_at(u, 0.0))
                scale = max(
                    np.abs(sys.x0).max(),
                    np.abs(eval_at(u, 0.0)).max() if sys.m else 0.0,
                    1.0,
                )
                report.consistency_ok = bool(np.abs(resid).max() <= 1e4 * tol.threshold(scale))
                if not report.consistency_ok:
                    messages.append(
                        f"initial data violate the algebraic compatibility, residual {np.abs(resid).max():.3e}"
                    )
                gate = proj @ sys.B
                cols = [j for j in range(sys.m) if np.abs(gate[:, j]).max() > tol.threshold(1.0)]
                if cols:
                    messages.append(
                        "input components "
                        + ", ".join(str(j + 1) for j in cols)
                        + " drive constrained directions and must be continuously differentiable"
                    )
    return report


def hamiltonian(sys: PHDae, x: Waveform) -> Waveform:
    """Pointwise energy ``H(t) = x^T Q^T E x / 2`` along a trajectory."""
    if x.dim != sys.n:
        raise DimensionMismatch(f"trajectory has {x.dim} components, model has {sys.n}")
    s = 0.5 * (sys.Q.T @ sys.E + sys.E.T @ sys.Q)  # symmetrized Q^T E
    vals = 0.5 * np.einsum("ij,jk,ik->i", x.values, s, x.values)
    return Waveform(x.T, vals)


def output_map(sys: PHDae, x: Waveform) -> Waveform:
    """Output trajectory ``y = B^T Q x``."""
    if x.dim != sys.n:
        raise DimensionMismatch(f"trajectory has {x.dim} components, model has {sys.n}")
    return Waveform(x.T, x.values @ (sys.B.T @ sys.Q).T)


def dissipation_residual(sys: PHDae, x: Waveform, u: Waveform) -> float:
    """Largest violation of the energy balance along a trajectory.

    Returns ``max_t [H(t) - H(0) - int_0^t u^T y]`` with the supplied-power
    integral evaluated by trapezoidal quadrature. For a trajectory that
    solves the model the bracket equals minus the dissipated energy, so the
    result of a valid solve is nonpositive up to quadrature error.
    """
    if not x.same_grid(u):
        raise DimensionMismatch("state and input must share one grid")
    ham = hamiltonian(sys, x).values[:, 0]
    y = output_map(sys, x).values
    power = np.einsum("ij,ij->i", u.values, y)
    h = x.h
    supplied = np.concatenate([[0.0], np.cumsum(0.5 * h * (power[1:] + power[:-1]))])
    return float(np.max(ham - ham[0] - supplied))
