"""Assembly of one condensed model from coupled subsystems.

Two equivalent coupling styles are supported:

* an explicit skew interconnection of the coupling ports,
  ``u_hat + C_hat * y_hat = 0`` with ``C_hat = -C_hat^T``, condensed via
  ``J = blockdiag(J_i) - B_hat C_hat B_hat^T``;
* pairwise port matrices ``B_ij``, condensed via off-diagonal blocks
  ``J_ij = B_ij B_ji^T`` (skewness of the result holds by construction).

Both normalize to the same partitioned model, so the iteration engines
never see ports. Port blocks are ordered by subsystem index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SkewViolation
from .linalg import DEFAULT_TOL
from .phdae import PHDae


@dataclass(frozen=True)
class Subsystem:
    """One port-Hamiltonian block before condensation.

    ``Bhat`` holds the coupling ports (columns), ``Bbar`` the external
    input ports; either may have zero columns.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    Bhat: np.ndarray
    Bbar: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        for name in ("E", "J", "R", "Q", "Bhat", "Bbar", "x0"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        n = self.E.shape[0]
        for name in ("E", "J", "R", "Q"):
            if getattr(self, name).shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}")
        for name in ("Bhat", "Bbar"):
            arr = getattr(self, name)
            if arr.ndim == 1:
                arr = arr[:, None]
                object.__setattr__(self, name, arr)
            if arr.shape[0] != n:
                raise DimensionMismatch(f"{name} must have {n} rows, got {arr.shape}")
        if self.x0.shape != (n,):
            raise DimensionMismatch(f"x0 must have length {n}")

    @property
    def n(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True)
class Interconnection:
    """Skew coupling matrix tying all coupling ports together."""

    Chat: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.Chat, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"Chat must be square, got {c.shape}")
        object.__setattr__(self, "Chat", c)
        if c.size and np.abs(c + c.T).max() > DEFAULT_TOL.threshold(max(np.abs(c).max(), 1.0)):
            raise SkewViolation("Chat is not skew-symmetric")


@dataclass(frozen=True)
class PortCoupling:
    """Pairwise port matrices ``B_ij`` keyed by ordered pairs ``(i, j)``, i != j."""

    B: dict = field(default_factory=dict)

    def get(self, i: int, j: int):
        return self.B.get((i, j))


def _blockdiag(mats):
    sizes_r = [m.shape[0] for m in mats]
    sizes_c = [m.shape[1] for m in mats]
    out = np.zeros((sum(sizes_r), sum(sizes_c)))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _stack_common(subs):
    E = _blockdiag([s.E for s in subs])
    R = _blockdiag([s.R for s in subs])
    Q = _blockdiag([s.Q for s in subs])
    Jd = _blockdiag([s.J for s in subs])
    x0 = np.concatenate([s.x0 for s in subs])
    partition = tuple(s.n for s in subs)
    m_ext = {s.Bbar.shape[1] for s in subs}
    if len(m_ext) != 1:
        raise DimensionMismatch(f"subsystems disagree on external input width: {sorted(m_ext)}")
    B = np.vstack([s.Bbar for s in subs])
    return E, R, Q, Jd, B, x0, partition


def condense(subs, ic: Interconnection) -> PHDae:
    """Condense subsystems with a skew port interconnection into one model.

    The coupling ports satisfy ``u_hat + Chat * y_hat = 0``; the condensed
    structure matrix is ``J = blockdiag(J_i) - B_hat Chat B_hat^T``, which
    moves the coupling from the ports into the off-diagonal blocks of J.
    """
    if not subs:
        raise DimensionMismatch("need at least one subsystem")
    E, R, Q, Jd, B, x0, partition = _stack_common(subs)
    bhat = _blockdiag([s.Bhat for s in subs])
    p = bhat.shape[1]
    if ic.Chat.shape != (p, p):
        raise DimensionMismatch(
            f"Chat is {ic.Chat.shape}, total coupling port dimension is {p}"
        )
    J = Jd - bhat @ ic.Chat @ bhat.T
    return PHDae(E=E, J=J, R=R, Q=Q, B=B, x0=x0, partition=partition)


def assemble_port_coupling(subs, pc: PortCoupling) -> PHDae:
    """Condense subsystems with pairwise port matrices into one model.

    For each ordered pair ``i < j`` with ports ``B_ij`` (n_i x m_ij) and
    ``B_ji`` (n_j x m_ij), the upper off-diagonal block is
    ``J_ij = B_ij B_ji^T`` and the lower one ``-J_ij^T``.
    """
    if not subs:
        raise DimensionMismatch("need at least one subsystem")
    E, R, Q, J, B, x0, partition = _stack_common(subs)
    offsets = np.concatenate([[0], np.cumsum(partition)])
    s = len(subs)
    for i in range(s):
        for j in range(i + 1, s):
            bij = pc.get(i, j)
            bji = pc.get(j, i)
            if bij is None and bji is None:
                continue
            if bij is None or bji is None:
                raise DimensionMismatch(f"port pair ({i},{j}) needs both B_ij and B_ji")
            bij = np.asarray(bij, dtype=float)
            bji = np.asarray(bji, dtype=float)
            if bij.ndim == 1:
                bij = bij[:, None]
            if bji.ndim == 1:
                bji = bji[:, None]
            if bij.shape[1] != bji.shape[1]:
                raise DimensionMismatch(
                    f"port widths differ for pair ({i},{j}): {bij.shape[1]} vs {bji.shape[1]}"
                )
            if bij.shape[0] != partition[i] or bji.shape[0] != partition[j]:
                raise DimensionMismatch(f"port matrices for pair ({i},{j}) have wrong row counts")
            blk = bij @ bji.T
            J[offsets[i] : offsets[i + 1], offsets[j] : offsets[j + 1]] = blk
            J[offsets[j] : offsets[j + 1], offsets[i] : offsets[i + 1]] = -blk.T
    return PHDae(E=E, J=J, R=R, Q=Q, B=B, x0=x0, partition=partition)
