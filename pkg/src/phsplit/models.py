"""Built-in experiment systems.

Four parameterized models:

* ``simple-2x2``: planar rotation with uniform damping, two scalar blocks.
  The textbook case where plain waveform relaxation amplifies the error
  factorially before converging.
* ``scaled-2x2``: the same structure with a diagonal scaling matrix Q; with
  the coupling switched off it isolates the effect of cond(Q) on the
  splitting iteration.
* ``two-mass``: two damped masses coupled by a third spring, written as a
  3-state plus 2-state pair of blocks with a skew interconnection.
* ``rlc-circuit``: a 6-state DAE (two node-voltage/capacitor groups joined
  by an inductor branch) driven by a current source, with singular E and
  full rk[E R].

ODE builders return the subsystem list, the interconnection, and the
condensed model; the circuit builder returns the condensed model. Every
builder's output passes :func:`phsplit.phdae.validate` with its default
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import Interconnection, Subsystem, condense
from .errors import InvalidParameter, UnknownModel
from .phdae import PHDae
from .waveform import Waveform, from_function

MODEL_NAMES = ("simple-2x2", "scaled-2x2", "two-mass", "rlc-circuit")


def circuit_current(t):
    """Default drive for the circuit: sin(2*pi*50 t) * sin(2*pi*500 t)."""
    return np.sin(2.0 * np.pi * 50.0 * t) * np.sin(2.0 * np.pi * 500.0 * t)


SIGNALS = {
    "zero": lambda t: 0.0,
    "circuit-current": circuit_current,
}


@dataclass(frozen=True)
class ModelSpec:
    """Name, parameter overrides, horizon, grid size, and input signal."""

    name: str
    parameters: dict = field(default_factory=dict)
    T: float | None = None
    N: int | None = None
    input: str = "zero"

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise UnknownModel(f"unknown model {self.name!r}; choose from {MODEL_NAMES}")
        if self.input not in SIGNALS:
            raise InvalidParameter(f"unknown input signal {self.input!r}")


_DEFAULTS = {
    "simple-2x2": {"nu": 15.0, "tau": 0.01, "x01": 2.0, "x02": 2.0},
    "scaled-2x2": {"nu": 1.5, "tau": 0.5, "q1": 1.5, "q2": 1.0, "x01": 2.0, "x02": 2.0},
    "two-mass": {
        "m1": 2.0, "m2": 2.0, "K1": 2.0, "K2": 2.0, "K": 4.0,
        "r1": 0.5, "r2": 0.75, "p20": 0.1,
    },
    "rlc-circuit": {
        "R1": 0.5, "R2": 0.5, "R3": 0.5, "R4": 0.5, "R5": 5.0,
        "C1": 5e-4, "C2": 5e-4, "L": 20.0,
    },
}

_DEFAULT_HORIZON = {
    "simple-2x2": (0.5, 2001),
    "scaled-2x2": (2.0, 401),
    "two-mass": (5.0, 1001),
    "rlc-circuit": (0.1, 4001),
}

_DEFAULT_INPUT = {
    "simple-2x2": "zero",
    "scaled-2x2": "zero",
    "two-mass": "zero",
    "rlc-circuit": "circuit-current",
}


def default_spec(name: str, parameters: dict | None = None, T=None, N=None, input=None) -> ModelSpec:
    """Model spec with per-model default horizon, grid, and input filled in."""
    t0, n0 = _DEFAULT_HORIZON.get(name, (1.0, 201))
    return ModelSpec(
        name=name,
        parameters=parameters or {},
        T=T if T is not None else t0,
        N=N if N is not None else n0,
        input=input if input is not None else _DEFAULT_INPUT.get(name, "zero"),
    )


def _params(spec: ModelSpec) -> dict:
    base = dict(_DEFAULTS[spec.name])
    unknown = set(spec.parameters) - set(base)
    if unknown:
        raise InvalidParameter(f"unknown parameters for {spec.name}: {sorted(unknown)}")
    base.update(spec.parameters)
    for key, val in base.items():
        if not np.isfinite(val):
            raise InvalidParameter(f"parameter {key} must be finite, got {val}")
    return base


def _require_positive(params: dict, keys) -> None:
    for key in keys:
        if params[key] <= 0:
            raise InvalidParameter(f"parameter {key} must be positive, got {params[key]}")


def input_waveform(spec: ModelSpec, m: int = 1) -> Waveform:
    """Sample the spec's named input signal on the experiment grid."""
    fn = SIGNALS[spec.input]
    return from_function(lambda t: np.full(m, fn(t)), spec.T, spec.N)


def build_ode_model(spec: ModelSpec):
    """Build one of the ODE models as (subsystems, interconnection, condensed).

    ``simple-2x2``/``scaled-2x2`` couple two scalar blocks through the skew
    interconnection; ``two-mass`` couples the 3-state and 2-state oscillator
    blocks through one port pair.
    """
    p = _params(spec)
    if spec.name == "simple-2x2" or spec.name == "scaled-2x2":
        nu, tau = p["nu"], p["tau"]
        if tau < 0:
            raise InvalidParameter("tau must be nonnegative")
        if spec.name == "scaled-2x2":
            _require_positive(p, ("q1", "q2"))
            q1, q2 = p["q1"], p["q2"]
        else:
            q1 = q2 = 1.0
        one = np.eye(1)
        subs = [
            Subsystem(E=one, J=np.zeros((1, 1)), R=tau * one, Q=q1 * one,
                      Bhat=one, Bbar=np.zeros((1, 1)), x0=np.array([p["x01"]])),
            Subsystem(E=one, J=np.zeros((1, 1)), R=tau * one, Q=q2 * one,
                      Bhat=one, Bbar=np.zeros((1, 1)), x0=np.array([p["x02"]])),
        ]
        ic = Interconnection(Chat=np.array([[0.0, -nu], [nu, 0.0]]))
        return subs, ic, condense(subs, ic)

    if spec.name == "two-mass":
        _require_positive(p, ("m1", "m2", "K1", "K2", "K", "r1", "r2"))
        m1, m2, k1, k2, k, r1, r2 = (p[s] for s in ("m1", "m2", "K1", "K2", "K", "r1", "r2"))
        q1_mat = np.diag([1.0 / m1, k1, k])
        j1 = np.array([[0.0, -1.0, -1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        r1_mat = np.diag([r1, 0.0, 0.0])
        sub1 = Subsystem(
            E=np.eye(3), J=j1, R=r1_mat, Q=q1_mat,
            Bhat=np.array([[0.0], [0.0], [-1.0]]), Bbar=np.zeros((3, 1)),
            x0=np.zeros(3),
        )
        q2_mat = np.diag([1.0 / m2, k2])
        j2 = np.array([[0.0, -1.0], [1.0, 0.0]])
        sub2 = Subsystem(
            E=np.eye(2), J=j2, R=np.diag([r2, 0.0]), Q=q2_mat,
            Bhat=np.array([[1.0], [0.0]]), Bbar=np.zeros((2, 1)),
            x0=np.array([p["p20"], 0.0]),
        )
        ic = Interconnection(Chat=np.array([[0.0, 1.0], [-1.0, 0.0]]))
        return [sub1, sub2], ic, condense([sub1, sub2], ic)

    raise UnknownModel(f"{spec.name!r} is not an ODE model")


def build_circuit_model(spec: ModelSpec) -> PHDae:
    """Build the 6-state circuit DAE with partition (4, 2).

    State ordering: four node voltages and the inductor current in the
    first block, then the two remaining node voltages. E carries the two
    capacitances and the inductance; R holds the two conductance blocks;
    the current source enters through the first node.
    """
    if spec.name != "rlc-circuit":
        raise UnknownModel(f"{spec.name!r} is not the circuit model")
    p = _params(spec)
    _require_positive(p, ("R1", "R2", "R3", "R4", "R5", "C1", "C2", "L"))
    g = [1.0 / p[f"R{i}"] for i in range(1, 6)]

    e_mat = np.diag([0.0, p["C1"], 0.0, p["L"], 0.0, p["C2"]])
    r_mat = np.zeros((6, 6))
    r_mat[:3, :3] = [
        [g[0], -g[0], 0.0],
        [-g[0], g[0] + g[1], -g[1]],
        [0.0, -g[1], g[1] + g[2]],
    ]
    r_mat[4:, 4:] = [[g[3], -g[3]], [-g[3], g[3] + g[4]]]
    j_mat = np.zeros((6, 6))
    j_mat[2, 3] = 1.0
    j_mat[3, 2] = -1.0
    j_mat[3, 4] = 1.0
    j_mat[4, 3] = -1.0
    b_mat = np.zeros((6, 1))
    b_mat[0, 0] = 1.0
    return PHDae(
        E=e_mat, J=j_mat, R=r_mat, Q=np.eye(6), B=b_mat,
        x0=np.zeros(6), partition=(4, 2),
    )


def build_model(spec: ModelSpec) -> PHDae:
    """Condensed model for any built-in name."""
    if spec.name == "rlc-circuit":
        return build_circuit_model(spec)
    return build_ode_model(spec)[2]
