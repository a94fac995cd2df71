"""Model files: JSON documents describing a system and its experiment data.

Single-model schema::

    {
      "partition": [4, 2],
      "E": [[...], ...], "J": ..., "R": ..., "Q": ..., "B": ...,
      "x0": [...],
      "T": 0.1,
      "input": {"signal": "circuit-current"}        # named built-in signal
               | {"samples": [[...], ...]}           # one row per grid node
    }

Matrices are row-major lists of lists of decimal literals. A coupled-model
file instead carries ``"subsystems"`` (each with E, J, R, Q, Bhat, Bbar,
x0) plus either ``"Chat"`` or ``"B_ij"`` (a table keyed ``"i,j"`` with
1-based subsystem indices); port blocks are ordered by subsystem index.
Both forms load to the same condensed representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .coupling import Interconnection, PortCoupling, Subsystem, assemble_port_coupling, condense
from .errors import ModelFileError, PHSplitError
from .models import SIGNALS
from .phdae import PHDae
from .waveform import Waveform, from_function


@dataclass(frozen=True)
class LoadedModel:
    """A system plus the experiment data carried by its file."""

    system: PHDae
    T: float
    input_spec: dict

    def input_waveform(self, n_samples: int) -> Waveform:
        """Sample the file's input on a uniform grid with ``n_samples`` nodes."""
        m = self.system.m
        if "signal" in self.input_spec:
            fn = SIGNALS[self.input_spec["signal"]]
            return from_function(lambda t: np.full(m, fn(t)), self.T, n_samples)
        samples = np.asarray(self.input_spec["samples"], dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape != (n_samples, m):
            raise ModelFileError(
                f"input samples have shape {samples.shape}, expected ({n_samples}, {m})"
            )
        return Waveform(self.T, samples)

    def input_function(self):
        """Callable form of a named input signal, if the file used one."""
        if "signal" in self.input_spec:
            fn = SIGNALS[self.input_spec["signal"]]
            m = self.system.m
            return lambda t: np.full(m, fn(t))
        return None


def _matrix(doc: dict, key: str) -> np.ndarray:
    if key not in doc:
        raise ModelFileError(f"missing field {key!r}")
    try:
        return np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"field {key!r} is not a numeric array") from exc


def _input_spec(doc: dict) -> dict:
    spec = doc.get("input", {"signal": "zero"})
    if not isinstance(spec, dict) or not ({"signal", "samples"} & set(spec)):
        raise ModelFileError("input must be {'signal': name} or {'samples': rows}")
    if "signal" in spec and spec["signal"] not in SIGNALS:
        raise ModelFileError(f"unknown input signal {spec['signal']!r}")
    return spec


def load_model(path) -> LoadedModel:
    """Load a single- or coupled-model file and condense if necessary."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFileError("model file must contain a JSON object")
    try:
        if "subsystems" in doc:
            system = _load_coupled(doc)
        else:
            system = PHDae(
                E=_matrix(doc, "E"),
                J=_matrix(doc, "J"),
                R=_matrix(doc, "R"),
                Q=_matrix(doc, "Q"),
                B=_matrix(doc, "B"),
                x0=_matrix(doc, "x0"),
                partition=tuple(doc.get("partition", ())),
            )
    except PHSplitError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    T = float(doc.get("T", 1.0))
    if T <= 0:
        raise ModelFileError("T must be positive")
    return LoadedModel(system=system, T=T, input_spec=_input_spec(doc))


def _load_coupled(doc: dict) -> PHDae:
    subs = []
    for idx, sd in enumerate(doc["subsystems"]):
        try:
            subs.append(
                Subsystem(
                    E=_matrix(sd, "E"),
                    J=_matrix(sd, "J"),
                    R=_matrix(sd, "R"),
                    Q=_matrix(sd, "Q"),
                    Bhat=_matrix(sd, "Bhat") if "Bhat" in sd else np.zeros((len(sd["E"]), 0)),
                    Bbar=_matrix(sd, "Bbar") if "Bbar" in sd else np.zeros((len(sd["E"]), 1)),
                    x0=_matrix(sd, "x0"),
                )
            )
        except PHSplitError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ModelFileError(f"malformed subsystem {idx}: {exc}") from exc
    if "Chat" in doc:
        return condense(subs, Interconnection(Chat=_matrix(doc, "Chat")))
    if "B_ij" in doc:
        table = {}
        for key, mat in doc["B_ij"].items():
            try:
                i, j = (int(s) for s in key.split(","))
            except ValueError as exc:
                raise ModelFileError(f"bad B_ij key {key!r}, expected 'i,j'") from exc
            table[(i - 1, j - 1)] = np.asarray(mat, dtype=float)
        return assemble_port_coupling(subs, PortCoupling(B=table))
    raise ModelFileError("coupled model needs either 'Chat' or 'B_ij'")


def model_to_dict(sys: PHDae, T: float, input_spec: dict | None = None) -> dict:
    """Serializable document for a condensed model."""
    return {
        "partition": list(sys.partition),
        "E": sys.E.tolist(),
        "J": sys.J.tolist(),
        "R": sys.R.tolist(),
        "Q": sys.Q.tolist(),
        "B": sys.B.tolist(),
        "x0": sys.x0.tolist(),
        "T": T,
        "input": input_spec or {"signal": "zero"},
    }


def save_model(path, sys: PHDae, T: float, input_spec: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(sys, T, input_spec), fh, indent=1)
        fh.write("\n")
