"""Feedforward ReLU networks, output properties and the margin labeler.

The rest of the package only ever sees a :class:`MarginLabeler`: a black box
mapping input points to a signed margin and a binary label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np


class NetworkFormatError(ValueError):
    """Raised when a weight or property file cannot be turned into a valid object."""


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights, 2))
        object.__setattr__(self, "bias", _frozen(self.bias, 1))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.weights.ndim != 2:
            raise NetworkFormatError("weights must be a matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise NetworkFormatError(
                f"bias has {self.bias.shape[0]} entries, weights have {self.weights.shape[0]} rows"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Network:
    """Affine layers with ReLU or identity activations.

    ``weights[i][j]`` multiplies input ``j`` into output ``i``.
    """

    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise NetworkFormatError("network has no layers")
        expected = self.input_dim
        for idx, layer in enumerate(layers):
            if layer.in_dim != expected:
                raise NetworkFormatError(
                    f"layer {idx}: expects {layer.in_dim} inputs but receives {expected}"
                )
            expected = layer.out_dim
        if layers[-1].activation is not Activation.LINEAR:
            raise NetworkFormatError(f"layer {len(layers) - 1}: last layer must be linear")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on one point or on a batch of row-stacked points."""
    h = np.asarray(x, dtype=np.float64)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    if h.shape[1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} input features, got {h.shape[1]}")
    if not np.all(np.isfinite(h)):
        raise ValueError("network input contains non-finite values")
    for layer in net.layers:
        h = h @ layer.weights.T + layer.bias
        if layer.activation is Activation.RELU:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


@dataclass(frozen=True)
class OutputProperty:
    """Conjunction of linear constraints ``coeffs . y - offset >= 0`` on the output."""

    coeffs: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, 2))
        object.__setattr__(self, "offsets", _frozen(self.offsets, 1))
        if self.coeffs.shape[0] == 0:
            raise NetworkFormatError("property needs at least one constraint")
        if self.offsets.shape != (self.coeffs.shape[0],):
            raise NetworkFormatError("one offset per constraint row is required")

    @classmethod
    def from_constraints(cls, constraints: Sequence[tuple[Sequence[float], float]]) -> OutputProperty:
        if not constraints:
            raise NetworkFormatError("property needs at least one constraint")
        coeffs = [list(c) for c, _ in constraints]
        if len({len(c) for c in coeffs}) != 1:
            raise NetworkFormatError("constraint coefficient vectors differ in length")
        return cls(np.array(coeffs, dtype=float), np.array([o for _, o in constraints], dtype=float))

    @classmethod
    def dominates(cls, output_dim: int, winner: int, others: Sequence[int] | None = None) -> OutputProperty:
        """``y[winner] >= y[i]`` for every ``i`` in ``others`` (default: all other outputs)."""
        if others is None:
            others = [i for i in range(output_dim) if i != winner]
        rows = []
        for i in others:
            row = np.zeros(output_dim)
            row[winner] += 1.0
            row[i] -= 1.0
            rows.append(row)
        return cls(np.array(rows), np.zeros(len(rows)))

    @classmethod
    def threshold(cls, level: float = 0.5) -> OutputProperty:
        """Single-output network thresholded at ``level``."""
        return cls(np.array([[1.0]]), np.array([level]))

    @property
    def output_dim(self) -> int:
        return self.coeffs.shape[1]

    def to_dict(self) -> dict:
        return {
            "constraints": [
                {"coeffs": c.tolist(), "offset": float(o)} for c, o in zip(self.coeffs, self.offsets)
            ]
        }


@dataclass(frozen=True)
class MarginLabeler:
    """Reduces a network plus property to a signed margin; label 1 iff margin >= 0."""

    network: Network
    prop: OutputProperty = field(default_factory=OutputProperty.threshold)

    def __post_init__(self):
        if self.prop.output_dim != self.network.output_dim:
            raise NetworkFormatError(
                f"property has {self.prop.output_dim} coefficients per row, "
                f"network has {self.network.output_dim} outputs"
            )

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    def margin(self, x) -> np.ndarray | float:
        y = forward(self.network, x)
        vals = np.atleast_2d(y) @ self.prop.coeffs.T - self.prop.offsets
        m = vals.min(axis=1)
        return float(m[0]) if np.ndim(x) == 1 else m

    def label(self, x) -> int:
        return int(self.margin(x) >= 0.0)

    def label_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return np.zeros(0, dtype=np.int8)
        return (self.margin(np.atleast_2d(xs)) >= 0.0).astype(np.int8)


def margin(labeler: MarginLabeler, x):
    return labeler.margin(x)


def label_batch(labeler: MarginLabeler, xs) -> np.ndarray:
    return labeler.label_batch(xs)


class UnitCubeLabeler:
    """View of a labeler through the affine map [0,1]^N -> region."""

    def __init__(self, labeler, lower, upper):
        self.labeler = labeler
        self.lower = np.asarray(lower, dtype=np.float64)
        self.width = np.asarray(upper, dtype=np.float64) - self.lower

    @property
    def input_dim(self) -> int:
        return self.lower.shape[0]

    def to_original(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=np.float64) * self.width

    def margin(self, u):
        return self.labeler.margin(self.to_original(u))

    def label_batch(self, us) -> np.ndarray:
        us = np.asarray(us, dtype=np.float64)
        if us.size == 0:
            return np.zeros(0, dtype=np.int8)
        return self.labeler.label_batch(self.to_original(np.atleast_2d(us)))


# ---------------------------------------------------------------------------
# JSON weight / property files


def network_from_dict(doc: dict) -> Network:
    try:
        input_dim = int(doc["input_dim"])
        raw_layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"missing or invalid top-level field: {exc}") from exc
    layers = []
    for idx, raw in enumerate(raw_layers):
        act = raw.get("activation", "linear")
        if act not in Activation._value2member_map_:
            raise NetworkFormatError(f"layer {idx}: unknown activation {act!r}")
        try:
            w = np.array(raw["weights"], dtype=np.float64)
            b = np.array(raw["bias"], dtype=np.float64)
        except (KeyError, ValueError) as exc:
            raise NetworkFormatError(f"layer {idx}: {exc}") from exc
        if w.ndim != 2:
            raise NetworkFormatError(f"layer {idx}: weights must be a rectangular matrix")
        try:
            layers.append(Layer(w, b, Activation(act)))
        except NetworkFormatError as exc:
            raise NetworkFormatError(f"layer {idx}: {exc}") from exc
    return Network(tuple(layers), input_dim)


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {"weights": l.weights.tolist(), "bias": l.bias.tolist(), "activation": l.activation.value}
            for l in net.layers
        ],
    }


def property_from_dict(doc: dict) -> OutputProperty:
    section = doc.get("property", doc)
    try:
        rows = [(c["coeffs"], float(c["offset"])) for c in section["constraints"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"invalid property section: {exc}") from exc
    return OutputProperty.from_constraints(rows)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: not valid JSON ({exc})") from exc


def load_network(path) -> Network:
    return network_from_dict(_read_json(path))


def load_property(path) -> OutputProperty:
    return property_from_dict(_read_json(path))


def save_network(net: Network, path, prop: OutputProperty | None = None) -> None:
    doc = network_to_dict(net)
    if prop is not None:
        doc["property"] = prop.to_dict()
    Path(path).write_text(json.dumps(doc))
