"""The CNOT gadget that turns two-qubit processes into single-qubit instruments.

The physical qubit is the first tensor factor and the CNOT control; a virtual
qubit starts in ``|0>``, is the CNOT target, and is projected onto ``|c>`` to
produce instrument element ``c``:

    Q_c = (I (x) <<c|) E CNOT (I (x) |0>>)

Any two-qubit process ``E`` in the gadget therefore induces an instrument, and
a generator ``L`` induces the first-order deviation ``(I (x) <<c|) L CNOT (I (x) |0>>)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .error_generators import EegIndex, all_eeg_indices, eeg_matrix
from .pauli_algebra import QuantumInstrument, ValidationError, devectorize, ptm_from_unitary, vectorize_state

__all__ = [
    "GadgetFixture",
    "gadget_fixture",
    "InstrumentDeviation",
    "crunch",
    "crunch_linear",
    "first_order_deviation",
    "deviation_map",
    "ideal_instrument",
    "process_deviation",
    "exp_deviation",
    "zero_deviation_indices",
]

_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


@dataclass(frozen=True)
class GadgetFixture:
    cnot: np.ndarray
    inject: np.ndarray
    project: tuple[np.ndarray, np.ndarray]


@lru_cache(maxsize=1)
def gadget_fixture() -> GadgetFixture:
    k = [vectorize_state(np.diag([1.0, 0.0])), vectorize_state(np.diag([0.0, 1.0]))]
    eye = np.eye(4)
    fixture = GadgetFixture(
        cnot=ptm_from_unitary(_CNOT),
        inject=np.kron(eye, k[0].reshape(4, 1)),
        project=(np.kron(eye, k[0].reshape(1, 4)), np.kron(eye, k[1].reshape(1, 4))),
    )
    for arr in (fixture.cnot, fixture.inject, *fixture.project):
        arr.setflags(write=False)
    return fixture


@dataclass(frozen=True)
class InstrumentDeviation:
    """A pair of 4x4 real matrices ``{Lambda_0, Lambda_1}``; need not be CP or TP."""

    pair: tuple[np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        pair = tuple(np.array(m, dtype=float) for m in self.pair)
        if len(pair) != 2 or any(m.shape != (4, 4) for m in pair):
            raise ValidationError("a deviation is a pair of 4x4 matrices")
        for m in pair:
            m.setflags(write=False)
        object.__setattr__(self, "pair", pair)

    def __getitem__(self, c: int) -> np.ndarray:
        return self.pair[c]

    def __add__(self, other: InstrumentDeviation) -> InstrumentDeviation:
        return InstrumentDeviation((self[0] + other[0], self[1] + other[1]))

    def __sub__(self, other: InstrumentDeviation) -> InstrumentDeviation:
        return InstrumentDeviation((self[0] - other[0], self[1] - other[1]))

    def __mul__(self, scale: float) -> InstrumentDeviation:
        return InstrumentDeviation((scale * self[0], scale * self[1]))

    __rmul__ = __mul__

    @property
    def vector(self) -> np.ndarray:
        """Length-32 concatenation of both row-major matrices."""
        return np.concatenate([self[0].ravel(), self[1].ravel()])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> InstrumentDeviation:
        v = np.asarray(v, dtype=float)
        return cls((v[:16].reshape(4, 4), v[16:].reshape(4, 4)))

    @classmethod
    def between(cls, qi: QuantumInstrument, reference: QuantumInstrument) -> InstrumentDeviation:
        return cls((qi[0] - reference[0], qi[1] - reference[1]))

    def is_zero(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.vector).max() <= tol)

    def apply(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Operator-form action on a 2x2 density matrix."""
        v = vectorize_state(rho)
        return devectorize(self[0] @ v), devectorize(self[1] @ v)

    def to_csv(self) -> str:
        """Both matrices as labelled rows, for side-by-side inspection."""
        labels = ("I", "X", "Y", "Z")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "row", *labels])
        for c in (0, 1):
            for r, lab in enumerate(labels):
                w.writerow([c, lab, *(f"{x:.12g}" for x in self[c][r])])
        return buf.getvalue()


def ideal_instrument() -> QuantumInstrument:
    return crunch(np.eye(16))


def crunch(process: np.ndarray) -> QuantumInstrument:
    """Single-qubit instrument induced by a 16x16 two-qubit process."""
    a, b = crunch_linear(process)
    return QuantumInstrument((a, b))


def crunch_linear(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The linear crunch map on an arbitrary 16x16 matrix (process or generator)."""
    m = np.asarray(m, dtype=float)
    if m.shape != (16, 16):
        raise ValidationError(f"expected a 16x16 two-qubit matrix, got {m.shape}")
    fx = gadget_fixture()
    right = fx.cnot @ fx.inject
    return fx.project[0] @ m @ right, fx.project[1] @ m @ right


def first_order_deviation(idx: EegIndex) -> InstrumentDeviation:
    if idx.nqubits != 2:
        raise ValidationError("gadget generators act on two qubits")
    return _first_order_cached(idx)


@lru_cache(maxsize=None)
def _first_order_cached(idx: EegIndex) -> InstrumentDeviation:
    return InstrumentDeviation(crunch_linear(eeg_matrix(idx, 2)))


@lru_cache(maxsize=1)
def deviation_map() -> np.ndarray:
    """32x256 matrix sending a row-major 16x16 generator to its deviation vector."""
    fx = gadget_fixture()
    right = fx.cnot @ fx.inject
    # vec(P L R) = (P kron R^T) vec(L) for row-major vectorization
    m = np.vstack([np.kron(fx.project[0], right.T), np.kron(fx.project[1], right.T)])
    m.setflags(write=False)
    return m


def process_deviation(process: np.ndarray) -> InstrumentDeviation:
    """Exact (all-order) deviation ``crunch(E) - crunch(I)``."""
    return InstrumentDeviation.between(crunch(process), ideal_instrument())


def exp_deviation(generator: np.ndarray) -> InstrumentDeviation:
    return process_deviation(scipy.linalg.expm(generator))


def zero_deviation_indices() -> tuple[EegIndex, ...]:
    """Two-qubit generators whose first-order deviation vanishes identically."""
    return tuple(idx for idx in all_eeg_indices(2) if first_order_deviation(idx).is_zero())
