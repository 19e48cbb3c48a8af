"""Pauli-basis representation of states, effects, channels and instruments.

Everything is expressed in the normalized Pauli basis ``sigma_k / sqrt(d)``
with lexicographic ordering ``I < X < Y < Z`` (so ``II, IX, ..., ZZ`` for two
qubits, the first letter acting on the first tensor factor).  In that basis
the transfer matrix of a unitary channel is real orthogonal and

    [G]_kl = Tr(sigma_k G[sigma_l]) / d.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Protocol, Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "InvalidModelWarning",
    "PauliString",
    "pauli_labels",
    "pauli_matrix",
    "pauli_basis",
    "ptm_from_superop",
    "ptm_from_unitary",
    "ptm_from_kraus",
    "superop_from_ptm",
    "choi_from_ptm",
    "ptm_from_choi",
    "is_cp",
    "is_tp",
    "vectorize_state",
    "vectorize_effect",
    "devectorize",
    "rz_ptm",
    "QuantumInstrument",
    "Circuit",
    "circuit_probability",
    "ptm_to_json",
    "ptm_from_json",
]

PAULI_LETTERS = "IXYZ"

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

GATE_LABELS = ("Gx", "Gy", "Gi")
MCM_LABEL = "Mcm"
MEAS_LABEL = "Meas"

# Probabilities below this are treated as numerical noise rather than model failure.
PROBABILITY_SLACK = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class InvalidModelWarning(UserWarning):
    """Emitted when a model predicts probabilities outside [0, 1]."""


@dataclass(frozen=True, order=False)
class PauliString:
    """A tensor product of single-qubit Paulis, e.g. ``PauliString("ZY")``."""

    letters: str

    def __post_init__(self) -> None:
        if not self.letters:
            raise ValidationError("Pauli string must be nonempty")
        bad = set(self.letters) - set(PAULI_LETTERS)
        if bad:
            raise ValidationError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")

    @property
    def nqubits(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    @property
    def index(self) -> int:
        """Position of this string in the lexicographic basis ordering."""
        idx = 0
        for ch in self.letters:
            idx = 4 * idx + PAULI_LETTERS.index(ch)
        return idx

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self.letters)

    def __lt__(self, other: PauliString) -> bool:
        if self.nqubits != other.nqubits:
            return self.nqubits < other.nqubits
        return self.index < other.index

    def __str__(self) -> str:
        return self.letters


@lru_cache(maxsize=None)
def pauli_labels(n: int) -> tuple[str, ...]:
    """Lexicographically ordered Pauli labels for ``n`` qubits."""
    return tuple("".join(t) for t in itertools.product(PAULI_LETTERS, repeat=n))


def pauli_matrix(label: str) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for ch in label:
        out = np.kron(out, _PAULI_1Q[ch])
    return out


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """Normalized basis ``sigma_k / sqrt(d)`` as an array of shape (d^2, d, d)."""
    d = 2**n
    basis = np.array([pauli_matrix(lab) for lab in pauli_labels(n)]) / np.sqrt(d)
    basis.setflags(write=False)
    return basis


@lru_cache(maxsize=None)
def _vec_basis(n: int) -> np.ndarray:
    # Columns are row-major vectorizations of the normalized Paulis.
    d = 2**n
    b = pauli_basis(n).reshape(d * d, d * d).T.copy()
    b.setflags(write=False)
    return b


def _nqubits_from_dim(d: int) -> int:
    n = int(round(np.log2(d)))
    if 2**n != d or n < 1:
        raise ValidationError(f"dimension {d} is not a power of two")
    return n


def ptm_from_superop(fn, n: int) -> np.ndarray:
    """Transfer matrix of an arbitrary linear map given as a Python callable."""
    basis = pauli_basis(n)
    images = [fn(b) for b in basis]
    return np.array([[np.trace(bk.conj().T @ img).real for img in images] for bk in basis])


def _ptm_from_standard(superop: np.ndarray, n: int) -> np.ndarray:
    b = _vec_basis(n)
    return (b.conj().T @ superop @ b).real


def superop_from_ptm(ptm: np.ndarray) -> np.ndarray:
    """Row-major standard-basis superoperator, ``vec(G[rho]) = S vec(rho)``."""
    n = _nqubits_from_dim(int(round(np.sqrt(ptm.shape[0]))))
    b = _vec_basis(n)
    return b @ ptm @ b.conj().T


def ptm_from_unitary(u: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValidationError("unitary must be a square matrix")
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0):
        raise ValidationError("matrix is not unitary")
    n = _nqubits_from_dim(u.shape[0])
    return _ptm_from_standard(np.kron(u, u.conj()), n)


def ptm_from_kraus(ks: Sequence[np.ndarray], require_tp: bool = False, atol: float = 1e-10) -> np.ndarray:
    """Transfer matrix of ``rho -> sum_k K rho K^dag``.

    Trace-non-increasing Kraus sets are accepted unless ``require_tp`` is set.
    """
    ks = [np.asarray(k, dtype=complex) for k in ks]
    if not ks:
        raise ValidationError("need at least one Kraus operator")
    shape = ks[0].shape
    if len(shape) != 2 or shape[0] != shape[1] or any(k.shape != shape for k in ks):
        raise ValidationError("Kraus operators must be square and share a shape")
    n = _nqubits_from_dim(shape[0])
    gram = sum(k.conj().T @ k for k in ks)
    ident = np.eye(shape[0])
    if require_tp and not np.allclose(gram, ident, atol=atol, rtol=0):
        raise ValidationError("Kraus operators are not trace preserving")
    if np.linalg.eigvalsh(gram).max() > 1 + atol:
        raise ValidationError("Kraus operators are trace increasing")
    return _ptm_from_standard(sum(np.kron(k, k.conj()) for k in ks), n)


def choi_from_ptm(ptm: np.ndarray) -> np.ndarray:
    """Choi matrix ``J = sum_ij G[|i><j|] (x) |i><j|`` (output factor first)."""
    s = superop_from_ptm(np.asarray(ptm, dtype=float))
    d = int(round(np.sqrt(s.shape[0])))
    # s[(a,b),(i,j)] = <a|G[|i><j|]|b>  ->  J[(a,i),(b,j)]
    return s.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def ptm_from_choi(choi: np.ndarray) -> np.ndarray:
    choi = np.asarray(choi, dtype=complex)
    d = int(round(np.sqrt(choi.shape[0])))
    s = choi.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    return _ptm_from_standard(s, _nqubits_from_dim(d))


def is_cp(ptm: np.ndarray, tol: float = 1e-10) -> bool:
    j = choi_from_ptm(ptm)
    j = 0.5 * (j + j.conj().T)
    return bool(np.linalg.eigvalsh(j).min() >= -tol)


def is_tp(ptm: np.ndarray, tol: float = 1e-10) -> bool:
    first = np.zeros(ptm.shape[1])
    first[0] = 1.0
    return bool(np.allclose(ptm[0], first, atol=tol, rtol=0))


def _check_hermitian(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{what} must be a square matrix")
    if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
        raise ValidationError(f"{what} is not Hermitian")
    return m


def vectorize_state(rho: np.ndarray) -> np.ndarray:
    """Coordinates ``Tr(sigma_k rho) / sqrt(d)``; a ket is promoted to a projector."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    rho = _check_hermitian(rho, "state")
    n = _nqubits_from_dim(rho.shape[0])
    return np.einsum("kij,ji->k", pauli_basis(n), rho).real


def vectorize_effect(effect: np.ndarray) -> np.ndarray:
    """Row vector such that ``vectorize_effect(E) @ vectorize_state(rho) == Tr(E rho)``."""
    effect = _check_hermitian(effect, "effect")
    n = _nqubits_from_dim(effect.shape[0])
    return np.einsum("kij,ji->k", pauli_basis(n), effect).real


def devectorize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    n = _nqubits_from_dim(int(round(np.sqrt(vec.shape[0]))))
    return np.einsum("k,kij->ij", vec, pauli_basis(n))


def rz_ptm(phi: float) -> np.ndarray:
    """Transfer matrix of ``exp(-i phi Z / 2)``."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=float)


@dataclass(frozen=True)
class QuantumInstrument:
    """Ordered outcome-indexed transfer matrices whose sum is trace preserving."""

    elements: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        els = tuple(np.array(e, dtype=float) for e in self.elements)
        if len(els) < 2:
            raise ValidationError("an instrument needs at least two outcomes")
        shape = els[0].shape
        if len(shape) != 2 or shape[0] != shape[1] or any(e.shape != shape for e in els):
            raise ValidationError("instrument elements must be square and share a shape")
        for e in els:
            e.setflags(write=False)
        object.__setattr__(self, "elements", els)

    def __getitem__(self, c: int) -> np.ndarray:
        return self.elements[c]

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def total(self) -> np.ndarray:
        return sum(self.elements)

    def is_tp(self, tol: float = 1e-10) -> bool:
        return is_tp(self.total, tol)

    def is_cp(self, tol: float = 1e-10) -> bool:
        return all(is_cp(e, tol) for e in self.elements)

    def validate(self, tol: float = 1e-10) -> QuantumInstrument:
        if not self.is_tp(tol):
            raise ValidationError("instrument elements do not sum to a trace-preserving map")
        if not self.is_cp(tol):
            raise ValidationError("instrument element is not completely positive")
        return self

    def to_json(self) -> dict:
        return {"elements": [ptm_to_json(e) for e in self.elements]}

    @classmethod
    def from_json(cls, obj: Mapping) -> QuantumInstrument:
        return cls(tuple(ptm_from_json(e) for e in obj["elements"]))


def ptm_to_json(ptm: np.ndarray) -> dict:
    ptm = np.asarray(ptm, dtype=float)
    return {"shape": list(ptm.shape), "entries": ptm.ravel().tolist()}


def ptm_from_json(obj: Mapping) -> np.ndarray:
    return np.asarray(obj["entries"], dtype=float).reshape(obj["shape"])


@dataclass(frozen=True)
class Circuit:
    """Operation labels after the implicit state preparation.

    The last label is always the terminal measurement ``Meas``; at most one
    ``Mcm`` may appear before it.
    """

    ops: tuple[str, ...]

    def __post_init__(self) -> None:
        ops = tuple(str(o) for o in self.ops)
        if not ops or ops[-1] != MEAS_LABEL:
            raise ValidationError("circuit must end with the terminal measurement")
        if MEAS_LABEL in ops[:-1]:
            raise ValidationError("terminal measurement may only appear last")
        if ops.count(MCM_LABEL) > 1:
            raise ValidationError("at most one mid-circuit measurement is supported")
        object.__setattr__(self, "ops", ops)

    @classmethod
    def of(cls, *labels: str) -> Circuit:
        """Build from gate/MCM labels, appending the terminal measurement."""
        return cls(tuple(labels) + (MEAS_LABEL,))

    @property
    def has_mcm(self) -> bool:
        return MCM_LABEL in self.ops

    @property
    def body(self) -> tuple[str, ...]:
        return self.ops[:-1]

    @property
    def outcomes(self) -> tuple[str, ...]:
        return ("00", "01", "10", "11") if self.has_mcm else ("0", "1")

    def __str__(self) -> str:
        body = self.body
        return ".".join(body) if body else "{}"

    def to_json(self) -> list[str]:
        return list(self.ops)

    @classmethod
    def from_json(cls, ops: Sequence[str]) -> Circuit:
        return cls(tuple(ops))


class GateSetLike(Protocol):
    rho: np.ndarray
    povm: np.ndarray
    gates: Mapping[str, np.ndarray]
    mcm: QuantumInstrument | None
    stark_phi: float


def circuit_probability(gs: GateSetLike, circuit: Circuit) -> dict[str, float]:
    """Outcome distribution of ``circuit`` under ``gs``.

    MCM outcome strings list the mid-circuit bit first.  When ``gs.stark_phi``
    is nonzero every gate after the MCM is followed by ``Rz(stark_phi)``.
    """
    phi = float(getattr(gs, "stark_phi", 0.0) or 0.0)
    kick = rz_ptm(phi) if phi else None
    branches: list[tuple[str, np.ndarray]] = [("", np.asarray(gs.rho, dtype=float))]
    after_mcm = False
    for label in circuit.body:
        if label == MCM_LABEL:
            if gs.mcm is None:
                raise ValidationError("model has no mid-circuit measurement")
            branches = [
                (prefix + str(c), gs.mcm[c] @ state)
                for prefix, state in branches
                for c in range(len(gs.mcm))
            ]
            after_mcm = True
            continue
        try:
            g = gs.gates[label]
        except KeyError:
            raise ValidationError(f"unknown operation label {label!r}") from None
        if after_mcm and kick is not None:
            g = kick @ g
        branches = [(prefix, g @ state) for prefix, state in branches]
    povm = np.asarray(gs.povm, dtype=float)
    probs = {
        prefix + str(j): float(povm[j] @ state)
        for prefix, state in branches
        for j in range(povm.shape[0])
    }
    worst = min(probs.values())
    if worst < -PROBABILITY_SLACK or max(probs.values()) > 1 + PROBABILITY_SLACK:
        warnings.warn(
            f"circuit {circuit} has probabilities outside [0, 1] (min {worst:.3g}); model is not CP",
            InvalidModelWarning,
            stacklevel=2,
        )
    return probs


def dumps(obj) -> str:
    """Canonical JSON text used by every writer in the package."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
