"""Elementary error generators and the generator/process correspondence.

Conventions (``rho`` an operator, ``P``, ``Q`` Pauli strings):

    H_P[rho]   = -i [P, rho]
    S_P[rho]   = P rho P - rho
    C_PQ[rho]  = P rho Q + Q rho P - 1/2 {{P, Q}, rho}
    A_PQ[rho]  = i (P rho Q - Q rho P + 1/2 {[P, Q], rho})

With this sign for ``H_P`` a small rate ``h`` produces ``exp(h H_P) = exp(-i h P)``
conjugation.  ``C`` is symmetric in ``(P, Q)`` and ``A`` antisymmetric; indices
are stored with ``P < Q`` in the lexicographic Pauli order.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
import scipy.linalg

from .pauli_algebra import PauliString, ValidationError, pauli_labels, pauli_matrix, ptm_from_superop

__all__ = [
    "SECTORS",
    "EegIndex",
    "canonical_index",
    "all_eeg_indices",
    "eeg_action",
    "eeg_matrix",
    "eeg_stack",
    "generator_to_process",
    "process_to_generator",
    "project_onto_eegs",
    "rates_to_generator",
    "rates_to_json",
    "rates_from_json",
    "LogBranchError",
]

SECTORS = ("H", "S", "C", "A")

_LABEL_RE = re.compile(r"^([HSCA])_([IXYZ]+)(?:_([IXYZ]+))?$")


class LogBranchError(ValueError):
    """The principal matrix logarithm is not defined for this process."""


@dataclass(frozen=True)
class EegIndex:
    sector: str
    p: str
    q: str | None = None

    def __post_init__(self) -> None:
        if self.sector not in SECTORS:
            raise ValidationError(f"unknown generator sector {self.sector!r}")
        p = PauliString(self.p)
        if p.is_identity:
            raise ValidationError("generator index may not be the identity")
        if self.sector in ("H", "S"):
            if self.q is not None:
                raise ValidationError(f"{self.sector} generators take a single index")
            return
        if self.q is None:
            raise ValidationError(f"{self.sector} generators need two indices")
        q = PauliString(self.q)
        if q.is_identity:
            raise ValidationError("generator index may not be the identity")
        if q.nqubits != p.nqubits:
            raise ValidationError("indices act on different numbers of qubits")
        if not p < q:
            raise ValidationError(
                f"pair indices must satisfy p < q (got {self.p}, {self.q}); use canonical_index"
            )

    @property
    def nqubits(self) -> int:
        return len(self.p)

    @property
    def label(self) -> str:
        return f"{self.sector}_{self.p}" if self.q is None else f"{self.sector}_{self.p}_{self.q}"

    @classmethod
    def parse(cls, label: str) -> EegIndex:
        m = _LABEL_RE.match(label)
        if not m:
            raise ValidationError(f"cannot parse generator label {label!r}")
        idx, sign = canonical_index(m.group(1), m.group(2), m.group(3))
        if sign != 1:
            raise ValidationError(f"label {label!r} is not in canonical order")
        return idx

    def __str__(self) -> str:
        return self.label


def canonical_index(sector: str, p: str, q: str | None = None) -> tuple[EegIndex, int]:
    """Return the canonical index and the sign relating it to ``(p, q)``.

    Swapping the pair leaves ``C`` unchanged and flips the sign of ``A``.
    """
    if q is None or sector in ("H", "S"):
        return EegIndex(sector, p, q), 1
    if p == q:
        raise ValidationError("pair generators need distinct indices")
    if PauliString(p) < PauliString(q):
        return EegIndex(sector, p, q), 1
    return EegIndex(sector, q, p), (-1 if sector == "A" else 1)


@lru_cache(maxsize=None)
def all_eeg_indices(n: int) -> tuple[EegIndex, ...]:
    """All ``d^2 (d^2 - 1)`` elementary generators, ordered H, S, C, A."""
    paulis = pauli_labels(n)[1:]
    out: list[EegIndex] = [EegIndex("H", p) for p in paulis]
    out += [EegIndex("S", p) for p in paulis]
    pairs = list(itertools.combinations(paulis, 2))
    out += [EegIndex("C", p, q) for p, q in pairs]
    out += [EegIndex("A", p, q) for p, q in pairs]
    return tuple(out)


def eeg_action(sector: str, p: str, q: str | None = None):
    """The generator as a callable on operators; accepts either pair order."""
    P = pauli_matrix(p)
    if sector == "H":
        return lambda r: -1j * (P @ r - r @ P)
    if sector == "S":
        return lambda r: P @ r @ P - r
    Q = pauli_matrix(q)
    if sector == "C":
        anti = P @ Q + Q @ P
        return lambda r: P @ r @ Q + Q @ r @ P - 0.5 * (anti @ r + r @ anti)
    if sector == "A":
        comm = P @ Q - Q @ P
        return lambda r: 1j * (P @ r @ Q - Q @ r @ P + 0.5 * (comm @ r + r @ comm))
    raise ValidationError(f"unknown generator sector {sector!r}")


def eeg_matrix(idx: EegIndex, n: int | None = None) -> np.ndarray:
    """Transfer-matrix form of an elementary generator (first row is zero)."""
    n = idx.nqubits if n is None else n
    if idx.nqubits != n:
        raise ValidationError(f"index {idx} does not act on {n} qubits")
    return _eeg_matrix_cached(idx)


@lru_cache(maxsize=None)
def _eeg_matrix_cached(idx: EegIndex) -> np.ndarray:
    m = ptm_from_superop(eeg_action(idx.sector, idx.p, idx.q), idx.nqubits)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def eeg_stack(n: int) -> np.ndarray:
    """Row-major vectorized generators stacked as columns, shape (d^4, d^2 (d^2 - 1))."""
    cols = [eeg_matrix(idx, n).ravel() for idx in all_eeg_indices(n)]
    stack = np.array(cols).T
    stack.setflags(write=False)
    return stack


@lru_cache(maxsize=None)
def _dual_frame(n: int) -> np.ndarray:
    dual = np.linalg.pinv(eeg_stack(n))
    dual.setflags(write=False)
    return dual


def rates_to_generator(rates: Mapping[EegIndex | str, float], n: int) -> np.ndarray:
    d2 = 4**n
    out = np.zeros((d2, d2))
    for key, rate in rates.items():
        idx = EegIndex.parse(key) if isinstance(key, str) else key
        out += rate * eeg_matrix(idx, n)
    return out


def project_onto_eegs(generator: np.ndarray, tol: float = 1e-10) -> dict[EegIndex, float]:
    """Rates ``eps_i`` with ``sum_i eps_i L_i == generator``."""
    generator = np.asarray(generator, dtype=float)
    n = int(round(np.log(generator.shape[0]) / np.log(4)))
    if generator.shape != (4**n, 4**n):
        raise ValidationError("generator must be a square transfer matrix on n qubits")
    if not np.allclose(generator[0], 0, atol=tol, rtol=0):
        raise ValidationError("generator is not trace preserving (first row nonzero)")
    rates = _dual_frame(n) @ generator.ravel()
    residual = np.abs(eeg_stack(n) @ rates - generator.ravel()).max()
    if residual > tol * max(1.0, np.abs(generator).max()):
        raise ValidationError(f"generator lies outside the generator span (residual {residual:.2e})")
    return dict(zip(all_eeg_indices(n), rates.tolist()))


def generator_to_process(generator: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(np.asarray(generator, dtype=float))


def process_to_generator(process: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Principal logarithm of a process matrix.

    The eigendecomposition route is used when the eigenvectors are well
    conditioned; otherwise scipy's inverse scaling-and-squaring ``logm``.
    """
    process = np.asarray(process, dtype=float)
    evals, evecs = np.linalg.eig(process)
    if np.any((np.abs(evals.imag) < tol) & (evals.real <= tol)):
        raise LogBranchError("process has a real non-positive eigenvalue; principal log undefined")
    if np.linalg.cond(evecs) < 1e6:
        log = evecs @ np.diag(np.log(evals)) @ np.linalg.inv(evecs)
    else:
        log = scipy.linalg.logm(process)
    if np.abs(log.imag).max() > 1e-8:
        raise LogBranchError("principal logarithm is not real")
    return log.real


def rates_to_json(rates: Mapping[EegIndex, float], drop_below: float = 0.0) -> dict[str, float]:
    return {idx.label: float(v) for idx, v in rates.items() if abs(v) > drop_below}


def rates_from_json(obj: Mapping[str, float]) -> dict[EegIndex, float]:
    return {EegIndex.parse(k): float(v) for k, v in obj.items()}
