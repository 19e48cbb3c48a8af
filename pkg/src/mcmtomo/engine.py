"""Batched circuit probabilities and log-likelihood gradients.

Each circuit becomes one row (or two rows, one per MCM outcome) holding a
padded sequence of operation indices.  All rows are propagated together with
``einsum`` over a stack of 4x4 matrices; the reverse pass accumulates the
gradient of every operation with ``np.add.at``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import OpGrad, OpSet
from .pauli_algebra import GATE_LABELS, MCM_LABEL, Circuit, ValidationError, rz_ptm

PROBABILITY_FLOOR = 1e-12

# operation table layout
_IDENT = 0
_GATE_INDEX = {g: 1 + i for i, g in enumerate(GATE_LABELS)}
_MCM_INDEX = (4, 5)
_KICKED_INDEX = {g: 6 + i for i, g in enumerate(GATE_LABELS)}
_N_OPS = 9


@dataclass(frozen=True)
class CompiledCircuits:
    circuits: tuple[Circuit, ...]
    ops: np.ndarray  # (rows, depth) operation indices
    row_circuit: np.ndarray  # circuit index of each row
    row_mcm: np.ndarray  # MCM outcome of each row, -1 without MCM
    uses_kick: bool

    @property
    def n_rows(self) -> int:
        return self.ops.shape[0]


def compile_circuits(circuits: Sequence[Circuit]) -> CompiledCircuits:
    rows: list[list[int]] = []
    owner, outcome = [], []
    kicked = False
    for ci, circ in enumerate(circuits):
        body = circ.body
        branches = (0, 1) if circ.has_mcm else (-1,)
        for c in branches:
            seq, after = [], False
            for label in body:
                if label == MCM_LABEL:
                    seq.append(_MCM_INDEX[c])
                    after = True
                elif label in _GATE_INDEX:
                    seq.append(_KICKED_INDEX[label] if after else _GATE_INDEX[label])
                    kicked |= after
                else:
                    raise ValidationError(f"unknown operation label {label!r}")
            rows.append(seq)
            owner.append(ci)
            outcome.append(c)
    depth = max((len(r) for r in rows), default=0)
    ops = np.zeros((len(rows), max(depth, 1)), dtype=np.int64)
    for i, seq in enumerate(rows):
        if seq:
            ops[i, depth - len(seq) :] = seq
    return CompiledCircuits(tuple(circuits), ops, np.array(owner), np.array(outcome), kicked)


def _table(opset: OpSet) -> tuple[np.ndarray, np.ndarray]:
    table = np.empty((_N_OPS, 4, 4))
    table[_IDENT] = np.eye(4)
    for g, i in _GATE_INDEX.items():
        table[i] = opset.gates[g]
    table[_MCM_INDEX[0]], table[_MCM_INDEX[1]] = opset.mcm
    kick = rz_ptm(opset.stark_phi)
    for g, i in _KICKED_INDEX.items():
        table[i] = kick @ opset.gates[g]
    return table, kick


def row_probabilities(opset: OpSet, cc: CompiledCircuits) -> np.ndarray:
    """``(rows, 2)`` joint probabilities of (MCM branch, terminal outcome)."""
    table, _ = _table(opset)
    v = np.broadcast_to(opset.rho, (cc.n_rows, 4))
    for t in range(cc.ops.shape[1]):
        v = np.einsum("rij,rj->ri", table[cc.ops[:, t]], v)
    return v @ opset.povm.T


def circuit_probabilities(opset: OpSet, cc: CompiledCircuits) -> list[dict[str, float]]:
    p = row_probabilities(opset, cc)
    out: list[dict[str, float]] = [dict() for _ in cc.circuits]
    for r in range(cc.n_rows):
        prefix = "" if cc.row_mcm[r] < 0 else str(cc.row_mcm[r])
        for t in (0, 1):
            out[cc.row_circuit[r]][prefix + str(t)] = float(p[r, t])
    return out


def row_counts(cc: CompiledCircuits, counts: Sequence[dict[str, int]]) -> np.ndarray:
    n = np.zeros((cc.n_rows, 2))
    for r in range(cc.n_rows):
        prefix = "" if cc.row_mcm[r] < 0 else str(cc.row_mcm[r])
        c = counts[cc.row_circuit[r]]
        n[r] = [c.get(prefix + "0", 0), c.get(prefix + "1", 0)]
    return n


def loglikelihood(opset: OpSet, cc: CompiledCircuits, n: np.ndarray, grad: bool = False, freqs: np.ndarray | None = None):
    """``sum n log max(p, floor)`` and optionally its gradient with respect to every operation.

    With observed frequencies ``freqs`` the value is ``sum n log(p / f)``, the
    log-likelihood relative to the saturated model, summed term by term so that
    large shot counts do not cancel catastrophically.
    """
    table, kick = _table(opset)
    depth = cc.ops.shape[1]
    vs = [np.broadcast_to(opset.rho, (cc.n_rows, 4))]
    for t in range(depth):
        vs.append(np.einsum("rij,rj->ri", table[cc.ops[:, t]], vs[-1]))
    p = vs[-1] @ opset.povm.T
    clipped = np.maximum(p, PROBABILITY_FLOOR)
    mask = n > 0
    if freqs is None:
        logl = float(np.sum(n[mask] * np.log(clipped[mask])))
    else:
        logl = float(np.sum(n[mask] * np.log(clipped[mask] / freqs[mask])))
    if not grad:
        return logl
    w = np.where(p > PROBABILITY_FLOOR, n / clipped, 0.0)
    g = OpGrad()
    g.povm = w.T @ vs[-1]
    a = w @ opset.povm
    dtable = np.zeros((_N_OPS, 4, 4))
    for t in range(depth - 1, -1, -1):
        idx = cc.ops[:, t]
        np.add.at(dtable, idx, a[:, :, None] * vs[t][:, None, :])
        a = np.einsum("rij,ri->rj", table[idx], a)
    g.rho = a.sum(axis=0)
    dkick = np.zeros((4, 4))
    for name in GATE_LABELS:
        dk = dtable[_KICKED_INDEX[name]]
        g.gates[name] = dtable[_GATE_INDEX[name]] + kick.T @ dk
        dkick += dk @ opset.gates[name].T
    g.mcm = (dtable[_MCM_INDEX[0]], dtable[_MCM_INDEX[1]])
    phi = opset.stark_phi
    c, s = np.cos(phi), np.sin(phi)
    g.stark_phi = float(-s * (dkick[1, 1] + dkick[2, 2]) + c * (dkick[2, 1] - dkick[1, 2]))
    return logl, g
