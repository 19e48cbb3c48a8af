"""Circuit design, synthetic data, and dataset persistence."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import engine
from .models import GAUGE_DIMENSION, K_MODEL, GateSetModel, OpSet, ideal_gateset
from .pauli_algebra import MCM_LABEL, PROBABILITY_SLACK, Circuit, ValidationError

__all__ = [
    "FIDUCIALS",
    "GERMS",
    "CircuitDataset",
    "design_circuits",
    "design_jacobian_rank",
    "sample_dataset",
    "linear_tp_jacobian",
]

FIDUCIALS: tuple[tuple[str, ...], ...] = ((), ("Gx",), ("Gy",), ("Gx", "Gx"), ("Gx", "Gx", "Gx"), ("Gy", "Gy", "Gy"))
GERMS = ("Gx", "Gy", "Gi")
DEPTHS = (1, 4)
N_GERM_CIRCUITS = 56


@dataclass(frozen=True, eq=False)
class CircuitDataset:
    circuits: tuple[Circuit, ...]
    counts: tuple[dict[str, int], ...]
    shots_per_circuit: int
    seed: int | None = None

    def __post_init__(self) -> None:
        circuits = tuple(self.circuits)
        counts = tuple({str(k): int(v) for k, v in c.items()} for c in self.counts)
        if not circuits:
            raise ValidationError("dataset has no circuits")
        if len(counts) != len(circuits):
            raise ValidationError("one count table per circuit is required")
        if self.shots_per_circuit <= 0:
            raise ValidationError("shots per circuit must be positive")
        for circ, c in zip(circuits, counts):
            if set(c) - set(circ.outcomes):
                raise ValidationError(f"invalid outcome strings {sorted(set(c) - set(circ.outcomes))} for {circ}")
            if any(v < 0 for v in c.values()):
                raise ValidationError("counts must be nonnegative")
        object.__setattr__(self, "circuits", circuits)
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return len(self.circuits)

    @property
    def totals(self) -> np.ndarray:
        return np.array([sum(c.values()) for c in self.counts])

    @property
    def k_sat(self) -> int:
        return sum(len(c.outcomes) - 1 for c in self.circuits)

    def frequencies(self) -> list[dict[str, float]]:
        out = []
        for circ, c in zip(self.circuits, self.counts):
            n = sum(c.values())
            out.append({o: (c.get(o, 0) / n if n else 0.0) for o in circ.outcomes})
        return out

    def to_json(self) -> dict:
        return {
            "shots": self.shots_per_circuit,
            "seed": self.seed,
            "circuits": [
                {"circuit": circ.to_json(), "counts": {o: c.get(o, 0) for o in circ.outcomes}}
                for circ, c in zip(self.circuits, self.counts)
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> CircuitDataset:
        try:
            entries = obj["circuits"]
            return cls(
                tuple(Circuit.from_json(e["circuit"]) for e in entries),
                tuple(dict(e["counts"]) for e in entries),
                int(obj["shots"]),
                obj.get("seed"),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed dataset JSON: {exc}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["circuit_id", "circuit", "outcome", "count"])
        for i, (circ, c) in enumerate(zip(self.circuits, self.counts)):
            for o in circ.outcomes:
                w.writerow([i, str(circ), o, c.get(o, 0)])
        return buf.getvalue()


# ------------------------------------------------------------------ design


def _fiducial_pairs():
    return list(itertools.product(range(len(FIDUCIALS)), repeat=2))


def _base_circuits() -> list[Circuit]:
    pairs = _fiducial_pairs()
    plain = [Circuit.of(*FIDUCIALS[i], *FIDUCIALS[j]) for i, j in pairs]
    mcm = [Circuit.of(*FIDUCIALS[i], MCM_LABEL, *FIDUCIALS[j]) for i, j in pairs]
    return plain + mcm


def _germ_pool(existing: Sequence[Circuit]) -> list[tuple[str, int, Circuit]]:
    """Every distinct fiducial-germ^depth-fiducial circuit not already in ``existing``."""
    seen = {c.ops for c in existing}
    pool = []
    for depth in DEPTHS:
        for germ in GERMS:
            for i, j in _fiducial_pairs():
                c = Circuit.of(*FIDUCIALS[i], *([germ] * depth), *FIDUCIALS[j])
                if c.ops not in seen:
                    seen.add(c.ops)
                    pool.append((germ, depth, c))
    return pool


def _rank(m: np.ndarray, rtol: float = 1e-7) -> int:
    sv = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(sv > rtol * sv[0]))


def _germ_circuits(existing: Sequence[Circuit]) -> list[Circuit]:
    """Deterministic germ selection.

    First pass: walk the pool in order and keep each circuit that raises the
    Jacobian rank.  Second pass: fill the remaining slots round-robin over
    germs, deepest circuits first.
    """
    tagged = _germ_pool(existing)
    pool = [c for _, _, c in tagged]
    jac = linear_tp_jacobian(list(existing) + pool)
    sizes = [len(c.outcomes) for c in list(existing) + pool]
    offsets = np.cumsum([0] + sizes)
    n_base = len(existing)
    current = jac[: offsets[n_base]]
    rank = _rank(current)
    chosen: list[int] = []
    for k in range(len(pool)):
        if rank == K_MODEL["CPTP"] or len(chosen) == N_GERM_CIRCUITS:
            break
        rows = jac[offsets[n_base + k] : offsets[n_base + k + 1]]
        trial = np.vstack([current, rows])
        r = _rank(trial)
        if r > rank:
            chosen.append(k)
            current, rank = trial, r
    queues: dict[tuple[str, int], list[int]] = {(g, d): [] for g in GERMS for d in DEPTHS}
    for k, (germ, depth, _) in enumerate(tagged):
        if k not in chosen:
            queues[(germ, depth)].append(k)
    order = [(g, d) for d in sorted(DEPTHS, reverse=True) for g in GERMS]
    while len(chosen) < N_GERM_CIRCUITS and any(queues[key] for key in order):
        for key in order:
            if queues[key] and len(chosen) < N_GERM_CIRCUITS:
                chosen.append(queues[key].pop(0))
    if len(chosen) < N_GERM_CIRCUITS:
        raise ValidationError("not enough distinct germ circuits")
    return [pool[k] for k in chosen]


def linear_tp_jacobian(circuits: Sequence[Circuit], gs: GateSetModel | None = None, step: float = 1e-5) -> np.ndarray:
    """Jacobian of all outcome probabilities with respect to every free TP matrix entry.

    Free entries: rho's non-identity components (3), the first effect (4),
    rows 1-3 of each gate (36), all of Q_0 and rows 1-3 of Q_1 (28); 71 in all.
    """
    gs = ideal_gateset() if gs is None else gs
    base = OpSet.from_model(gs)
    cc = engine.compile_circuits(circuits)

    def unpack(theta: np.ndarray) -> OpSet:
        rho = base.rho.copy()
        rho[1:] += theta[:3]
        e0 = base.povm[0] + theta[3:7]
        povm = np.vstack([e0, base.povm.sum(axis=0) - e0])
        gates = {}
        pos = 7
        for g in ("Gx", "Gy", "Gi"):
            m = base.gates[g].copy()
            m[1:] += theta[pos : pos + 12].reshape(3, 4)
            gates[g] = m
            pos += 12
        q0 = base.mcm[0] + theta[pos : pos + 16].reshape(4, 4)
        q1 = base.mcm[1].copy()
        q1[1:] += theta[pos + 16 : pos + 28].reshape(3, 4)
        q1[0] = base.mcm[0][0] + base.mcm[1][0] - q0[0]
        return OpSet(rho, povm, gates, (q0, q1), base.stark_phi)

    n = 71
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        plus = engine.row_probabilities(unpack(e), cc)
        minus = engine.row_probabilities(unpack(-e), cc)
        cols.append(((plus - minus) / (2 * step)).ravel())
    return np.array(cols).T


def design_jacobian_rank(circuits: Sequence[Circuit], rtol: float = 1e-7) -> tuple[int, np.ndarray]:
    sv = np.linalg.svd(linear_tp_jacobian(circuits), compute_uv=False)
    return int(np.sum(sv > rtol * sv[0])), sv


@lru_cache(maxsize=1)
def _design() -> tuple[Circuit, ...]:
    base = _base_circuits()
    circuits = tuple(base + _germ_circuits(base))
    rank, sv = design_jacobian_rank(circuits)
    expected = K_MODEL["CPTP"]
    if rank != expected:
        raise ValidationError(
            f"circuit design is not informationally complete: Jacobian rank {rank}, expected {expected} "
            f"(71 entries minus {GAUGE_DIMENSION} gauge directions); smallest kept singular value {sv[rank - 1]:.3g}"
        )
    return circuits


def design_circuits() -> list[Circuit]:
    """The fixed 128-circuit design (36 fiducial pairs, 36 MCM pairs, 56 germ circuits)."""
    return list(_design())


# ------------------------------------------------------------------ sampling


def sample_dataset(
    gs: GateSetModel, circuits: Sequence[Circuit], shots: int, seed: int
) -> CircuitDataset:
    """Multinomial counts with an independent RNG stream per circuit."""
    if int(shots) != shots or shots <= 0:
        raise ValidationError("shots must be a positive integer")
    circuits = list(circuits)
    cc = engine.compile_circuits(circuits)
    probs = engine.circuit_probabilities(OpSet.from_model(gs), cc)
    streams = np.random.SeedSequence(int(seed)).spawn(len(circuits))
    counts = []
    for circ, p, ss in zip(circuits, probs, streams):
        outcomes = circ.outcomes
        vec = np.array([p[o] for o in outcomes])
        if vec.min() < -PROBABILITY_SLACK or abs(vec.sum() - 1) > 1e-8:
            raise ValidationError(f"invalid outcome probabilities {vec} for circuit {circ}")
        vec = np.clip(vec, 0, None)
        draw = np.random.default_rng(ss).multinomial(int(shots), vec / vec.sum())
        counts.append({o: int(k) for o, k in zip(outcomes, draw) if k})
    return CircuitDataset(tuple(circuits), tuple(counts), int(shots), int(seed))
