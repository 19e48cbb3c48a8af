"""First-order MCM-gauge-invariant (FOMGI) error strengths.

The 28 elementary deviations are generated from the gadget rather than typed
in.  Each label has a representative two-qubit generator; its *base term*
(``-i(P rho - rho P)``, ``P rho P``, ``P rho Q + Q rho P`` or
``i(P rho Q - Q rho P)``) is pushed through the crunch map, and the
generator's trace-correction term is added only when the base term alone would
change the total trace of the instrument.  The result is checked against
hand-written unit actions before use.

A deviation ``{Lambda_0, Lambda_1}`` is reduced to a 28-vector ``q`` by keeping
all of ``Lambda_0`` and the last three rows of ``Lambda_1`` (the first row of
``Lambda_1`` is fixed by trace preservation).  With ``F`` the matrix whose
columns are the reduced deviations, strengths are ``F^-1 q``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .error_generators import EegIndex, all_eeg_indices, canonical_index
from .mcm_gadget import InstrumentDeviation, crunch_linear, first_order_deviation
from .pauli_algebra import ValidationError, pauli_matrix, ptm_from_superop

__all__ = [
    "LABELS",
    "SECTOR_NAMES",
    "SECTOR_OF",
    "REPRESENTATIVE",
    "FomgiBasis",
    "ErrorStrengthReport",
    "build_basis",
    "basis",
    "qvector",
    "deviation_from_qvector",
    "extract",
    "composites",
    "classify",
    "unit_action",
    "compare_with_reference",
    "TableComparison",
]

LABELS: tuple[str, ...] = (
    "s_meas", "s_prep", "s_read",
    "a_meas", "a_prep", "a_read",
    "r_x_meas", "r_y_meas",
    "r_x_ind_prep", "r_x_dep_prep", "r_y_ind_prep", "r_y_dep_prep",
    "rt_x_meas", "rt_y_meas", "rt_xz_meas", "rt_yz_meas",
    "rt_x_ind_prep", "rt_x_dep_prep", "rt_y_ind_prep", "rt_y_dep_prep",
    "w0", "w1", "w2", "w3",
    "wt0", "wt1", "wt2", "wt3",
)  # fmt: skip

# R-tilde and W-tilde are spelled Rt and Wt in machine-readable output.
SECTOR_NAMES = ("S", "A", "R", "Rt", "W", "Wt")

SECTOR_OF: dict[str, str] = {
    lab: {"s": "S", "a": "A", "r": "R", "rt": "Rt", "w": "W", "wt": "Wt"}[
        lab.split("_")[0].rstrip("0123")
    ]
    for lab in LABELS
}

REPRESENTATIVE: dict[str, tuple[str, str, str | None]] = {
    "s_meas": ("S", "XX", None),
    "s_prep": ("S", "XI", None),
    "s_read": ("S", "IX", None),
    "a_meas": ("A", "XX", "YX"),
    "a_prep": ("A", "XI", "YI"),
    "a_read": ("A", "IX", "IY"),
    "r_x_meas": ("H", "XX", None),
    "r_y_meas": ("H", "YX", None),
    "r_x_ind_prep": ("H", "XI", None),
    "r_x_dep_prep": ("H", "XZ", None),
    "r_y_ind_prep": ("H", "YI", None),
    "r_y_dep_prep": ("H", "YZ", None),
    "rt_x_meas": ("C", "XI", "ZY"),
    "rt_y_meas": ("C", "IX", "XZ"),
    "rt_xz_meas": ("C", "XZ", "ZY"),
    "rt_yz_meas": ("C", "IX", "XI"),
    "rt_x_ind_prep": ("C", "XX", "ZY"),
    "rt_x_dep_prep": ("C", "IX", "XY"),
    "rt_y_ind_prep": ("C", "IX", "XX"),
    "rt_y_dep_prep": ("C", "XX", "ZX"),
    "w0": ("H", "ZY", None),
    "w1": ("H", "IY", None),
    "w2": ("H", "ZX", None),
    "w3": ("H", "IX", None),
    "wt0": ("C", "XI", "XY"),
    "wt1": ("C", "XI", "YY"),
    "wt2": ("C", "YY", "YZ"),
    "wt3": ("C", "XX", "XZ"),
}

_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_X = pauli_matrix("X")
_Y = pauli_matrix("Y")
_Z = pauli_matrix("Z")


def _unit_actions() -> dict[str, Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]]:
    # r00, r11 populations; sx = Tr(X rho), sy = Tr(Y rho)
    def u(fn):
        def action(rho):
            r00, r11 = rho[0, 0], rho[1, 1]
            sx = rho[0, 1] + rho[1, 0]
            sy = 1j * (rho[0, 1] - rho[1, 0])
            return fn(r00, r11, sx, sy)

        return action

    return {
        "s_meas": u(lambda a, b, x, y: (-(a - b) * _P0, (a - b) * _P1)),
        "s_prep": u(lambda a, b, x, y: (-a * _Z, b * _Z)),
        "s_read": u(lambda a, b, x, y: (-a * _P0 + b * _P1, a * _P0 - b * _P1)),
        "a_meas": u(lambda a, b, x, y: (-2 * (a + b) * _P0, 2 * (a + b) * _P1)),
        "a_prep": u(lambda a, b, x, y: (-2 * a * _Z, -2 * b * _Z)),
        "a_read": u(lambda a, b, x, y: (-2 * (a * _P0 + b * _P1), 2 * (a * _P0 + b * _P1))),
        "r_x_meas": u(lambda a, b, x, y: (y * _P0, -y * _P1)),
        "r_y_meas": u(lambda a, b, x, y: (-x * _P0, x * _P1)),
        "r_x_ind_prep": u(lambda a, b, x, y: (-a * _Y, b * _Y)),
        "r_x_dep_prep": u(lambda a, b, x, y: (-a * _Y, -b * _Y)),
        "r_y_ind_prep": u(lambda a, b, x, y: (a * _X, -b * _X)),
        "r_y_dep_prep": u(lambda a, b, x, y: (a * _X, b * _X)),
        "rt_x_meas": u(lambda a, b, x, y: (-y * _P1, y * _P0)),
        "rt_y_meas": u(lambda a, b, x, y: (x * _P1, -x * _P0)),
        "rt_xz_meas": u(lambda a, b, x, y: (y * _Z, -y * _Z)),
        "rt_yz_meas": u(lambda a, b, x, y: (-x * _Z, x * _Z)),
        "rt_x_ind_prep": u(lambda a, b, x, y: (b * _Y, -a * _Y)),
        "rt_x_dep_prep": u(lambda a, b, x, y: (b * _Y, a * _Y)),
        "rt_y_ind_prep": u(lambda a, b, x, y: (b * _X, a * _X)),
        "rt_y_dep_prep": u(lambda a, b, x, y: (-b * _X, a * _X)),
        "w0": u(lambda a, b, x, y: ((x * _X + y * _Y) / 2, (x * _X + y * _Y) / 2)),
        "w1": u(lambda a, b, x, y: (-(x * _X + y * _Y) / 2, (x * _X + y * _Y) / 2)),
        "w2": u(lambda a, b, x, y: ((x * _Y - y * _X) / 2, (x * _Y - y * _X) / 2)),
        "w3": u(lambda a, b, x, y: (-(x * _Y - y * _X) / 2, (x * _Y - y * _X) / 2)),
        "wt0": u(lambda a, b, x, y: ((x * _Y + y * _X) / 2, (x * _Y + y * _X) / 2)),
        "wt1": u(lambda a, b, x, y: ((y * _Y - x * _X) / 2, (y * _Y - x * _X) / 2)),
        "wt2": u(lambda a, b, x, y: (-(x * _Y + y * _X) / 2, (x * _Y + y * _X) / 2)),
        "wt3": u(lambda a, b, x, y: ((x * _X - y * _Y) / 2, -(x * _X - y * _Y) / 2)),
    }


_UNIT_ACTIONS = _unit_actions()


def unit_action(label: str, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hand-written operator form of an elementary deviation."""
    return _UNIT_ACTIONS[label](np.asarray(rho, dtype=complex))


def _unit_action_deviation(label: str) -> InstrumentDeviation:
    act = _UNIT_ACTIONS[label]
    return InstrumentDeviation(
        tuple(ptm_from_superop(lambda r, c=c: act(r)[c], 1) for c in (0, 1))
    )


def _split_terms(sector: str, p: str, q: str | None):
    """(base term, trace-correction term) of a generator as operator callables."""
    P = pauli_matrix(p)
    if sector == "H":
        return (lambda r: -1j * (P @ r - r @ P)), None
    if sector == "S":
        return (lambda r: P @ r @ P), (lambda r: -r)
    Q = pauli_matrix(q)
    if sector == "C":
        anti = P @ Q + Q @ P
        return (lambda r: P @ r @ Q + Q @ r @ P), (lambda r: -0.5 * (anti @ r + r @ anti))
    comm = P @ Q - Q @ P
    return (lambda r: 1j * (P @ r @ Q - Q @ r @ P)), (lambda r: 0.5j * (comm @ r + r @ comm))


def _crunch_callable(fn) -> InstrumentDeviation:
    return InstrumentDeviation(crunch_linear(ptm_from_superop(fn, 2)))


def _preserves_trace(dev: InstrumentDeviation, tol: float = 1e-12) -> bool:
    return bool(np.abs(dev[0][0] + dev[1][0]).max() <= tol)


def elementary_deviation(label: str) -> InstrumentDeviation:
    sector, p, q = REPRESENTATIVE[label]
    base, correction = _split_terms(sector, p, q)
    dev = _crunch_callable(base)
    if not _preserves_trace(dev) and correction is not None:
        dev = dev + _crunch_callable(correction)
    if not _preserves_trace(dev):
        raise ValidationError(f"deviation {label} does not preserve total trace")
    return dev


def qvector(dev: InstrumentDeviation) -> np.ndarray:
    return np.concatenate([dev[0].ravel(), dev[1].ravel()[4:]])


def deviation_from_qvector(q: np.ndarray) -> InstrumentDeviation:
    q = np.asarray(q, dtype=float)
    if q.shape != (28,):
        raise ValidationError("a reduced deviation has 28 entries")
    d0 = q[:16].reshape(4, 4)
    d1 = np.vstack([-d0[0], q[16:].reshape(3, 4)])
    return InstrumentDeviation((d0, d1))


@dataclass(frozen=True)
class FomgiBasis:
    deviations: Mapping[str, InstrumentDeviation]
    F: np.ndarray
    F_inv: np.ndarray
    condition_number: float

    @property
    def labels(self) -> tuple[str, ...]:
        return LABELS

    def dual(self, label: str) -> np.ndarray:
        """Dual vector (row of ``F^-1``) in reduced 28-vector coordinates."""
        return self.F_inv[LABELS.index(label)]

    def assemble(self, strengths: Mapping[str, float] | Sequence[float]) -> InstrumentDeviation:
        if isinstance(strengths, Mapping):
            unknown = set(strengths) - set(LABELS)
            if unknown:
                raise ValidationError(f"unknown strength labels {sorted(unknown)}")
            vec = np.array([strengths.get(lab, 0.0) for lab in LABELS])
        else:
            vec = np.asarray(strengths, dtype=float)
        return deviation_from_qvector(self.F @ vec)

    def strengths_vector(self, dev: InstrumentDeviation) -> np.ndarray:
        return self.F_inv @ qvector(dev)

    def combination(self, label: str) -> dict[EegIndex, float]:
        """Coefficients of the two-qubit generator rates entering ``label``."""
        row = _generator_coefficients(self)[LABELS.index(label)]
        return {idx: float(c) for idx, c in zip(all_eeg_indices(2), row) if c != 0}

    def combination_string(self, label: str) -> str:
        terms = []
        for idx, c in self.combination(label).items():
            name = idx.sector.lower() + "_" + (idx.p + (idx.q or "")).lower()
            mag = "" if abs(c) == 1 else f"{abs(c):g}"
            terms.append(("- " if c < 0 else "+ ") + mag + name)
        text = " ".join(terms)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]


def _generator_coefficients(b: FomgiBasis) -> np.ndarray:
    cached = getattr(b, "_coeffs", None)
    if cached is None:
        q = np.array([qvector(first_order_deviation(idx)) for idx in all_eeg_indices(2)]).T
        cached = np.round(b.F_inv @ q, 12) + 0.0
        object.__setattr__(b, "_coeffs", cached)
    return cached


def build_basis(self_test: bool = True) -> FomgiBasis:
    """Generate the 28 elementary deviations and the change-of-basis matrix.

    With ``self_test`` each deviation is compared with its hand-written unit
    action and every generator coefficient is checked to be an integer; any
    mismatch raises.
    """
    devs = {lab: elementary_deviation(lab) for lab in LABELS}
    if self_test:
        for lab, dev in devs.items():
            expected = _unit_action_deviation(lab)
            if not np.allclose(dev.vector, expected.vector, atol=1e-12, rtol=0):
                raise ValidationError(f"generated deviation {lab} disagrees with its unit action")
    F = np.array([qvector(devs[lab]) for lab in LABELS]).T
    F_inv = np.linalg.inv(F)
    basis_ = FomgiBasis(devs, F, F_inv, float(np.linalg.cond(F)))
    for arr in (F, F_inv):
        arr.setflags(write=False)
    if self_test:
        coeffs = _generator_coefficients(basis_)
        if not np.allclose(coeffs, np.round(coeffs), atol=1e-9):
            raise ValidationError("generator coefficients of the FOMGI quantities are not integers")
        if not np.allclose(F_inv @ F, np.eye(28), atol=1e-12):
            raise ValidationError("change-of-basis matrix is ill conditioned")
    return basis_


@lru_cache(maxsize=1)
def basis() -> FomgiBasis:
    """Process-wide cached basis."""
    return build_basis()


# ---------------------------------------------------------------- reports


COMPOSITE_NAMES = (
    "pre_mcm_t1",
    "pre_mcm_excitation",
    "post_mcm_t1",
    "post_mcm_excitation",
    "total_t1",
    "readout_error_1to0",
    "readout_error_0to1",
    "pure_readout",
    "readout_bias",
    "weakness",
    "weakness_unitary",
    "weakness_nonunitary",
    "rotation_x_pre",
    "rotation_y_pre",
    "rotation_x_post_c0",
    "rotation_x_post_c1",
    "rotation_y_post_c0",
    "rotation_y_post_c1",
)


def composites(s: Mapping[str, float]) -> dict[str, float]:
    """Physical mechanisms assembled from elementary strengths.

    Populations: the pair (S, A) of each stage splits into a 1->0 and a 0->1
    process, ``Gamma = 2S -/+ A``, each reported as a probability (so damping
    by ``gamma`` before the measurement gives ``pre_mcm_t1 == gamma``).
    Rotations are signed angles of ``exp(-i angle sigma / 2)`` applied before
    the measurement or to the post-measurement state of one outcome.
    """
    out = {
        "pre_mcm_t1": s["s_meas"] - 2 * s["a_meas"],
        "pre_mcm_excitation": s["s_meas"] + 2 * s["a_meas"],
        "post_mcm_t1": s["s_prep"] - 2 * s["a_prep"],
        "post_mcm_excitation": s["s_prep"] + 2 * s["a_prep"],
        "readout_error_1to0": s["s_read"] - 2 * s["a_read"],
        "readout_error_0to1": s["s_read"] + 2 * s["a_read"],
        "pure_readout": s["s_read"],
        "readout_bias": 4 * s["a_read"],
        "weakness_unitary": float(np.hypot.reduce([s[f"w{i}"] for i in range(4)])),
        "weakness_nonunitary": float(np.hypot.reduce([s[f"wt{i}"] for i in range(4)])),
        "rotation_x_pre": 2 * s["r_x_meas"],
        "rotation_y_pre": 2 * s["r_y_meas"],
        "rotation_x_post_c0": 2 * (s["r_x_ind_prep"] + s["r_x_dep_prep"]),
        "rotation_x_post_c1": 2 * (s["r_x_dep_prep"] - s["r_x_ind_prep"]),
        "rotation_y_post_c0": 2 * (s["r_y_ind_prep"] + s["r_y_dep_prep"]),
        "rotation_y_post_c1": 2 * (s["r_y_dep_prep"] - s["r_y_ind_prep"]),
    }
    out["total_t1"] = out["pre_mcm_t1"] + out["post_mcm_t1"]
    out["weakness"] = float(np.hypot(out["weakness_unitary"], out["weakness_nonunitary"]))
    return {k: float(out[k]) for k in COMPOSITE_NAMES}


def gamma_coefficients(s: Mapping[str, float]) -> dict[str, float]:
    """Coefficients of the raw ``2S -/+ A`` deviations (a quarter of the probabilities)."""
    c = composites(s)
    return {
        "gamma_meas_1to0": c["pre_mcm_t1"] / 4,
        "gamma_meas_0to1": c["pre_mcm_excitation"] / 4,
        "gamma_prep_1to0": c["post_mcm_t1"] / 4,
        "gamma_prep_0to1": c["post_mcm_excitation"] / 4,
    }


@dataclass(frozen=True)
class ErrorStrengthReport:
    strengths: dict[str, float]
    composites: dict[str, float]
    uncertainties: dict[str, float] | None = None
    tp_residual: float = 0.0
    reconstruction_residual: float = 0.0
    extra: dict[str, float] = field(default_factory=dict)

    def with_uncertainties(self, samples: Sequence[ErrorStrengthReport]) -> ErrorStrengthReport:
        """Attach standard deviations over resampled reports (strengths and composites)."""
        if len(samples) < 2:
            raise ValidationError("need at least two resampled reports")
        keys = list(self.strengths) + list(self.composites)
        table = np.array([[{**r.strengths, **r.composites}[k] for k in keys] for r in samples])
        std = table.std(axis=0, ddof=1)
        return ErrorStrengthReport(
            dict(self.strengths),
            dict(self.composites),
            dict(zip(keys, std.tolist())),
            self.tp_residual,
            self.reconstruction_residual,
            dict(self.extra),
        )

    def to_json(self) -> dict:
        return {
            "strengths": {k: self.strengths[k] for k in LABELS},
            "composites": dict(self.composites),
            "uncertainties": self.uncertainties,
            "tp_residual": self.tp_residual,
            "reconstruction_residual": self.reconstruction_residual,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> ErrorStrengthReport:
        return cls(
            dict(obj["strengths"]),
            dict(obj["composites"]),
            obj.get("uncertainties"),
            float(obj.get("tp_residual", 0.0)),
            float(obj.get("reconstruction_residual", 0.0)),
            dict(obj.get("extra", {})),
        )

    def to_csv(self) -> str:
        """Rows ``label, sector, strength, two_sigma`` in canonical label order, then composites."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "sector", "strength", "two_sigma"])
        unc = self.uncertainties or {}

        def two_sigma(k):
            return f"{2 * unc[k]:.12g}" if k in unc else ""

        for lab in LABELS:
            w.writerow([lab, SECTOR_OF[lab], f"{self.strengths[lab]:.12g}", two_sigma(lab)])
        for name, val in self.composites.items():
            w.writerow([name, "composite", f"{val:.12g}", two_sigma(name)])
        return buf.getvalue()


def extract(dq: InstrumentDeviation, tp_tol: float = 1e-8, b: FomgiBasis | None = None) -> ErrorStrengthReport:
    """Strengths of an instrument deviation ``dq = Q - Q_ideal``.

    The trace-violating part (first row of ``dq_0 + dq_1``) is not represented
    by the basis; it is dropped and returned as ``tp_residual``.  A violation
    larger than ``tp_tol`` raises.
    """
    b = basis() if b is None else b
    tp_residual = float(np.abs(dq[0][0] + dq[1][0]).max())
    if tp_residual > tp_tol:
        raise ValidationError(f"deviation is not trace preserving (residual {tp_residual:.2e})")
    q = qvector(dq)
    vec = b.F_inv @ q
    strengths = dict(zip(LABELS, vec.tolist()))
    recon = float(np.abs(b.F @ vec - q).max())
    return ErrorStrengthReport(strengths, composites(strengths), None, tp_residual, recon)


@dataclass(frozen=True)
class SectorSummary:
    sectors: dict[str, dict[str, float]]
    sector_norms: dict[str, float]
    dominant: str | None
    composites: dict[str, float]


def classify(report: ErrorStrengthReport, tol: float = 1e-9) -> SectorSummary:
    """Group nonzero strengths by sector and name the dominant one."""
    sectors: dict[str, dict[str, float]] = {name: {} for name in SECTOR_NAMES}
    for lab in LABELS:
        val = report.strengths.get(lab, 0.0)
        if abs(val) > tol:
            sectors[SECTOR_OF[lab]][lab] = val
    norms = {name: float(np.linalg.norm(list(vals.values()))) if vals else 0.0 for name, vals in sectors.items()}
    dominant = max(norms, key=norms.get) if any(norms.values()) else None
    return SectorSummary(sectors, norms, dominant, dict(report.composites))


def generator_strengths(rates: Mapping[EegIndex | str, float]) -> dict[str, float]:
    """FOMGI strengths implied (to first order) by a map of two-qubit generator rates."""
    b = basis()
    total = np.zeros(28)
    for key, rate in rates.items():
        idx = EegIndex.parse(key) if isinstance(key, str) else key
        total += rate * qvector(first_order_deviation(idx))
    return dict(zip(LABELS, (b.F_inv @ total).tolist()))


def pair_coefficient(label: str, sector: str, p: str, q: str | None = None) -> float:
    """Coefficient of a generator rate in a FOMGI quantity, with pair-order sign."""
    idx, sign = canonical_index(sector, p, q)
    return sign * basis().combination(label).get(idx, 0.0)


# ---------------------------------------------------------------- reference tables


@dataclass(frozen=True)
class TableComparison:
    """Differences between the generated basis and the reference tables."""

    row_mismatches: dict[str, tuple[tuple[str, float, float], ...]]
    unit_action_mismatches: tuple[str, ...]
    rows_checked: int
    unit_actions_checked: int

    @property
    def exact(self) -> bool:
        return not self.row_mismatches and not self.unit_action_mismatches

    def to_json(self) -> dict:
        return {
            "exact": self.exact,
            "rows_checked": self.rows_checked,
            "unit_actions_checked": self.unit_actions_checked,
            "row_mismatches": {k: [list(t) for t in v] for k, v in self.row_mismatches.items()},
            "unit_action_mismatches": list(self.unit_action_mismatches),
        }


def _index_name(idx: EegIndex) -> str:
    return "_".join([idx.sector, idx.p] + ([idx.q] if idx.q else []))


def compare_with_reference(b: FomgiBasis | None = None, n_probe: int = 6, seed: int = 0) -> TableComparison:
    """Compare generated combinations and unit actions with the transcribed tables.

    Unit actions are compared on random density matrices.
    """
    from .reference_tables import REFERENCE_ROWS, REFERENCE_UNIT_ACTIONS, parse_combination

    b = basis() if b is None else b
    rows: dict[str, tuple[tuple[str, float, float], ...]] = {}
    for lab in LABELS:
        ref = parse_combination(REFERENCE_ROWS[lab])
        generated = b.combination(lab)
        diffs = []
        for idx in sorted(set(ref) | set(generated), key=_index_name):
            pub, gen = ref.get(idx, 0), generated.get(idx, 0.0)
            if abs(pub - gen) > 1e-9:
                diffs.append((_index_name(idx), float(pub), float(gen)))
        if diffs:
            rows[lab] = tuple(diffs)
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(n_probe):
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        r = g @ g.conj().T
        probes.append(r / np.trace(r))
    bad = []
    for lab in LABELS:
        for r in probes:
            mine, theirs = unit_action(lab, r), REFERENCE_UNIT_ACTIONS[lab](r)
            if any(not np.allclose(m, t, atol=1e-12) for m, t in zip(mine, theirs)):
                bad.append(lab)
                break
    return TableComparison(rows, tuple(bad), len(LABELS), len(LABELS))
