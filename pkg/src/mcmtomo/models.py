"""Gate-set models, their parameterizations, and a synthetic truth-model builder.

Every completely positive block (state, POVM, gate, instrument) is written as
a family of Kraus operators ``K`` normalized by ``S^-1/2`` with
``S = sum K^dagger K``.  This keeps each element CP for any raw parameter
vector and makes the elementwise sum trace preserving; the map is smooth and
its gradient is pulled back analytically in :meth:`KrausBlock.backward`.

Raw parameter vectors are over-complete (unitary freedom among Kraus operators
and the overall scale of ``K``).  The number of *declared* parameters of each
model, used for statistics, is listed in :data:`K_MODEL`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .mcm_gadget import crunch
from .pauli_algebra import (
    GATE_LABELS,
    Circuit,
    QuantumInstrument,
    ValidationError,
    circuit_probability,
    is_cp,
    pauli_basis,
    pauli_matrix,
    ptm_from_json,
    ptm_from_kraus,
    ptm_from_superop,
    ptm_from_unitary,
    ptm_to_json,
    rz_ptm,
    vectorize_effect,
    vectorize_state,
)

__all__ = [
    "MODEL_TAGS",
    "K_MODEL",
    "GAUGE_DIMENSION",
    "GateSetModel",
    "KrausBlock",
    "Parameterization",
    "OpSet",
    "UsiParams",
    "MprParams",
    "TruthModelConfig",
    "ideal_gateset",
    "apply_stark",
    "build_truth_model",
    "usi_instrument",
    "mpr_instrument",
    "amplitude_damping_ptm",
    "excitation_ptm",
    "depolarizing_ptm",
    "preset_from_amplitude",
    "predicted_stark_phase",
]

MODEL_TAGS = ("CPTP", "CPTP+Stark", "MPR", "MPR+Stark", "USI", "GatesOnly")

# Declared parameter counts (gauge directions removed), used in every statistic.
K_MODEL = {"CPTP": 59, "CPTP+Stark": 60, "MPR": 42, "MPR+Stark": 43, "USI": 34, "GatesOnly": 31}
GAUGE_DIMENSION = 12

_SQRT2 = math.sqrt(2.0)
_KET = (vectorize_state(np.diag([1.0, 0.0])), vectorize_state(np.diag([0.0, 1.0])))
_BRA = (vectorize_effect(np.diag([1.0, 0.0])), vectorize_effect(np.diag([0.0, 1.0])))


# ------------------------------------------------------------------ channels


def amplitude_damping_ptm(gamma: float) -> np.ndarray:
    """|1> decays to |0> with probability ``gamma``."""
    _check_prob(gamma, "damping probability")
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]])
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]])
    return ptm_from_kraus([k0, k1], require_tp=True)


def excitation_ptm(p: float) -> np.ndarray:
    """|0> is excited to |1> with probability ``p``."""
    _check_prob(p, "excitation probability")
    k0 = np.array([[math.sqrt(1 - p), 0], [0, 1]])
    k1 = np.array([[0, 0], [math.sqrt(p), 0]])
    return ptm_from_kraus([k0, k1], require_tp=True)


def depolarizing_ptm(p: float) -> np.ndarray:
    """``rho -> (1 - p) rho + p I/2``."""
    _check_prob(p, "depolarization")
    return np.diag([1.0, 1 - p, 1 - p, 1 - p])


def _check_prob(p: float, what: str) -> None:
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ValidationError(f"{what} must lie in [0, 1], got {p}")


def _rotation(axis: str, angle: float) -> np.ndarray:
    p = pauli_matrix(axis)
    u = math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * p
    return ptm_from_unitary(u)


# ------------------------------------------------------------------ gate sets


@dataclass(frozen=True, eq=False)
class GateSetModel:
    rho: np.ndarray
    povm: np.ndarray
    gates: Mapping[str, np.ndarray]
    mcm: QuantumInstrument | None
    parameterization: str = "CPTP"
    stark_phi: float = 0.0
    params: np.ndarray | None = None

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=float).reshape(4)
        povm = np.array(self.povm, dtype=float).reshape(2, 4)
        gates = {k: np.array(v, dtype=float) for k, v in self.gates.items()}
        for arr in (rho, povm, *gates.values()):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("gate-set entries must be finite")
            arr.setflags(write=False)
        if set(gates) != set(GATE_LABELS):
            raise ValidationError(f"gate set needs exactly the gates {GATE_LABELS}")
        if not math.isfinite(self.stark_phi):
            raise ValidationError("stark_phi must be finite")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "povm", povm)
        object.__setattr__(self, "gates", gates)
        if self.params is not None:
            p = np.array(self.params, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "params", p)

    def probabilities(self, circuit: Circuit) -> dict[str, float]:
        return circuit_probability(self, circuit)

    def with_mcm(self, mcm: QuantumInstrument) -> GateSetModel:
        return replace(self, mcm=mcm, params=None)

    def gauge_transform(self, m: np.ndarray) -> GateSetModel:
        """``rho -> M rho``, ``E -> E M^-1``, ``G -> M G M^-1`` for every operation."""
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4) or abs(np.linalg.det(m)) < 1e-12:
            raise ValidationError("gauge transform must be an invertible 4x4 matrix")
        mi = np.linalg.inv(m)
        mcm = None if self.mcm is None else QuantumInstrument(tuple(m @ q @ mi for q in self.mcm.elements))
        return GateSetModel(
            m @ self.rho,
            self.povm @ mi,
            {k: m @ g @ mi for k, g in self.gates.items()},
            mcm,
            self.parameterization,
            self.stark_phi,
            None,
        )

    def distance(self, other: GateSetModel) -> float:
        """Summed squared Frobenius distance over all operations."""
        total = np.sum((self.rho - other.rho) ** 2) + np.sum((self.povm - other.povm) ** 2)
        total += sum(np.sum((self.gates[k] - other.gates[k]) ** 2) for k in self.gates)
        if self.mcm is not None and other.mcm is not None:
            total += sum(np.sum((a - b) ** 2) for a, b in zip(self.mcm.elements, other.mcm.elements))
        return float(total)

    def is_physical(self, tol: float = 1e-9) -> bool:
        rho_ok = np.linalg.eigvalsh(_devec(self.rho)).min() >= -tol
        povm_ok = all(np.linalg.eigvalsh(_devec(e)).min() >= -tol for e in self.povm)
        gates_ok = all(is_cp(g, tol) for g in self.gates.values())
        mcm_ok = self.mcm is None or (self.mcm.is_cp(tol) and self.mcm.is_tp(tol))
        return bool(rho_ok and povm_ok and gates_ok and mcm_ok)

    def to_json(self) -> dict:
        return {
            "parameterization": self.parameterization,
            "stark_phi": self.stark_phi,
            "params": None if self.params is None else self.params.tolist(),
            "rho": self.rho.tolist(),
            "povm": self.povm.tolist(),
            "gates": {k: ptm_to_json(self.gates[k]) for k in GATE_LABELS},
            "mcm": None if self.mcm is None else self.mcm.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> GateSetModel:
        try:
            return cls(
                np.array(obj["rho"], dtype=float),
                np.array(obj["povm"], dtype=float),
                {k: ptm_from_json(v) for k, v in obj["gates"].items()},
                None if obj.get("mcm") is None else QuantumInstrument.from_json(obj["mcm"]),
                obj.get("parameterization", "CPTP"),
                float(obj.get("stark_phi", 0.0)),
                obj.get("params"),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed gate-set JSON: {exc}") from None


def _devec(v: np.ndarray) -> np.ndarray:
    return np.einsum("k,kab->ab", v, pauli_basis(1))


def ideal_gateset() -> GateSetModel:
    """Targets: ``|0>`` preparation, Z-basis POVM, pi/2 rotations about X and Y, idle, ideal MCM."""
    return GateSetModel(
        _KET[0],
        np.vstack(_BRA),
        {"Gx": _rotation("X", math.pi / 2), "Gy": _rotation("Y", math.pi / 2), "Gi": np.eye(4)},
        QuantumInstrument((np.outer(_KET[0], _BRA[0]), np.outer(_KET[1], _BRA[1]))),
        "CPTP",
    )


def apply_stark(gs: GateSetModel, phi: float) -> GateSetModel:
    """Every gate after the MCM is followed by ``Rz(phi)`` when probabilities are computed."""
    if gs.mcm is None:
        raise ValidationError("Stark augmentation needs a model with an MCM")
    if not math.isfinite(phi):
        raise ValidationError("phi must be finite")
    tag = gs.parameterization if gs.parameterization.endswith("+Stark") else gs.parameterization + "+Stark"
    if tag not in MODEL_TAGS:
        tag = gs.parameterization
    return replace(gs, stark_phi=float(phi), parameterization=tag, params=None)


# ------------------------------------------------------------------ reduced instruments


@dataclass(frozen=True)
class UsiParams:
    """Bit-flip pattern probabilities ``q[a, b]`` (a: input flip, b: output flip)."""

    q: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in self.q)
        if len(q) != 4 or min(q) < 0 or abs(sum(q) - 1) > 1e-9:
            raise ValidationError("USI weights must be 4 nonnegative numbers summing to 1")
        object.__setattr__(self, "q", q)

    @property
    def matrix(self) -> np.ndarray:
        """``q[a, b]``; the flat order is (none, input flip, output flip, both)."""
        q = self.q
        return np.array([[q[0], q[2]], [q[1], q[3]]])


def usi_instrument(params: UsiParams | Sequence[float]) -> QuantumInstrument:
    qp = params if isinstance(params, UsiParams) else UsiParams(tuple(params))
    q = qp.matrix
    return QuantumInstrument(
        tuple(
            sum(q[a, b] * np.outer(_KET[c ^ b], _BRA[c ^ a]) for a in (0, 1) for b in (0, 1))
            for c in (0, 1)
        )
    )


@dataclass(frozen=True, eq=False)
class MprParams:
    post: np.ndarray
    pre: np.ndarray
    p: float

    def __post_init__(self) -> None:
        _check_prob(self.p, "readout flip")
        for m in (self.post, self.pre):
            if not (is_cp(m) and abs(m[0, 0] - 1) < 1e-9 and np.allclose(m[0, 1:], 0, atol=1e-9)):
                raise ValidationError("MPR maps must be CPTP")


def mpr_instrument(post: np.ndarray, pre: np.ndarray, p: float) -> QuantumInstrument:
    """``Q_c = A ((1-p)|c>><<c| + p|c+1>><<c+1|) B`` with ``A = post`` and ``B = pre``."""
    MprParams(np.asarray(post, float), np.asarray(pre, float), p)
    core = [(1 - p) * np.outer(_KET[c], _BRA[c]) + p * np.outer(_KET[1 - c], _BRA[1 - c]) for c in (0, 1)]
    return QuantumInstrument(tuple(post @ m @ pre for m in core))


# ------------------------------------------------------------------ Kraus blocks


def _basis(d: int) -> np.ndarray:
    return np.ones((1, 1, 1), dtype=complex) if d == 1 else pauli_basis(1)


def _vec_matrix(d: int) -> np.ndarray:
    b = _basis(d)
    return b.reshape(b.shape[0], -1).T  # columns are row-major vec(b_k)


@dataclass(frozen=True)
class KrausBlock:
    """``n_elements`` CP maps sharing one trace normalization.

    Each map has ``n_kraus`` operators of shape ``(dout, din)``; ``din == 1``
    describes a state, ``dout == 1`` the effects of a POVM.
    """

    n_elements: int
    n_kraus: int
    dout: int
    din: int

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_elements, self.n_kraus, self.dout, self.din)

    @property
    def size(self) -> int:
        return 2 * int(np.prod(self.shape))

    @property
    def free_dimension(self) -> int:
        """Real dimension of the image (all CP families with the shared normalization)."""
        return self.n_elements * self.dout**2 * self.din**2 - self.din**2

    def kraus(self, raw: np.ndarray) -> np.ndarray:
        half = self.size // 2
        return (raw[:half] + 1j * raw[half:]).reshape(self.shape)

    def forward(self, raw: np.ndarray):
        k = self.kraus(raw)
        s = np.einsum("ejab,ejac->bc", k.conj(), k)
        w, u = np.linalg.eigh(s)
        if w.min() <= 1e-300:
            raise ValidationError("Kraus family is degenerate (zero normalization)")
        r = np.sqrt(w)
        m = (u / r) @ u.conj().T
        kp = k @ m
        return self._ptms(kp), (k, kp, u, r, m)

    def _ptms(self, kp: np.ndarray) -> np.ndarray:
        e, _, do, di = self.shape
        sup = np.einsum("ejab,ejcd->eacbd", kp, kp.conj()).reshape(e, do * do, di * di)
        vo, vi = _vec_matrix(do), _vec_matrix(di)
        return np.einsum("ak,eab,bl->ekl", vo.conj(), sup, vi).real

    def backward(self, cache, grad: np.ndarray) -> np.ndarray:
        """Raw-parameter gradient given ``dL/dR`` for every element."""
        k, kp, u, r, m = cache
        bo, bi = _basis(self.dout), _basis(self.din)
        t = np.einsum("ekl,kab->elab", grad, bo)
        gp = 2 * np.einsum("elab,ejbc,lcd->ejad", t, kp, bi)
        gbar_m = np.einsum("ejab,ejac->bc", k.conj(), gp)
        inv = 1 / r
        wmat = -np.outer(inv, inv) / (r[:, None] + r[None, :])
        gbar_s = u @ (wmat * (u.conj().T @ gbar_m @ u)) @ u.conj().T
        herm = 0.5 * (gbar_s + gbar_s.conj().T)
        gk = gp @ m + 2 * k @ herm
        return np.concatenate([gk.real.ravel(), gk.imag.ravel()])

    def raw_from_ptms(self, ptms: Sequence[np.ndarray]) -> np.ndarray:
        """Exact raw parameters reproducing the given (normalized) elements."""
        e, nk, do, di = self.shape
        vo, vi = _vec_matrix(do), _vec_matrix(di)
        out = np.zeros(self.shape, dtype=complex)
        for idx, ptm in enumerate(ptms):
            ptm = np.asarray(ptm, dtype=float).reshape(do * do, di * di)
            sup = vo @ ptm @ vi.conj().T
            choi = sup.reshape(do, do, di, di).transpose(0, 2, 1, 3).reshape(do * di, do * di)
            w, v = np.linalg.eigh(0.5 * (choi + choi.conj().T))
            order = np.argsort(w)[::-1][:nk]
            for j, col in enumerate(order):
                if w[col] > 0:
                    out[idx, j] = math.sqrt(w[col]) * v[:, col].reshape(do, di)
        return np.concatenate([out.real.ravel(), out.imag.ravel()])


# ------------------------------------------------------------------ parameterizations


@dataclass
class OpSet:
    """Concrete operations used by the likelihood engine."""

    rho: np.ndarray
    povm: np.ndarray
    gates: dict[str, np.ndarray]
    mcm: tuple[np.ndarray, np.ndarray]
    stark_phi: float = 0.0

    @classmethod
    def from_model(cls, gs: GateSetModel) -> OpSet:
        if gs.mcm is None:
            raise ValidationError("model has no MCM")
        return cls(gs.rho, gs.povm, dict(gs.gates), (gs.mcm[0], gs.mcm[1]), gs.stark_phi)


@dataclass
class OpGrad:
    rho: np.ndarray = field(default_factory=lambda: np.zeros(4))
    povm: np.ndarray = field(default_factory=lambda: np.zeros((2, 4)))
    gates: dict[str, np.ndarray] = field(default_factory=lambda: {g: np.zeros((4, 4)) for g in GATE_LABELS})
    mcm: tuple[np.ndarray, np.ndarray] = field(default_factory=lambda: (np.zeros((4, 4)), np.zeros((4, 4))))
    stark_phi: float = 0.0


_STATE = KrausBlock(1, 2, 2, 1)
_POVM = KrausBlock(2, 2, 1, 2)
_GATE = KrausBlock(1, 4, 2, 2)
_INSTRUMENT = KrausBlock(2, 4, 2, 2)


class Parameterization:
    """Map from a raw real vector to a gate set for one model tag."""

    def __init__(self, tag: str):
        if tag not in MODEL_TAGS:
            raise ValidationError(f"unknown model tag {tag!r}; expected one of {MODEL_TAGS}")
        self.tag = tag
        self.base = tag.split("+")[0]
        self.stark = tag.endswith("+Stark")
        segs: list[tuple[str, object]] = [("rho", _STATE), ("povm", _POVM)]
        segs += [(g, _GATE) for g in GATE_LABELS]
        if self.base == "CPTP":
            segs.append(("mcm", _INSTRUMENT))
        elif self.base == "MPR":
            segs += [("sigma0", _STATE), ("sigma1", _STATE), ("mcm_povm", _POVM), ("flip", 1)]
        elif self.base == "USI":
            segs.append(("usi", 3))
        if self.stark:
            segs.append(("phi", 1))
        self.segments = segs
        self.slices: dict[str, slice] = {}
        pos = 0
        for name, blk in segs:
            n = blk.size if isinstance(blk, KrausBlock) else int(blk)
            self.slices[name] = slice(pos, pos + n)
            pos += n
        self.n_params = pos

    @property
    def k_model(self) -> int:
        return K_MODEL[self.tag]

    @property
    def free_dimension(self) -> int:
        """Dimension of the image manifold (gauge directions included)."""
        dim = 0
        for _, blk in self.segments:
            dim += blk.free_dimension if isinstance(blk, KrausBlock) else int(blk)
        return dim

    # -- forward / backward

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_params,):
            raise ValidationError(f"{self.tag} expects {self.n_params} parameters, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("parameters must be finite")
        cache: dict[str, object] = {}
        out: dict[str, np.ndarray] = {}
        for name, blk in self.segments:
            if isinstance(blk, KrausBlock):
                out[name], cache[name] = blk.forward(x[self.slices[name]])
        rho = out["rho"][0, :, 0]
        povm = out["povm"][:, 0, :]
        gates = {g: out[g][0] for g in GATE_LABELS}
        if self.base == "CPTP":
            mcm = (out["mcm"][0], out["mcm"][1])
        elif self.base == "MPR":
            s = (out["sigma0"][0, :, 0], out["sigma1"][0, :, 0])
            f = out["mcm_povm"][:, 0, :]
            y = x[self.slices["flip"]][0]
            p = math.sin(y) ** 2
            mcm = tuple((1 - p) * np.outer(s[c], f[c]) + p * np.outer(s[1 - c], f[1 - c]) for c in (0, 1))
            cache["mpr"] = (s, f, p, y)
        elif self.base == "USI":
            xs = x[self.slices["usi"]]
            w = np.concatenate([[1.0], xs**2])
            q = w / w.sum()
            mcm = _usi_elements(q)
            cache["usi"] = (xs, w, q)
        else:
            ideal = ideal_gateset().mcm
            mcm = (ideal[0], ideal[1])
        phi = float(x[self.slices["phi"]][0]) if self.stark else 0.0
        return OpSet(rho, povm, gates, mcm, phi), cache

    def backward(self, x: np.ndarray, cache, g: OpGrad) -> np.ndarray:
        dx = np.zeros(self.n_params)
        dx[self.slices["rho"]] = _STATE.backward(cache["rho"], g.rho.reshape(1, 4, 1))
        dx[self.slices["povm"]] = _POVM.backward(cache["povm"], g.povm.reshape(2, 1, 4))
        for name in GATE_LABELS:
            dx[self.slices[name]] = _GATE.backward(cache[name], g.gates[name][None])
        if self.base == "CPTP":
            dx[self.slices["mcm"]] = _INSTRUMENT.backward(cache["mcm"], np.stack(g.mcm))
        elif self.base == "MPR":
            s, f, p, y = cache["mpr"]
            dq = g.mcm
            ds = [np.zeros(4), np.zeros(4)]
            df = [np.zeros(4), np.zeros(4)]
            dp = 0.0
            for c in (0, 1):
                o = 1 - c
                ds[c] += (1 - p) * dq[c] @ f[c]
                df[c] += (1 - p) * dq[c].T @ s[c]
                ds[o] += p * dq[c] @ f[o]
                df[o] += p * dq[c].T @ s[o]
                dp += -s[c] @ dq[c] @ f[c] + s[o] @ dq[c] @ f[o]
            dx[self.slices["sigma0"]] = _STATE.backward(cache["sigma0"], ds[0].reshape(1, 4, 1))
            dx[self.slices["sigma1"]] = _STATE.backward(cache["sigma1"], ds[1].reshape(1, 4, 1))
            dx[self.slices["mcm_povm"]] = _POVM.backward(cache["mcm_povm"], np.stack(df).reshape(2, 1, 4))
            dx[self.slices["flip"]] = dp * math.sin(2 * y)
        elif self.base == "USI":
            xs, w, q = cache["usi"]
            dq = np.array([np.sum(g.mcm[0] * e0) + np.sum(g.mcm[1] * e1) for e0, e1 in _USI_PATTERNS])
            total = w.sum()
            dw = (dq - dq @ q) / total
            dx[self.slices["usi"]] = dw[1:] * 2 * xs
        if self.stark:
            dx[self.slices["phi"]] = g.stark_phi
        return dx

    # -- conveniences

    def instantiate(self, x: np.ndarray) -> GateSetModel:
        ops, _ = self.forward(x)
        return GateSetModel(
            ops.rho,
            ops.povm,
            ops.gates,
            QuantumInstrument(ops.mcm),
            self.tag,
            ops.stark_phi,
            np.asarray(x, dtype=float),
        )

    def initial_params(
        self, gs: GateSetModel | None = None, rng: np.random.Generator | None = None, jitter: float = 0.0
    ) -> np.ndarray:
        """Raw parameters reproducing ``gs`` (ideal targets by default), optionally jittered.

        Kraus operators that vanish at ``gs`` sit at a stationary point of the
        likelihood, so fits should start from a small nonzero ``jitter``.
        """
        gs = ideal_gateset() if gs is None else gs
        x = np.zeros(self.n_params)
        x[self.slices["rho"]] = _STATE.raw_from_ptms([gs.rho.reshape(4, 1)])
        x[self.slices["povm"]] = _POVM.raw_from_ptms([e.reshape(1, 4) for e in gs.povm])
        for g in GATE_LABELS:
            x[self.slices[g]] = _GATE.raw_from_ptms([gs.gates[g]])
        mcm = gs.mcm if gs.mcm is not None else ideal_gateset().mcm
        if self.base == "CPTP":
            x[self.slices["mcm"]] = _INSTRUMENT.raw_from_ptms(mcm.elements)
        elif self.base == "MPR":
            for c in (0, 1):
                out = mcm[c] @ _KET[c]
                out = out / (_SQRT2 * out[0]) if out[0] > 1e-12 else _KET[c]
                x[self.slices[f"sigma{c}"]] = _STATE.raw_from_ptms([out.reshape(4, 1)])
            effects = [_SQRT2 * q[0] for q in mcm.elements]
            x[self.slices["mcm_povm"]] = _POVM.raw_from_ptms([e.reshape(1, 4) for e in effects])
            flip = float(np.clip(1 - _SQRT2 * (mcm[0] @ _KET[0])[0], 1e-4, 0.5))
            x[self.slices["flip"]] = math.asin(math.sqrt(flip))
        elif self.base == "USI":
            x[self.slices["usi"]] = 0.02
        if self.stark:
            x[self.slices["phi"]] = gs.stark_phi
        if jitter:
            rng = np.random.default_rng() if rng is None else rng
            x = x + jitter * rng.standard_normal(self.n_params)
        return x


def _usi_patterns():
    pats = []
    for b in (0, 1):
        for a in (0, 1):
            pats.append(tuple(np.outer(_KET[c ^ b], _BRA[c ^ a]) for c in (0, 1)))
    # flat order: (a,b) = (0,0), (1,0), (0,1), (1,1)
    return pats


_USI_PATTERNS = _usi_patterns()


def _usi_elements(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return tuple(sum(qi * pat[c] for qi, pat in zip(q, _USI_PATTERNS)) for c in (0, 1))


# ------------------------------------------------------------------ truth models


@dataclass(frozen=True)
class TruthModelConfig:
    t1_pre: float = 0.0
    t1_post: float = 0.0
    thermal_up: float = 0.0
    readout_flip: float = 0.0
    weakness_angle: float = 0.0
    stark_phi: float = 0.0
    gate_depol: float = 0.0
    idle_damping: float = 0.0
    prep_error: float = 0.0
    meas_error: float = 0.0
    mcm_depol: float = 0.0
    post_z_angle: float = 0.0

    def __post_init__(self) -> None:
        for name in ("t1_pre", "t1_post", "thermal_up", "readout_flip", "gate_depol",
                     "idle_damping", "prep_error", "meas_error", "mcm_depol"):  # fmt: skip
            _check_prob(float(getattr(self, name)), name)
        for name in ("weakness_angle", "stark_phi", "post_z_angle"):
            v = float(getattr(self, name))
            if not (-math.pi < v <= math.pi):
                raise ValidationError(f"{name} must lie in (-pi, pi], got {v}")

    @classmethod
    def from_json(cls, obj: Mapping) -> TruthModelConfig:
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown truth-model fields {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in obj.items()})
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad truth-model value: {exc}") from None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _weak_core(theta: float) -> QuantumInstrument:
    zy = np.kron(pauli_matrix("Z"), pauli_matrix("Y"))
    u = math.cos(theta / 2) * np.eye(4) - 1j * math.sin(theta / 2) * zy
    return crunch(ptm_from_unitary(u))


def build_truth_model(cfg: TruthModelConfig) -> GateSetModel:
    """Phenomenological dispersive-readout gate set.

    MCM: pre-measurement damping, then the crunched weak-measurement gadget
    with a pure readout flip, then post-measurement damping, thermal
    excitation and a Z rotation.  ``mcm_depol`` mixes each element with
    ``rho -> Tr(rho) I/4``.
    """
    core = _weak_core(cfg.weakness_angle)
    f = cfg.readout_flip
    flipped = ((1 - f) * core[0] + f * core[1], (1 - f) * core[1] + f * core[0])
    pre = amplitude_damping_ptm(cfg.t1_pre)
    post = rz_ptm(cfg.post_z_angle) @ excitation_ptm(cfg.thermal_up) @ amplitude_damping_ptm(cfg.t1_post)
    elems = [post @ q @ pre for q in flipped]
    if cfg.mcm_depol:
        mix = ptm_from_superop(lambda r: np.trace(r) * np.eye(2) / 4, 1)
        elems = [(1 - cfg.mcm_depol) * q + cfg.mcm_depol * mix for q in elems]
    mcm = QuantumInstrument(tuple(elems))
    if not (mcm.is_cp(1e-9) and mcm.is_tp(1e-9)):
        raise ValidationError("truth-model instrument is not CPTP")
    ideal = ideal_gateset()
    dep = depolarizing_ptm(cfg.gate_depol)
    gates = {
        "Gx": dep @ ideal.gates["Gx"],
        "Gy": dep @ ideal.gates["Gy"],
        "Gi": amplitude_damping_ptm(cfg.idle_damping) @ dep,
    }
    e = cfg.prep_error
    rho = (1 - e) * _KET[0] + e * _KET[1]
    m = cfg.meas_error
    povm = np.vstack([(1 - m) * _BRA[0] + m * _BRA[1], m * _BRA[0] + (1 - m) * _BRA[1]])
    tag = "CPTP+Stark" if cfg.stark_phi else "CPTP"
    return GateSetModel(rho, povm, gates, mcm, tag, float(cfg.stark_phi))


# ------------------------------------------------------------------ presets

DEVICE_CONSTANTS = {
    "chi01_over_2pi_hz": -0.260e6,
    "kappa_over_2pi_hz": 0.160e6,
    "t1_s": 90e-6,
    "t_meas_s": 2.3e-6,
    "t_delay_s": 2.0e-6,
    "t_gate_s": 30e-9,
}


def predicted_stark_phase(v_ratio: float) -> float:
    """Residual-photon phase on post-MCM gates, ``n chi t_gate / 2`` with ``n = (V/V0)^2``."""
    c = DEVICE_CONSTANTS
    chi_t = abs(2 * math.pi * c["chi01_over_2pi_hz"]) * c["t_gate_s"]
    return round(chi_t, 2) / 2 * v_ratio**2


def preset_from_amplitude(v_ratio: float, nbar_nominal: float = 1.0, snr_nominal: float = 6.0) -> TruthModelConfig:
    """Plausible truth parameters at readout amplitude ``V = v_ratio * V0``.

    Damping follows from T1 over the measurement window; residual coherence
    decays with the measurement-induced dephasing rate of a symmetric
    dispersive probe; pure readout error follows Gaussian overlap of clouds
    whose separation grows linearly with amplitude.  ``nbar_nominal`` and
    ``snr_nominal`` are illustrative, not device data.
    """
    if v_ratio < 0:
        raise ValidationError("amplitude ratio must be nonnegative")
    c = DEVICE_CONSTANTS
    t1_pre = 1 - math.exp(-c["t_meas_s"] / 2 / c["t1_s"])
    t1_post = 1 - math.exp(-(c["t_meas_s"] / 2 + c["t_delay_s"]) / c["t1_s"])
    chi = abs(math.pi * c["chi01_over_2pi_hz"])
    kappa = 2 * math.pi * c["kappa_over_2pi_hz"]
    nbar = nbar_nominal * v_ratio**2
    gamma_m = 2 * nbar * kappa * chi**2 / (kappa**2 / 4 + chi**2)
    coherence = math.exp(-gamma_m * c["t_meas_s"])
    snr = snr_nominal * v_ratio
    flip = 0.5 * math.erfc(snr / 2 / _SQRT2)
    return TruthModelConfig(
        t1_pre=t1_pre,
        t1_post=t1_post,
        readout_flip=min(flip, 0.5),
        weakness_angle=math.asin(min(coherence, 1.0)),
        stark_phi=predicted_stark_phase(v_ratio),
    )
