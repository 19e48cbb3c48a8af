"""Maximum-likelihood fits, gauge alignment, and model-selection statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.optimize

from . import engine
from .experiments import CircuitDataset, sample_dataset
from .fomgi import ErrorStrengthReport, extract
from .mcm_gadget import InstrumentDeviation
from .models import MODEL_TAGS, GateSetModel, OpSet, Parameterization, ideal_gateset
from .pauli_algebra import ValidationError

__all__ = [
    "FitReport",
    "fit",
    "saturated_logl",
    "model_logl",
    "n_sigma",
    "evidence_ratio",
    "gauge_align",
    "decompose",
    "bootstrap_decomposition",
    "comparison_csv",
    "DEFAULT_STARTS",
]

DEFAULT_STARTS = 5
DEFAULT_PERTURBATION = 0.01


@dataclass(frozen=True, eq=False)
class FitReport:
    model_tag: str
    model: GateSetModel
    loglikelihood: float
    two_delta_logl: float
    k_model: int
    k_sat: int
    n_sigma: float
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""
    start_logls: tuple[float, ...] = ()
    gammas: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "loglikelihood": self.loglikelihood,
            "two_delta_logl": self.two_delta_logl,
            "k_model": self.k_model,
            "k_sat": self.k_sat,
            "n_sigma": self.n_sigma,
            "gammas": dict(self.gammas),
            "optimizer": {
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "message": self.message,
                "start_logls": list(self.start_logls),
            },
            "model": self.model.to_json(),
        }


# ------------------------------------------------------------------ statistics


def saturated_logl(dataset: CircuitDataset) -> float:
    """``sum n log f`` over observed frequencies, with ``0 log 0 = 0``."""
    total = 0.0
    for c in dataset.counts:
        n = np.array([v for v in c.values() if v > 0], dtype=float)
        if n.size:
            total += float(np.sum(n * np.log(n / n.sum())))
    return total


def model_logl(gs: GateSetModel, dataset: CircuitDataset) -> float:
    cc = engine.compile_circuits(dataset.circuits)
    return engine.loglikelihood(OpSet.from_model(gs), cc, engine.row_counts(cc, dataset.counts))


def n_sigma(two_delta_logl: float, k: int) -> float:
    """``(2 Delta logL - k) / sqrt(2k)``."""
    if k <= 0:
        raise ValidationError("degrees of freedom must be positive")
    return (two_delta_logl - k) / math.sqrt(2 * k)


def evidence_ratio(larger: FitReport | tuple[float, int], reduced: FitReport | tuple[float, int]) -> float:
    """Per-parameter log-likelihood gain ``2 (logL_A - logL_B) / (k_A - k_B)``.

    Arguments are fit reports or ``(two_delta_logl, k_model)`` pairs; with the
    latter the gain is ``(2DlogL_B - 2DlogL_A) / (k_A - k_B)``.  AIC prefers
    the reduced model when the result is below 2.
    """
    ta, ka = _stat_pair(larger)
    tb, kb = _stat_pair(reduced)
    if ka == kb:
        raise ValidationError("models have equal parameter counts")
    if ka < kb:
        raise ValidationError("first argument must be the larger model")
    return (tb - ta) / (ka - kb)


def _stat_pair(x) -> tuple[float, int]:
    if isinstance(x, FitReport):
        return x.two_delta_logl, x.k_model
    t, k = x
    return float(t), int(k)


# ------------------------------------------------------------------ fitting


class _Objective:
    """Half the deviance ``logL_sat - logL`` and its gradient."""

    def __init__(self, param: Parameterization, cc: engine.CompiledCircuits, n: np.ndarray):
        self.param, self.cc, self.n = param, cc, n
        totals = _row_totals(cc, n)
        self.freqs = np.divide(n, totals[:, None], out=np.zeros_like(n), where=totals[:, None] > 0)

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        ops, cache = self.param.forward(x)
        rel, g = engine.loglikelihood(ops, self.cc, self.n, grad=True, freqs=self.freqs)
        dx = self.param.backward(x, cache, g)
        return -rel, -dx


def _row_totals(cc: engine.CompiledCircuits, n: np.ndarray) -> np.ndarray:
    """Shots of the circuit owning each row (MCM circuits span two rows)."""
    per_circuit = np.bincount(cc.row_circuit, weights=n.sum(axis=1), minlength=len(cc.circuits))
    return per_circuit[cc.row_circuit]


def fit(
    dataset: CircuitDataset,
    model_tag: str,
    *,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    perturbation: float = DEFAULT_PERTURBATION,
    init: GateSetModel | None = None,
    maxiter: int = 5000,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
) -> FitReport:
    """Multi-start L-BFGS maximum likelihood.

    Start 0 is seeded at ``init`` (ideal targets by default) with a tiny
    perturbation so that absent Kraus operators can grow; the remaining starts
    add Gaussian noise of scale ``perturbation`` in raw parameter space.
    """
    if model_tag not in MODEL_TAGS:
        raise ValidationError(f"unknown model tag {model_tag!r}")
    if len(dataset) == 0:
        raise ValidationError("empty dataset")
    if starts < 1:
        raise ValidationError("need at least one start")
    param = Parameterization(model_tag)
    cc = engine.compile_circuits(dataset.circuits)
    n = engine.row_counts(cc, dataset.counts)
    sat = saturated_logl(dataset)
    obj = _Objective(param, cc, n)
    rng = np.random.default_rng(seed)
    best = None
    start_vals = []
    for s in range(starts):
        scale = 1e-3 if s == 0 else perturbation
        x0 = param.initial_params(init, rng=rng, jitter=scale)
        res = scipy.optimize.minimize(
            obj, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": maxiter, "maxfun": 2 * maxiter, "gtol": gtol, "ftol": ftol, "maxcor": 30},
        )  # fmt: skip
        start_vals.append(float(sat - res.fun))
        if best is None or res.fun < best.fun:
            best = res
    _, grad = obj(best.x)
    gnorm = float(np.linalg.norm(grad))
    converged = bool(best.success) or gnorm < gtol
    two_dl = float(2 * best.fun)
    k = dataset.k_sat - param.k_model
    return FitReport(
        model_tag,
        param.instantiate(best.x),
        float(sat - best.fun),
        two_dl,
        param.k_model,
        dataset.k_sat,
        n_sigma(two_dl, k) if k > 0 else float("nan"),
        converged,
        int(best.nit),
        gnorm,
        str(best.message),
        tuple(start_vals),
    )


# ------------------------------------------------------------------ gauge


def _tp_gauge(theta: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[1:] += theta.reshape(3, 4)
    return m


def _flat_ops(gs: GateSetModel) -> np.ndarray:
    parts = [gs.rho, gs.povm.ravel(), *(gs.gates[k].ravel() for k in sorted(gs.gates))]
    if gs.mcm is not None:
        parts += [q.ravel() for q in gs.mcm.elements]
    return np.concatenate(parts)


def gauge_align(fitted: GateSetModel, target: GateSetModel, tol: float = 1e-12) -> GateSetModel:
    """Trace-preserving gauge transform of ``fitted`` closest (Frobenius) to ``target``."""
    goal = _flat_ops(target)

    def resid(theta):
        return _flat_ops(fitted.gauge_transform(_tp_gauge(theta))) - goal

    res = scipy.optimize.least_squares(resid, np.zeros(12), xtol=tol, ftol=tol, gtol=tol, method="lm")
    m = _tp_gauge(res.x)
    if abs(np.linalg.det(m)) < 1e-8:
        raise ValidationError("gauge alignment produced a singular transform")
    aligned = fitted.gauge_transform(m)
    return GateSetModel(
        aligned.rho, aligned.povm, aligned.gates, aligned.mcm,
        fitted.parameterization, fitted.stark_phi, None,
    )  # fmt: skip


# ------------------------------------------------------------------ decomposition


def decompose(model: GateSetModel, target: GateSetModel | None = None, align: bool = True) -> ErrorStrengthReport:
    """FOMGI strengths of a model's MCM relative to the ideal instrument."""
    target = ideal_gateset() if target is None else target
    gs = gauge_align(model, target) if align else model
    dq = InstrumentDeviation.between(gs.mcm, target.mcm)
    report = extract(dq)
    extra = {"idle_t1": float(gs.gates["Gi"][3, 0] / math.sqrt(1.0)) if "Gi" in gs.gates else 0.0}
    if gs.stark_phi:
        extra["stark_phi"] = float(gs.stark_phi)
    return ErrorStrengthReport(
        report.strengths, report.composites, None, report.tp_residual, report.reconstruction_residual, extra
    )


def bootstrap_decomposition(
    report: FitReport,
    circuits: Sequence | None = None,
    shots: int | None = None,
    n_resamples: int = 100,
    seed: int = 0,
    starts: int = 1,
    target: GateSetModel | None = None,
) -> ErrorStrengthReport:
    """Parametric bootstrap: resample from the fitted model, refit, decompose.

    Refits start at the fitted model.  The returned report carries the
    point estimate of ``report`` with standard deviations over resamples.
    """
    if n_resamples < 2:
        raise ValidationError("bootstrap needs at least two resamples")
    if circuits is None or shots is None:
        raise ValidationError("bootstrap needs the circuit list and shot count of the original data")
    point = decompose(report.model, target)
    seeds = np.random.SeedSequence(seed).spawn(n_resamples)
    samples = []
    for ss in seeds:
        s = int(ss.generate_state(1)[0])
        data = sample_dataset(report.model, circuits, shots, s)
        refit = fit(data, report.model_tag, starts=starts, seed=s, init=report.model)
        samples.append(decompose(refit.model, target))
    return point.with_uncertainties(samples)


# ------------------------------------------------------------------ tables


def comparison_csv(fits: Sequence[FitReport], reference: str | None = None) -> str:
    """Rows ``model, params, two_delta_logl, n_sigma, gamma`` (gamma against ``reference``)."""
    by_tag = {f.model_tag: f for f in fits}
    if reference is None:
        reference = max(fits, key=lambda f: f.k_model).model_tag
    ref = by_tag.get(reference)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "params", "two_delta_logl", "n_sigma", "gamma"])
    for f in sorted(fits, key=lambda f: -f.k_model):
        gamma = ""
        if ref is not None and f.model_tag != reference and f.k_model < ref.k_model:
            gamma = f"{evidence_ratio(ref, f):.6g}"
        w.writerow([f.model_tag, f.k_model, f"{f.two_delta_logl:.6g}", f"{f.n_sigma:.6g}", gamma])
    return buf.getvalue()


def gammas_against(fits: Mapping[str, FitReport], reference: str) -> dict[str, float]:
    ref = fits[reference]
    return {tag: evidence_ratio(ref, f) for tag, f in fits.items() if f.k_model < ref.k_model}
