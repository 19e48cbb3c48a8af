import math

import numpy as np
import pytest

from mcmtomo import engine
from mcmtomo.experiments import CircuitDataset, design_circuits, sample_dataset
from mcmtomo.inference import (
    comparison_csv,
    decompose,
    evidence_ratio,
    fit,
    gauge_align,
    model_logl,
    n_sigma,
    saturated_logl,
)
from mcmtomo.models import OpSet, TruthModelConfig, build_truth_model, ideal_gateset
from mcmtomo.pauli_algebra import Circuit, ValidationError

TRUTH = TruthModelConfig(t1_pre=0.02, t1_post=0.01, readout_flip=0.01, gate_depol=0.003, mcm_depol=0.004)


@pytest.fixture(scope="module")
def data():
    return sample_dataset(build_truth_model(TRUTH), design_circuits(), 20000, 5)


@pytest.fixture(scope="module")
def fits(data):
    return {tag: fit(data, tag, starts=1) for tag in ("CPTP", "MPR", "USI")}


def test_saturated_logl_examples():
    ds = CircuitDataset((Circuit.of("Gx"),), ({"0": 50, "1": 50},), 100)
    assert saturated_logl(ds) == pytest.approx(100 * math.log(0.5))
    ds = CircuitDataset((Circuit.of("Gx"),), ({"0": 100},), 100)
    assert saturated_logl(ds) == 0.0


def test_n_sigma_and_evidence_ratio():
    assert n_sigma(200.0, 200) == 0.0
    assert n_sigma(141 + 2 * math.sqrt(2 * 141), 141) == pytest.approx(2.0)
    assert evidence_ratio((150.0, 59), (200.0, 42)) == pytest.approx(50 / 17)
    with pytest.raises(ValidationError):
        evidence_ratio((150.0, 42), (200.0, 59))
    with pytest.raises(ValidationError):
        n_sigma(10.0, 0)


def test_perfect_frequencies_give_zero_deviance():
    gs = build_truth_model(TRUTH)
    circuits = design_circuits()
    probs = engine.circuit_probabilities(OpSet.from_model(gs), engine.compile_circuits(circuits))
    n = 10**6
    counts = tuple({o: round(n * p[o]) for o in c.outcomes} for c, p in zip(circuits, probs))
    ds = CircuitDataset(tuple(circuits), counts, n)
    # rounding to integers leaves a tiny deviance
    assert 2 * (saturated_logl(ds) - model_logl(gs, ds)) < 1e-2


def test_cptp_fit_recovers_truth(data, fits):
    rep = fits["CPTP"]
    assert rep.converged
    assert rep.k_model == 59 and rep.k_sat == 200
    truth = build_truth_model(TRUTH)
    aligned = gauge_align(rep.model, truth)
    assert math.sqrt(aligned.distance(truth)) < 0.03
    # truth is in the model: the deviance is chi-square like
    assert abs(rep.n_sigma) < 4


def test_nesting(fits):
    assert fits["CPTP"].loglikelihood >= fits["MPR"].loglikelihood - 1e-6
    assert fits["CPTP"].loglikelihood >= fits["USI"].loglikelihood - 1e-6


def test_likelihood_is_gauge_invariant(data, fits):
    gs = fits["CPTP"].model
    m = np.eye(4)
    m[1:] += 0.03 * np.random.default_rng(0).normal(size=(3, 4))
    assert model_logl(gs.gauge_transform(m), data) == pytest.approx(model_logl(gs, data), abs=1e-7)
    assert model_logl(gs, data) == pytest.approx(fits["CPTP"].loglikelihood, abs=1e-6)


def test_gauge_align_recovers_planted_gauge():
    truth = build_truth_model(TRUTH)
    m = np.eye(4)
    m[1:] += 0.05 * np.random.default_rng(2).normal(size=(3, 4))
    aligned = gauge_align(truth.gauge_transform(m), truth)
    assert aligned.distance(truth) < 1e-16


def test_decompose_truth_reference():
    gs = build_truth_model(TruthModelConfig(t1_pre=0.02))
    assert decompose(gs, align=False).composites["pre_mcm_t1"] == pytest.approx(0.02, abs=1e-12)
    # aligning to the ideal targets moves weight between pre and post damping but keeps the total
    aligned = decompose(gs)
    assert aligned.composites["total_t1"] == pytest.approx(0.02, abs=1e-4)


def test_comparison_csv(fits):
    text = comparison_csv(list(fits.values()))
    lines = text.splitlines()
    assert lines[0] == "model,params,two_delta_logl,n_sigma,gamma"
    assert [l.split(",")[0] for l in lines[1:]] == ["CPTP", "MPR", "USI"]
    assert lines[1].split(",")[-1] == ""
    g = float(lines[2].split(",")[-1])
    assert g == pytest.approx(evidence_ratio(fits["CPTP"], fits["MPR"]), rel=1e-5)


def test_fit_validation(data):
    with pytest.raises(ValidationError):
        fit(data, "Lindblad")
    with pytest.raises(ValidationError):
        fit(data, "CPTP", starts=0)


def test_fit_report_json(fits):
    obj = fits["USI"].to_json()
    assert obj["k_model"] == 34 and obj["model"]["parameterization"] == "USI"
    assert set(obj["optimizer"]) >= {"converged", "iterations", "gradient_norm"}


def test_ideal_data_fit_stays_near_targets():
    ds = sample_dataset(ideal_gateset(), design_circuits(), 10**5, 1)
    rep = fit(ds, "MPR", starts=1)
    assert math.sqrt(gauge_align(rep.model, ideal_gateset()).distance(ideal_gateset())) < 0.02


def test_large_shot_fit_converges():
    # the deviance is summed term by term; differencing two ~1e7 log-likelihoods stalls the line search
    gs = build_truth_model(TruthModelConfig(t1_pre=0.02, t1_post=0.01, readout_flip=0.005))
    ds = sample_dataset(gs, design_circuits(), 100_000, 6)
    rep = fit(ds, "CPTP", starts=1, seed=6)
    assert rep.converged, rep.message
    assert rep.loglikelihood == pytest.approx(model_logl(rep.model, ds), abs=1e-4)
