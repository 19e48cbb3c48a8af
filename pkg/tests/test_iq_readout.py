import math

import numpy as np
import pytest
from scipy.stats import norm

from mcmtomo.experiments import design_circuits
from mcmtomo.iq_readout import (
    LEAKED,
    Classifier,
    ClassifierError,
    IqConfig,
    calibration_points,
    counts_from_iq,
    postselect,
    simulate_iq,
    train_classifier,
)
from mcmtomo.models import TruthModelConfig, build_truth_model, ideal_gateset
from mcmtomo.pauli_algebra import Circuit, ValidationError

GS = build_truth_model(TruthModelConfig(t1_pre=0.01, t1_post=0.01, readout_flip=0.005))


@pytest.fixture(scope="module")
def leaky():
    iq = simulate_iq(GS, design_circuits(), IqConfig(leak_prob=0.05), shots=4000, seed=1)
    pts, prep = calibration_points(iq)
    return iq, train_classifier(pts, 3, prep), train_classifier(pts, 2, prep)


def test_no_leakage_without_leak_probability():
    iq = simulate_iq(GS, design_circuits()[:80], IqConfig(), shots=500, seed=0)
    for m, t in zip(iq.latent_mcm, iq.latent_terminal):
        assert LEAKED not in set(t)
        if m is not None:
            assert LEAKED not in set(m)


def test_well_separated_clouds_classify_perfectly():
    cfg = IqConfig(centroids={"0": (-5.0, 0.0), "1": (5.0, 0.0), LEAKED: (0.0, 5.0)}, sigma=1.0)
    iq = simulate_iq(ideal_gateset(), [Circuit.of(), Circuit.of("Gx", "Gx")], cfg, 50000, 2)
    clf = Classifier({k: np.array(v) for k, v in cfg.centroids.items() if k != LEAKED})
    for pts, lat in zip(iq.terminal_points, iq.latent_terminal):
        assert np.mean(clf.assign(pts) != lat) < 1e-6


def test_overlapping_clouds_match_gaussian_error():
    # centroids one sigma apart: a shot crosses the midline with probability Phi(-1/2)
    cfg = IqConfig(centroids={"0": (-0.5, 0.0), "1": (0.5, 0.0), LEAKED: (0.0, 3.0)}, sigma=1.0)
    n = 40000
    iq = simulate_iq(ideal_gateset(), [Circuit.of()], cfg, n, 3)
    clf = Classifier({"0": np.array([-0.5, 0.0]), "1": np.array([0.5, 0.0])})
    rate = np.mean(clf.assign(iq.terminal_points[0]) == "1")
    p = norm.cdf(-0.5)
    assert abs(rate - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_trained_centroids(leaky):
    _, c3, c2 = leaky
    cfg = IqConfig()
    assert c3.labels == ("0", "1", LEAKED)
    for k in c3.labels:
        assert np.linalg.norm(c3.centroids[k] - np.array(cfg.centroids[k])) < 0.02
    assert np.linalg.norm(c2.centroids["0"] - np.array(cfg.centroids["0"])) < 0.1


def test_midway_third_cluster_is_leaked():
    rng = np.random.default_rng(4)
    a = rng.normal([-1, 0], 0.1, (4000, 2))
    b = rng.normal([1, 0], 0.1, (4000, 2))
    c = rng.normal([0, 0.6], 0.1, (600, 2))
    pts = np.vstack([a, b, c])
    prep = np.array(["0"] * 4000 + ["1"] * 4000 + [None] * 600, dtype=object)
    clf = train_classifier(pts, 3, prep)
    np.testing.assert_allclose(clf.centroids[LEAKED], [0, 0.6], atol=0.02)


def test_degenerate_training_data():
    pts = np.tile([[0.0, 0.0], [1.0, 0.0]], (50, 1))
    prep = np.array(["0", "1"] * 50, dtype=object)
    with pytest.raises(ClassifierError):
        train_classifier(pts, 3, prep)
    with pytest.raises(ValidationError):
        train_classifier(pts[:10], 2, prep[:10])
    with pytest.raises(ValidationError):
        train_classifier(pts, 2, np.array(["0"] * 100, dtype=object))


def test_zero_leak_removal_is_false_positive_rate():
    iq = simulate_iq(GS, design_circuits(), IqConfig(), shots=1000, seed=6)
    clf = Classifier({k: np.array(v) for k, v in IqConfig().centroids.items()})
    _, stats = postselect(iq, clf)
    # clouds are about four widths from the leaked centroid's decision boundary
    assert stats.aggregate_fraction < 1e-3


def test_leak_removal_rate(leaky):
    iq, c3, _ = leaky
    _, stats = postselect(iq, c3)
    one = [i for i, c in enumerate(iq.circuits) if c.has_mcm and c.body[: c.body.index("Mcm")] == ("Gx", "Gx")]
    removed = sum(stats.removed[i] for i in one)
    n = len(one) * iq.shots_per_circuit
    # |1> reaching the MCM leaks with probability leak_prob times its excited population
    p = 0.05 * (1 - 0.01)
    assert abs(removed / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_postselection_only_removes(leaky):
    iq, c3, c2 = leaky
    raw = counts_from_iq(iq, c2)
    kept, stats = postselect(iq, c3)
    for a, b in zip(raw.totals, kept.totals):
        assert b <= a == iq.shots_per_circuit
    assert stats.mcm_leaked_after <= 0.1 * stats.mcm_leaked_before
    assert stats.total_removed == int(sum(raw.totals) - sum(kept.totals))


def test_postselect_needs_three_outcomes(leaky):
    iq, _, c2 = leaky
    with pytest.raises(ValidationError):
        postselect(iq, c2)


def test_serialization(leaky):
    iq, c3, _ = leaky
    again = Classifier.from_json(c3.to_json())
    assert again.labels == c3.labels
    for k in c3.labels:
        np.testing.assert_array_equal(again.centroids[k], c3.centroids[k])
    cfg = IqConfig(sigma={"0": 0.1, "1": 0.2, LEAKED: 0.3}, leak_prob=0.02, seepage=0.1)
    assert IqConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValidationError):
        IqConfig(leak_prob=1.5)
    with pytest.raises(ValidationError):
        IqConfig.from_json({"width": 1})
    small = simulate_iq(GS, [Circuit.of("Mcm"), Circuit.of("Gx")], IqConfig(), 3, 0)
    lines = small.to_csv().splitlines()
    assert lines[0] == "circuit_id,shot_index,stage,I,Q"
    assert len(lines) == 1 + 3 * 2 + 3


def test_simulation_is_reproducible():
    a = simulate_iq(GS, design_circuits()[:40], IqConfig(leak_prob=0.1), 200, 8)
    b = simulate_iq(GS, design_circuits()[:40], IqConfig(leak_prob=0.1), 200, 8)
    assert a.to_csv() == b.to_csv()
