import numpy as np
import pytest
import scipy.linalg

from mcmtomo.error_generators import EegIndex, all_eeg_indices, eeg_matrix
from mcmtomo.mcm_gadget import (
    InstrumentDeviation,
    crunch,
    crunch_linear,
    deviation_map,
    exp_deviation,
    first_order_deviation,
    ideal_instrument,
    zero_deviation_indices,
)
from mcmtomo.pauli_algebra import ValidationError, ptm_from_kraus

from conftest import random_density


def test_identity_crunches_to_ideal_measurement():
    q = ideal_instrument()
    np.testing.assert_allclose(q[0], ptm_from_kraus([np.diag([1.0, 0.0])]), atol=1e-14)
    np.testing.assert_allclose(q[1], ptm_from_kraus([np.diag([0.0, 1.0])]), atol=1e-14)
    assert q.is_tp() and q.is_cp()


def test_crunch_shape_check():
    with pytest.raises(ValidationError):
        crunch(np.eye(4))


def test_equivalent_stochastic_errors():
    a = exp_deviation(0.01 * eeg_matrix(EegIndex("S", "IX")))
    b = exp_deviation(0.01 * eeg_matrix(EegIndex("S", "IY")))
    np.testing.assert_array_equal(a.vector, b.vector)
    c = exp_deviation(0.01 * eeg_matrix(EegIndex("H", "ZY")))
    assert np.abs(a.vector - c.vector).max() > 1e-3


def test_read_stochastic_unit_action(rng):
    dev = first_order_deviation(EegIndex("S", "IX"))
    rho = random_density(rng, 2)
    a, b = rho[0, 0], rho[1, 1]
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    d0, d1 = dev.apply(rho)
    np.testing.assert_allclose(d0, -a * p0 + b * p1, atol=1e-12)
    np.testing.assert_allclose(d1, a * p0 - b * p1, atol=1e-12)


def test_zero_deviations_are_classified():
    zeros = zero_deviation_indices()
    assert EegIndex("S", "IZ") in zeros and EegIndex("H", "ZZ") in zeros
    assert EegIndex("S", "IX") not in zeros
    for idx in zeros:
        assert np.abs(crunch_linear(eeg_matrix(idx))[0]).max() == 0


def test_first_order_consistency_all_generators():
    eps = 1e-3
    q = ideal_instrument()
    for idx in all_eeg_indices(2):
        full = crunch(scipy.linalg.expm(eps * eeg_matrix(idx)))
        lin = first_order_deviation(idx)
        err = np.sqrt(sum(np.linalg.norm(full[c] - q[c] - eps * lin[c]) ** 2 for c in (0, 1)))
        assert err <= 10 * eps**2, idx


def test_deviation_map_matches_crunch(rng):
    g = rng.normal(size=(16, 16))
    v = deviation_map() @ g.ravel()
    a, b = crunch_linear(g)
    np.testing.assert_allclose(v, np.concatenate([a.ravel(), b.ravel()]), atol=1e-12)


def test_linearity(rng):
    idx = all_eeg_indices(2)
    i, j = rng.choice(len(idx), 2, replace=False)
    al, be = rng.normal(size=2)
    lhs = InstrumentDeviation(crunch_linear(al * eeg_matrix(idx[i]) + be * eeg_matrix(idx[j])))
    rhs = first_order_deviation(idx[i]) * al + first_order_deviation(idx[j]) * be
    np.testing.assert_allclose(lhs.vector, rhs.vector, atol=1e-13)


def test_span_rank_and_trace_directions():
    dev = np.array([first_order_deviation(idx).vector for idx in all_eeg_indices(2)])
    assert np.linalg.matrix_rank(dev) == 28
    for row in dev:
        d = InstrumentDeviation.from_vector(row)
        assert np.abs(d[0][0] + d[1][0]).max() < 1e-13


def test_hzy_corner_scaling():
    corners = []
    for h in (0.05, 0.1, 0.2):
        d = exp_deviation(h * eeg_matrix(EegIndex("H", "ZY")))
        corners.append(abs(d[0][0, 3]))
    ratios = [corners[1] / corners[0], corners[2] / corners[1]]
    for r in ratios:
        assert r == pytest.approx(4.0, rel=0.1)


def test_deviation_csv_layout():
    text = first_order_deviation(EegIndex("S", "IX")).to_csv().splitlines()
    assert text[0] == "outcome,row,I,X,Y,Z"
    assert len(text) == 9
