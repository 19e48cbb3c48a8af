import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcmtomo.error_generators import EegIndex, all_eeg_indices, eeg_matrix
from mcmtomo.fomgi import (
    COMPOSITE_NAMES,
    LABELS,
    SECTOR_OF,
    ErrorStrengthReport,
    basis,
    build_basis,
    classify,
    compare_with_reference,
    composites,
    deviation_from_qvector,
    elementary_deviation,
    extract,
    gamma_coefficients,
    generator_strengths,
    pair_coefficient,
    qvector,
    unit_action,
)
from mcmtomo.mcm_gadget import InstrumentDeviation, exp_deviation, first_order_deviation, process_deviation
from mcmtomo.models import TruthModelConfig, amplitude_damping_ptm, build_truth_model, ideal_gateset
from mcmtomo.pauli_algebra import ValidationError
from mcmtomo.reference_tables import KNOWN_DISCREPANCIES, REFERENCE_ROWS, parse_combination

from conftest import random_density

strength_vectors = st.lists(st.floats(-0.01, 0.01), min_size=28, max_size=28)


def test_basis_size_and_conditioning():
    b = build_basis()
    assert len(b.labels) == 28 == 2 * 4**2 - 4
    assert b.F.shape == (28, 28)
    assert b.condition_number == pytest.approx(1 + np.sqrt(2) * 2.0 + 1, rel=1e-9)


def test_sectors():
    counts = {}
    for lab in LABELS:
        counts[SECTOR_OF[lab]] = counts.get(SECTOR_OF[lab], 0) + 1
    assert counts == {"S": 3, "A": 3, "R": 6, "Rt": 8, "W": 4, "Wt": 4}


def test_duality():
    b = basis()
    duals = np.array([b.dual(lab) for lab in LABELS])
    np.testing.assert_allclose(duals @ b.F, np.eye(28), atol=1e-12)


def test_proportional_and_exceptional_duals():
    b = basis()
    f = {lab: b.F[:, i] for i, lab in enumerate(LABELS)}
    exceptional = {
        "r_x_meas": 1.5 * f["r_x_meas"] - 0.5 * f["rt_x_meas"],
        "rt_x_meas": 1.5 * f["rt_x_meas"] - 0.5 * f["r_x_meas"],
        "r_y_meas": 1.5 * f["r_y_meas"] - 0.5 * f["rt_y_meas"],
        "rt_y_meas": 1.5 * f["rt_y_meas"] - 0.5 * f["r_y_meas"],
        "s_meas": 2 * f["s_meas"] - f["s_prep"],
        "s_prep": 2 * f["s_prep"] - f["s_meas"] - f["s_read"],
        "s_read": 2 * f["s_read"] - f["s_prep"],
        # the A triple and the z-tilted R-tilde pair carry an extra factor 1/2
        "a_meas": (f["a_meas"] - 0.5 * f["a_prep"]) / 2,
        "a_prep": (f["a_prep"] - 0.5 * f["a_meas"] - 0.5 * f["a_read"]) / 2,
        "a_read": (f["a_read"] - 0.5 * f["a_prep"]) / 2,
        "rt_xz_meas": f["rt_xz_meas"] / 2,
        "rt_yz_meas": f["rt_yz_meas"] / 2,
    }
    for lab in LABELS:
        np.testing.assert_allclose(b.dual(lab), exceptional.get(lab, f[lab]) / 4, atol=1e-12, err_msg=lab)


@pytest.mark.parametrize("label", LABELS)
def test_generated_deviation_matches_unit_action(label, rng):
    dev = elementary_deviation(label)
    for _ in range(3):
        rho = random_density(rng, 2)
        got = dev.apply(rho)
        want = unit_action(label, rho)
        for g, w in zip(got, want):
            np.testing.assert_allclose(g, w, atol=1e-12)


@pytest.mark.parametrize("label", LABELS)
def test_combinations_are_integers(label):
    for c in basis().combination(label).values():
        assert c == round(c) and c != 0


def test_read_combination():
    # generated form; the transcribed table lists the A terms with coefficient 1
    assert basis().combination_string("s_read") == "s_ix + s_iy + s_zx + s_zy + 2a_ixzy - 2a_iyzx"
    assert "s_read" in KNOWN_DISCREPANCIES


def test_w0_combination_matches_table():
    want = parse_combination("h_zy + a_iyzi - a_xyxz - a_yyyz - 2a_zyzz + c_ixzz - c_izzx - c_xixx - c_yiyx - 2c_zizx")
    got = basis().combination("w0")
    assert {k: int(v) for k, v in got.items()} == want


def test_rows_outside_known_list_match_table():
    for lab in LABELS:
        if lab in KNOWN_DISCREPANCIES:
            continue
        got = {k: int(v) for k, v in basis().combination(lab).items()}
        assert got == parse_combination(REFERENCE_ROWS[lab]), lab


def test_reference_comparison_lists_exactly_the_known_entries():
    cmp = compare_with_reference()
    assert set(cmp.row_mismatches) == {k for k in KNOWN_DISCREPANCIES if k != "unit_actions"}
    assert set(cmp.unit_action_mismatches) == set(KNOWN_DISCREPANCIES["unit_actions"])
    for lab, diffs in cmp.row_mismatches.items():
        listed = {(name, pub, gen) for name, pub, gen in KNOWN_DISCREPANCIES[lab]}
        assert {(n, int(p), int(g)) for n, p, g in diffs} == listed
    assert not cmp.exact


def test_single_strength_round_trip():
    b = basis()
    rep = extract(b.deviations["s_read"] * 0.01)
    for lab in LABELS:
        assert rep.strengths[lab] == pytest.approx(0.01 if lab == "s_read" else 0.0, abs=1e-12)


@given(strength_vectors)
def test_assemble_extract_round_trip(vec):
    b = basis()
    rep = extract(b.assemble(vec))
    np.testing.assert_allclose([rep.strengths[lab] for lab in LABELS], vec, atol=1e-10)
    assert rep.reconstruction_residual < 1e-12


def test_gamma_meas_composite():
    b = basis()
    d = b.deviations
    gamma = d["s_meas"] * 2 - d["a_meas"]
    rho = np.array([[0.3, 0.1], [0.1, 0.7]])
    g0, g1 = gamma.apply(rho)
    np.testing.assert_allclose(g0, 4 * 0.7 * np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(g1, -4 * 0.7 * np.diag([0.0, 1.0]), atol=1e-12)
    rep = extract(gamma * 0.02)
    assert rep.strengths["s_meas"] == pytest.approx(0.04)
    assert rep.strengths["a_meas"] == pytest.approx(-0.02)
    assert gamma_coefficients(rep.strengths)["gamma_meas_1to0"] == pytest.approx(0.02)
    # as a probability the same deviation is damping by 4 * 0.02
    assert rep.composites["pre_mcm_t1"] == pytest.approx(0.08)


def test_damping_composites():
    g = 0.02
    q = ideal_gateset().mcm
    pre = InstrumentDeviation.between(
        type(q)(tuple(e @ amplitude_damping_ptm(g) for e in q.elements)), q
    )
    assert extract(pre).composites["pre_mcm_t1"] == pytest.approx(g, abs=1e-12)
    post = InstrumentDeviation.between(
        type(q)(tuple(amplitude_damping_ptm(g) @ e for e in q.elements)), q
    )
    c = extract(post).composites
    assert c["post_mcm_t1"] == pytest.approx(g, abs=1e-12)
    assert c["pre_mcm_t1"] == pytest.approx(0, abs=1e-12)


def test_truth_post_damping_only():
    gs = build_truth_model(TruthModelConfig(t1_post=0.015))
    c = extract(InstrumentDeviation.between(gs.mcm, ideal_gateset().mcm)).composites
    assert c["post_mcm_t1"] == pytest.approx(0.015, abs=1e-9)


def test_equivalence_class():
    a = extract(exp_deviation(1e-3 * eeg_matrix(EegIndex("S", "IX"))))
    b = extract(exp_deviation(1e-3 * eeg_matrix(EegIndex("S", "IY"))))
    assert a.strengths == b.strengths


@pytest.mark.parametrize("label", ["s_prep", "a_prep"])
def test_preparation_errors_leave_outcome_probabilities(label, rng):
    dev = basis().deviations[label]
    rho = random_density(rng, 2)
    for part in dev.apply(rho):
        assert abs(np.trace(part)) < 1e-12


def test_classify():
    zero = extract(InstrumentDeviation((np.zeros((4, 4)), np.zeros((4, 4)))))
    summary = classify(zero)
    assert summary.dominant is None and all(not v for v in summary.sectors.values())
    rep = extract(first_order_deviation(EegIndex("H", "ZY")) * 0.01)
    summary = classify(rep)
    assert summary.dominant == "W"
    assert summary.sectors["W"] == pytest.approx({"w0": 0.01})


def test_generator_strengths_follow_combinations():
    rates = {"H_ZY": 0.01, "A_ZY_ZZ": 0.002}
    s = generator_strengths(rates)
    assert s["w0"] == pytest.approx(0.01 - 2 * 0.002)
    assert pair_coefficient("w0", "A", "ZZ", "ZY") == 2


@given(st.integers(0, 2**32 - 1))
def test_generator_strengths_match_extract(seed):
    rng = np.random.default_rng(seed)
    idx = all_eeg_indices(2)
    rates = {idx[i]: float(rng.normal(scale=1e-3)) for i in rng.choice(240, 10, replace=False)}
    total = sum((first_order_deviation(k) * v for k, v in rates.items()), InstrumentDeviation.from_vector(np.zeros(32)))
    direct = extract(total).strengths
    via = generator_strengths(rates)
    for lab in LABELS:
        assert via[lab] == pytest.approx(direct[lab], abs=1e-12)


def test_non_tp_deviation_rejected():
    d = np.zeros(32)
    d[0] = 0.1
    with pytest.raises(ValidationError):
        extract(InstrumentDeviation.from_vector(d))


def test_qvector_round_trip(rng):
    dev = basis().assemble(rng.uniform(-0.01, 0.01, 28))
    np.testing.assert_allclose(deviation_from_qvector(qvector(dev)).vector, dev.vector, atol=1e-15)


def test_report_serialization():
    rep = extract(basis().assemble(np.linspace(-0.01, 0.01, 28)))
    samples = [extract(basis().assemble(np.full(28, x))) for x in (0.001, -0.001, 0.002)]
    rep = rep.with_uncertainties(samples)
    again = ErrorStrengthReport.from_json(rep.to_json())
    assert again.strengths == rep.strengths and again.uncertainties == rep.uncertainties
    lines = rep.to_csv().splitlines()
    assert lines[0] == "label,sector,strength,two_sigma"
    assert len(lines) == 1 + 28 + len(COMPOSITE_NAMES)
    assert lines[1].startswith("s_meas,S,")


def test_weakness_from_weak_core():
    gs = build_truth_model(TruthModelConfig(weakness_angle=0.2))
    rep = extract(process_deviation(np.eye(16)) + InstrumentDeviation.between(gs.mcm, ideal_gateset().mcm))
    assert classify(rep).dominant == "W"
    assert rep.strengths["w0"] == pytest.approx(0.1, rel=0.01)
    assert abs(rep.strengths["s_meas"]) < 0.02


def test_composites_keys():
    assert tuple(composites(dict.fromkeys(LABELS, 0.0))) == COMPOSITE_NAMES
