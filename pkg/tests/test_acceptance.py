"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL ...`` line and then
asserts, so the verdict shows in the captured output and in pytest's
summary.  Run with ``-s`` to see the lines live.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from conftest import CRITERIA
from mcmtomo.error_generators import EegIndex, all_eeg_indices, eeg_matrix
from mcmtomo.experiments import design_circuits, sample_dataset
from mcmtomo.fomgi import LABELS, basis, build_basis, compare_with_reference
from mcmtomo.inference import bootstrap_decomposition, decompose, evidence_ratio, fit, n_sigma
from mcmtomo.iq_readout import IqConfig, calibration_points, counts_from_iq, postselect, simulate_iq, train_classifier
from mcmtomo.mcm_gadget import crunch, exp_deviation, first_order_deviation, ideal_instrument
from mcmtomo.models import (
    TruthModelConfig,
    amplitude_damping_ptm,
    build_truth_model,
    ideal_gateset,
    mpr_instrument,
)
from mcmtomo.reference_tables import REFERENCE_FIT_STATISTICS, REFERENCE_K_SAT

pytestmark = pytest.mark.slow


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    CRITERIA[n] = line
    print("\n" + line, flush=True)
    assert ok, detail


def test_criterion_01_table_reproduction():
    t0 = time.perf_counter()
    build_basis()
    elapsed = time.perf_counter() - t0
    cmp = compare_with_reference()
    n_rows = sum(len(v) for v in cmp.row_mismatches.values())
    ok = cmp.exact and elapsed < 1.0
    report(
        1, ok,
        f"build {elapsed:.3f}s; {cmp.rows_checked} combinations checked, {n_rows} coefficient mismatches in "
        f"{sorted(cmp.row_mismatches)}; {len(cmp.unit_action_mismatches)}/{cmp.unit_actions_checked} "
        f"unit actions differ",
    )  # fmt: skip


def test_criterion_02_crunch_equivalence():
    a = first_order_deviation(EegIndex("S", "IX"))
    b = first_order_deviation(EegIndex("S", "IY"))
    c = first_order_deviation(EegIndex("H", "ZY"))
    same = np.array_equal(a.vector, b.vector)
    differs = np.abs(a.vector - c.vector).max() > 1e-6
    hs = (0.05, 0.1, 0.2)
    corners = np.array([
        [abs(d[k][i, j]) for k in (0, 1) for i, j in ((0, 3), (3, 0))]
        for d in (exp_deviation(h * eeg_matrix(EegIndex("H", "ZY"))) for h in hs)
    ])  # fmt: skip
    live = corners[1] > 1e-12
    ratios = corners[1:, live] / corners[:-1, live]
    scaling = bool(live.any()) and np.all(np.abs(ratios / 4.0 - 1) <= 0.1)
    report(
        2, same and differs and scaling,
        f"S_IX == S_IY: {same}; H_ZY differs: {differs}; corner ratios per doubling {np.round(ratios.ravel(), 4).tolist()}",
    )  # fmt: skip


def test_criterion_03_first_order_sweep():
    eps = 1e-3
    q = ideal_instrument()
    t0 = time.perf_counter()
    worst = 0.0
    for idx in all_eeg_indices(2):
        full = crunch(scipy.linalg.expm(eps * eeg_matrix(idx)))
        lin = first_order_deviation(idx)
        err = math.sqrt(sum(np.linalg.norm(full[c] - q[c] - eps * lin[c]) ** 2 for c in (0, 1)))
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    report(3, worst <= 10 * eps**2 and elapsed < 10, f"240 generators, worst residual {worst:.3g}, {elapsed:.2f}s")


# reference dual formulas, as coefficients on primal deviations (overall 1/d^2 applied below)
REFERENCE_DUALS = {
    "r_x_meas": {"r_x_meas": 1.5, "rt_x_meas": -0.5},
    "rt_x_meas": {"rt_x_meas": 1.5, "r_x_meas": -0.5},
    "rt_xz_meas": {"rt_xz_meas": 1.0, "rt_x_meas": -0.5, "r_x_meas": -0.5},
    "r_y_meas": {"r_y_meas": 1.5, "rt_y_meas": -0.5},
    "rt_y_meas": {"rt_y_meas": 1.5, "r_y_meas": -0.5},
    "rt_yz_meas": {"rt_yz_meas": 1.0, "rt_y_meas": -0.5, "r_y_meas": -0.5},
    "s_meas": {"s_meas": 2.0, "s_prep": -1.0},
    "s_prep": {"s_prep": 2.0, "s_meas": -1.0, "s_read": -1.0},
    "s_read": {"s_read": 2.0, "s_prep": -1.0},
    "a_meas": {"a_meas": 1.0, "a_prep": -0.5},
    "a_prep": {"a_prep": 1.0, "a_meas": -0.5, "a_read": -0.5},
    "a_read": {"a_read": 1.0, "a_prep": -0.5},
}


def test_criterion_04_extraction_round_trip():
    b = basis()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        lam = rng.uniform(-0.01, 0.01, 28)
        worst = max(worst, np.abs(b.strengths_vector(b.assemble(lam)) - lam).max())
    duals = np.array([b.dual(lab) for lab in LABELS])
    gen_err = np.abs(duals @ b.F - np.eye(28)).max()
    col = {lab: b.F[:, i] for i, lab in enumerate(LABELS)}
    bad = []
    pub_err = 0.0
    for i, lab in enumerate(LABELS):
        coeffs = REFERENCE_DUALS.get(lab, {lab: 1.0})
        d = sum(v * col[k] for k, v in coeffs.items()) / 4
        row_err = np.abs(d @ b.F - np.eye(28)[i]).max()
        pub_err = max(pub_err, row_err)
        if row_err > 1e-12:
            bad.append(lab)
    ok = worst <= 1e-10 and gen_err <= 1e-12 and not bad
    report(
        4, ok,
        f"round trip max error {worst:.2e}; generated duals |D F - I| {gen_err:.1e}; "
        f"reference exceptional duals off by up to {pub_err:.2f} for {bad}",
    )  # fmt: skip


def test_criterion_05_fit_statistics():
    ref = REFERENCE_FIT_STATISTICS[0]
    circuits = design_circuits()
    k_sat = sum(len(c.outcomes) - 1 for c in circuits)
    lines, ok = [], k_sat == REFERENCE_K_SAT
    gamma_tol = {"CPTP": 0.0, "MPR+Stark": 0.4, "MPR": 0.4, "USI": 1.0}
    for tag, k, two_dl, ns_pub, g_pub in REFERENCE_FIT_STATISTICS:
        ns = n_sigma(two_dl, k_sat - k)
        tol = 1.0 if tag == "USI" else 0.15
        ok &= abs(ns - ns_pub) <= tol
        text = f"{tag} N_sigma {ns:.2f} (reference {ns_pub})"
        if g_pub is not None:
            g = evidence_ratio((ref[2], ref[1]), (two_dl, k))
            ok &= (round(g) == g_pub) if tag == "CPTP" else abs(g - g_pub) <= gamma_tol[tag]
            text += f" gamma {g:.2f} (reference {g_pub})"
        lines.append(text)
    report(5, ok, f"k_sat={k_sat}; " + "; ".join(lines))


TRUTH_6 = TruthModelConfig(t1_pre=0.02, t1_post=0.01, readout_flip=0.005)
KEYS_6 = ("pre_mcm_t1", "post_mcm_t1", "total_t1", "readout_error_1to0", "readout_error_0to1", "pure_readout")


def test_criterion_06_self_consistent_recovery():
    t0 = time.perf_counter()
    truth = build_truth_model(TRUTH_6)
    # fitted models are compared in the gauge closest to the ideal targets, so the
    # truth reference is expressed in that same gauge
    ref = decompose(truth).composites
    circuits = design_circuits()
    data = sample_dataset(truth, circuits, 100_000, 6)
    rep = fit(data, "CPTP", starts=1, seed=6)
    boot = bootstrap_decomposition(rep, circuits, 100_000, n_resamples=100, seed=7)
    elapsed = time.perf_counter() - t0
    ok, parts = rep.converged and elapsed < 600, []
    for k in KEYS_6:
        est, sd = boot.composites[k], boot.uncertainties[k]
        rel = abs(est - ref[k]) / abs(ref[k])
        ok &= rel <= 0.2 and abs(est - ref[k]) <= 3 * sd
        parts.append(f"{k} {est:.5f} vs {ref[k]:.5f} ({rel:.1%}, {abs(est - ref[k]) / sd:.1f} sd)")
    report(6, ok, f"{elapsed:.0f}s; " + "; ".join(parts))


def test_criterion_07_stark_detection():
    truth = build_truth_model(TruthModelConfig(t1_pre=0.02, t1_post=0.01, readout_flip=0.005, stark_phi=0.05))
    circuits = design_circuits()
    hits, rows = 0, []
    for seed in range(10):
        data = sample_dataset(truth, circuits, 40_000, 700 + seed)
        plain = fit(data, "CPTP", seed=seed)
        stark = fit(data, "CPTP+Stark", seed=seed)
        phi = abs(stark.model.stark_phi)
        good = plain.n_sigma > 5 and stark.n_sigma < 3 and abs(phi - 0.05) <= 0.005
        hits += good
        rows.append(f"({plain.n_sigma:.1f}, {stark.n_sigma:.1f}, {phi:.3f})")
    report(7, hits >= 8, f"{hits}/10 seeds detect; (N_sigma CPTP, N_sigma CPTP+Stark, phi) = " + " ".join(rows))


def test_criterion_08_model_selection():
    circuits = design_circuits()
    base = build_truth_model(TruthModelConfig(gate_depol=0.002))
    mpr_truth = base.with_mcm(mpr_instrument(amplitude_damping_ptm(0.02), amplitude_damping_ptm(0.01), 0.01))
    gammas = []
    for seed in range(10):
        data = sample_dataset(mpr_truth, circuits, 10_000, 800 + seed)
        gammas.append(evidence_ratio(fit(data, "CPTP", seed=seed), fit(data, "MPR", seed=seed)))
    preferred = sum(g < 2 for g in gammas)
    weak = build_truth_model(TruthModelConfig(t1_pre=0.02, t1_post=0.01, readout_flip=0.005, weakness_angle=0.3))
    data = sample_dataset(weak, circuits, 10_000, 899)
    g_weak = evidence_ratio(fit(data, "CPTP"), fit(data, "MPR"))
    report(
        8, preferred >= 8 and g_weak >= 2,
        f"MPR truth gamma<2 in {preferred}/10 seeds {np.round(gammas, 2).tolist()}; weakness 0.3 gamma {g_weak:.1f}",
    )  # fmt: skip


# interior truth: every CPTP parameter away from its physical boundary
TRUTH_9 = TruthModelConfig(
    t1_pre=0.02, t1_post=0.01, readout_flip=0.005, thermal_up=0.002, weakness_angle=0.05, gate_depol=0.002,
    idle_damping=0.003, prep_error=0.003, meas_error=0.004, mcm_depol=0.004, post_z_angle=0.01,
)  # fmt: skip


def test_criterion_09_wilks_calibration():
    truth = build_truth_model(TRUTH_9)
    circuits = design_circuits()
    k = REFERENCE_K_SAT - 59
    vals = [fit(sample_dataset(truth, circuits, 10_000, 900 + s), "CPTP", seed=s).two_delta_logl for s in range(50)]
    mean = float(np.mean(vals))
    report(9, abs(mean - k) <= 0.15 * k, f"mean 2DlogL {mean:.1f} over 50 seeds vs k={k} ({mean / k - 1:+.1%})")


def test_criterion_10_leakage_postselection():
    shots, leak = 20_000, 0.05
    truth = build_truth_model(TruthModelConfig(t1_pre=0.01, t1_post=0.01, readout_flip=0.005))
    circuits = design_circuits()
    iq = simulate_iq(truth, circuits, IqConfig(leak_prob=leak), shots=shots, seed=10)
    pts, prep = calibration_points(iq)
    clf3, clf2 = train_classifier(pts, 3, prep), train_classifier(pts, 2, prep)
    filtered, stats = postselect(iq, clf3)
    one = [i for i, c in enumerate(circuits) if c.has_mcm and c.body[: c.body.index("Mcm")] == ("Gx", "Gx")]
    n = len(one) * shots
    frac = sum(stats.removed[i] for i in one) / n
    z = (frac - leak) / math.sqrt(leak * (1 - leak) / n)
    ref = decompose(truth).composites["pre_mcm_t1"]
    raw = decompose(fit(counts_from_iq(iq, clf2), "CPTP", starts=1).model).composites["pre_mcm_t1"]
    kept = decompose(fit(filtered, "CPTP", starts=1).model).composites["pre_mcm_t1"]
    reduction = 1 - abs(kept - ref) / abs(raw - ref)
    report(
        10, abs(z) <= 4 and reduction >= 0.5,
        f"removal on |1> circuits {frac:.4f} (z={z:+.2f}); pre-MCM T1 truth {ref:.4f}, unfiltered {raw:.4f}, "
        f"post-selected {kept:.4f}, bias reduced {reduction:.0%}",
    )  # fmt: skip
