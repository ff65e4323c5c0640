"""Acceptance criteria 1-7, one PASS/FAIL line each (see the terminal summary).

Run alone with ``pytest tests/test_acceptance.py -v``. The noisy runs are
shared between criteria 5(b) and 6 through module-scoped fixtures.
"""

import time

import numpy as np
import pytest
from scipy.stats import unitary_group

from rcgate.cli import main
from rcgate.core import equal_up_to_global_phase, pauli_expand, random_state
from rcgate.experiment import PRESETS, ExperimentConfig, apparatus_table, build_apparatus, run_experiment
from rcgate.interferometer import (
    DualDofState,
    InterferometerSettings,
    effective_cu,
    ideal_cu,
    postselect_coincidence,
    propagate_umi,
    propagate_umzi,
)
from rcgate.jones import WAVEPLATE_RECIPES, GateName, gate, verify_cs_decomposition
from rcgate.noise import NoiseConfig, noise_preset
from rcgate.remote import RcCoefficients, rc_projection, rc_state_prep
from rcgate.rng import keyed_generator
from rcgate.selftest import run_all
from rcgate.tomography import (
    ChiMatrix,
    expected_counts,
    born_probabilities,
    ideal_chi,
    linear_inversion_chi,
    mle_chi,
    process_fidelity,
    simulate_counts,
    standard_design,
)

SEED = 20240601
NOISY_SHOTS = 1000        # N for the bootstrap ratio; 4N is the second run
CLEAN_SHOTS = 10**5


def _overlap(a, b):
    # |tr(a^dag b)| / d for unitaries: 1 iff equal up to global phase
    return abs(np.trace(a.conj().T @ b)) / a.shape[0]


# --- shared runs -------------------------------------------------------------


@pytest.fixture(scope="module")
def noisy_runs():
    runs = {}
    for preset in ("cnot-qpt", "cs-qpt"):
        cfg = ExperimentConfig(preset, shots=NOISY_SHOTS, n_trials=100, seed=SEED,
                               noise=noise_preset("paper-like", seed=SEED))
        runs[preset] = run_experiment(cfg)
    return runs


@pytest.fixture(scope="module")
def noisy_cnot_4n():
    cfg = ExperimentConfig("cnot-qpt", shots=4 * NOISY_SHOTS, n_trials=100, seed=SEED,
                           noise=noise_preset("paper-like", seed=SEED))
    return run_experiment(cfg)


# --- criteria ----------------------------------------------------------------


def test_criterion_1_cu_synthesis(acceptance_report):
    rng = keyed_generator(101, SEED)
    t0 = time.perf_counter()
    worst_overlap, worst_p = 1.0, 0.0
    for _ in range(100):
        u0 = unitary_group.rvs(2, random_state=rng)
        u1 = unitary_group.rvs(2, random_state=rng)
        s = InterferometerSettings(u0=u0, u1=u1)
        worst_overlap = min(worst_overlap, _overlap(effective_cu(s), ideal_cu(u0, u1)))
        state = DualDofState.from_polarization(random_state(4, rng))
        _, p = postselect_coincidence(propagate_umzi(propagate_umi(state, s), s))
        worst_p = max(worst_p, abs(p - 0.25))
    dt = time.perf_counter() - t0
    ok = worst_overlap >= 1 - 1e-10 and worst_p <= 1e-12 and dt < 1.0
    acceptance_report("1 CU synthesis", ok,
                      f"min overlap 1-{1 - worst_overlap:.1e}, max |p-0.25| {worst_p:.1e}, {dt:.3f} s")
    assert ok


def test_criterion_2_gate_presets(acceptance_report):
    t0 = time.perf_counter()
    checks = {
        "CNOT (matrices)": equal_up_to_global_phase(
            effective_cu(InterferometerSettings(u0=gate("I"), u1=gate("X"))), gate("CNOT"), tol=1e-12),
        "CS (matrices)": equal_up_to_global_phase(
            effective_cu(InterferometerSettings(u0=gate("I"), u1=gate("S"))), gate("CS"), tol=1e-12),
    }
    for preset, target in (("cnot-qpt", "CNOT"), ("cs-qpt", "CS")):
        app = build_apparatus(ExperimentConfig(preset))
        assert app.settings.u1_recipe == WAVEPLATE_RECIPES[GateName.X if target == "CNOT" else GateName.S]
        checks[f"{target} (waveplate recipe)"] = equal_up_to_global_phase(
            effective_cu(app.settings), gate(target), tol=1e-12)
    checks["CS decomposition"] = verify_cs_decomposition()
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 1.0
    bad = [k for k, v in checks.items() if not v]
    acceptance_report("2 gate presets", ok, f"{len(checks)} checks, failed {bad or 'none'}, {dt:.3f} s")
    assert ok


def test_criterion_3_protocol_equivalence(acceptance_report):
    rng = keyed_generator(103, SEED)
    worst_state, worst_p = 0.0, 0.0
    for _ in range(100):
        c = RcCoefficients.normalized(*(rng.normal(size=2) + 1j * rng.normal(size=2)))
        u0 = unitary_group.rvs(2, random_state=rng)
        u1 = unitary_group.rvs(2, random_state=rng)
        psi = random_state(2, rng)
        a, b = rc_state_prep(c, u0, u1, psi), rc_projection(c, u0, u1, psi)
        worst_state = max(worst_state, np.abs(a.output_state - b.output_state).max())
        worst_p = max(worst_p, abs(a.success_prob - b.success_prob))
    c = RcCoefficients(np.sqrt(0.5), -np.sqrt(0.5))
    plus = np.array([1, 1]) / np.sqrt(2)
    annihilated = all(
        o.annihilated and o.success_prob == 0.0
        for o in (rc_state_prep(c, gate("I"), gate("X"), plus), rc_projection(c, gate("I"), gate("X"), plus))
    )
    ok = worst_state <= 1e-12 and worst_p <= 1e-12 and annihilated
    acceptance_report("3 protocol equivalence", ok,
                      f"max state dev {worst_state:.1e}, max p dev {worst_p:.1e}, U_B|+> annihilated {annihilated}")
    assert ok


def _random_channel(n_qubits, rng):
    # Kraus operators from the blocks of a Haar-random isometry
    d = 2**n_qubits
    rank = int(rng.integers(1, d * d + 1))
    iso = unitary_group.rvs(d * rank, random_state=rng)[:, :d]
    chi = np.zeros((d * d, d * d), dtype=complex)
    for k in range(rank):
        v = pauli_expand(iso[k * d:(k + 1) * d])
        chi += np.outer(v, v.conj())
    return ChiMatrix(chi)


def test_criterion_4_tomography_round_trip(acceptance_report):
    rng = keyed_generator(104, SEED)
    t0 = time.perf_counter()
    li_worst = 1.0
    for n in range(50):
        nq = 1 + n % 2
        design = standard_design(nq)
        chi = _random_channel(nq, rng)
        est = linear_inversion_chi(expected_counts(born_probabilities(chi, design), 10**6), design)
        li_worst = min(li_worst, process_fidelity(est, chi))
    mle = {}
    for preset in PRESETS:
        app = build_apparatus(ExperimentConfig(preset))
        table, _ = apparatus_table(app, NoiseConfig())
        counts = simulate_counts(table, CLEAN_SHOTS, SEED)
        mle[preset] = process_fidelity(mle_chi(counts, app.design), ideal_chi(app.ideal_operator))
    dt = time.perf_counter() - t0
    ok = li_worst >= 1 - 1e-8 and min(mle.values()) >= 0.995 and dt < 60
    detail = ", ".join(f"{k} {v:.4f}" for k, v in mle.items())
    acceptance_report("4 tomography round trip", ok,
                      f"LI worst 1-{1 - li_worst:.1e} over 50 channels; MLE at 1e5 shots: {detail}; {dt:.1f} s")
    assert ok


@pytest.mark.parametrize("preset", list(PRESETS))
def test_criterion_5a_zero_noise(preset, acceptance_report):
    report = run_experiment(ExperimentConfig(preset, shots=CLEAN_SHOTS, n_trials=100, seed=SEED))
    ok = report.fidelity_mean >= 0.995
    acceptance_report(f"5a zero noise {preset}", ok,
                      f"F = {report.fidelity_mean:.5f}±{report.fidelity_std:.5f} at {CLEAN_SHOTS} shots")
    assert ok


@pytest.mark.parametrize("preset,centre", [("cnot-qpt", 0.958), ("cs-qpt", 0.950)])
def test_criterion_5b_calibrated_noise(preset, centre, noisy_runs, acceptance_report):
    report = noisy_runs[preset]
    ok = abs(report.fidelity_mean - centre) <= 0.015
    acceptance_report(f"5b paper-like noise {preset}", ok,
                      f"F = {report.fidelity_text} (target {centre}±0.015, {NOISY_SHOTS} shots)")
    assert ok


def test_criterion_6_bootstrap_scaling(noisy_runs, noisy_cnot_4n, acceptance_report):
    ratio = noisy_cnot_4n.fidelity_std / noisy_runs["cnot-qpt"].fidelity_std
    stds = {k: r.fidelity_std for k, r in noisy_runs.items()}
    ok = 0.3 <= ratio <= 0.8 and all(0.001 <= s <= 0.03 for s in stds.values())
    acceptance_report("6 bootstrap behaviour", ok,
                      f"std(4N)/std(N) = {ratio:.3f} (N={NOISY_SHOTS}); 5b stds "
                      + ", ".join(f"{k} {v:.4f}" for k, v in stds.items()))
    assert ok


def test_criterion_7_invariants(acceptance_report, capsys):
    results = run_all(seed=0)
    violations = sum(r.violations for r in results)
    code = main(["verify"])
    capsys.readouterr()
    ok = violations == 0 and code == 0
    acceptance_report("7 invariant suites", ok, f"{len(results)} suites, {violations} violations, verify exit {code}")
    assert ok
