import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcgate.core import I2, KET_0, KET_PLUS, NotHermitianError, pauli_expand, random_unitary
from rcgate.jones import gate
from rcgate import tomography as tomo
from rcgate.tomography import (
    BornTable,
    ChiMatrix,
    ConvergenceWarning,
    CountTable,
    TomographyDesign,
    TomographyError,
    bootstrap_fidelity,
    born_probabilities,
    channel_output_weight_scale,
    expected_counts,
    ideal_chi,
    linear_inversion_chi,
    mle_chi,
    mle_fit,
    process_fidelity,
    simulate_counts,
    standard_design,
)

X, Z = gate("X"), gate("Z")
U_A = np.sqrt(2 / 3) * I2 + np.sqrt(1 / 3) * X
U_B = np.sqrt(1 / 2) * I2 - np.sqrt(1 / 2) * X
D1, D2 = standard_design(1), standard_design(2)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _z_row(table):
    # prep |0> is index 0; setting Z is index 2 in X, Y, Z order
    return table.probs[0, 2]


# --- ChiMatrix ---------------------------------------------------------------


def test_chi_validation():
    with pytest.raises(ValueError):
        ChiMatrix(np.eye(3))
    with pytest.raises(NotHermitianError):
        ChiMatrix(np.triu(np.ones((4, 4))))
    chi = ChiMatrix(np.diag([1.0, 0, 0, 0]))
    chi.validate()
    with pytest.raises(ValueError):
        ChiMatrix(np.diag([1.2, -0.2, 0, 0])).validate()
    with pytest.raises(ValueError):
        ChiMatrix(np.diag([0.5, 0, 0, 0])).validate()


def test_chi_is_read_only():
    chi = ideal_chi(X)
    with pytest.raises(ValueError):
        chi.entries[0, 0] = 1


def test_chi_serialization_round_trip():
    chi = ideal_chi(gate("CNOT"))
    d = json.loads(json.dumps(chi.to_dict()))
    assert d["dimension"] == 16 and d["basis"][:2] == ["II", "IX"] and d["trace_normalized"] is True
    assert len(d["entries"]) == 256 and len(d["entries"][0]) == 2
    back = ChiMatrix.from_dict(d)
    assert np.array_equal(back.entries, chi.entries)


# --- ideal_chi / fidelity ----------------------------------------------------


def test_ideal_chi_x():
    chi = ideal_chi(X).entries
    expected = np.zeros((4, 4))
    expected[1, 1] = 1
    assert np.allclose(chi, expected)


def test_ideal_chi_rc_b():
    chi = ideal_chi(U_B)
    assert chi.element("I", "I") == pytest.approx(0.5)
    assert chi.element("X", "X") == pytest.approx(0.5)
    assert chi.element("I", "X") == pytest.approx(-0.5)
    assert chi.element("X", "I") == pytest.approx(-0.5)


def test_ideal_chi_cnot_support():
    chi = ideal_chi(gate("CNOT"))
    assert np.linalg.matrix_rank(chi.entries, tol=1e-10) == 1
    support = {chi.labels[i] for i in np.flatnonzero(np.abs(np.diag(chi.entries)) > 1e-12)}
    assert support == {"II", "IX", "ZI", "ZX"}
    v = np.array([1, 1, 1, -1]) / 2
    idx = [chi.labels.index(k) for k in ("II", "IX", "ZI", "ZX")]
    assert np.allclose(chi.entries[np.ix_(idx, idx)], np.outer(v, v))


def test_ideal_chi_rejects_zero():
    with pytest.raises(ValueError):
        ideal_chi(np.zeros((2, 2)))


def test_fidelity_examples():
    a = ideal_chi(U_A)
    assert process_fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert process_fidelity(ideal_chi(I2), ideal_chi(X)) == pytest.approx(0.0, abs=1e-12)
    assert process_fidelity(ideal_chi(I2), a) == pytest.approx(2 / 3, abs=1e-12)


def test_fidelity_general_formula_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(5):
        g, h = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(2))
        a, b = g @ g.conj().T, h @ h.conj().T
        a, b = a / np.trace(a).real, b / np.trace(b).real
        # brute-force Uhlmann fidelity via scipy's sqrtm
        from scipy.linalg import sqrtm

        sa = sqrtm(a)
        oracle = np.trace(sqrtm(sa @ b @ sa)).real ** 2
        assert process_fidelity(ChiMatrix(a), ChiMatrix(b)) == pytest.approx(oracle, abs=1e-9)


def test_fidelity_rejects_mismatched_inputs():
    with pytest.raises(ValueError):
        process_fidelity(ideal_chi(X), ideal_chi(gate("CNOT")))
    with pytest.raises(ValueError):
        process_fidelity(ChiMatrix(np.diag([0.5, 0, 0, 0])), ideal_chi(X))


@given(seeds)
def test_fidelity_symmetric_and_rank_one_overlap(seed):
    rng = np.random.default_rng(seed)
    ops = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(2)]
    a, b = ideal_chi(ops[0]), ideal_chi(ops[1])
    va, vb = (pauli_expand(o) for o in ops)
    overlap = abs(np.vdot(va, vb)) ** 2 / (np.vdot(va, va).real * np.vdot(vb, vb).real)
    assert abs(process_fidelity(a, b) - process_fidelity(b, a)) < 1e-9
    assert abs(process_fidelity(a, b) - overlap) < 1e-9


# --- design and Born table ---------------------------------------------------


def test_standard_design_shapes():
    assert D1.shape == (4, 3, 2) and D2.shape == (16, 9, 4)
    assert D1.prep_labels == ["0", "1", "+", "+i"]
    assert D2.born_matrix.shape == (576, 256)
    with pytest.raises(ValueError):
        standard_design(3)


def test_design_rejects_non_orthonormal_setting():
    with pytest.raises(ValueError):
        TomographyDesign([KET_0], [[KET_0, KET_PLUS]])


@pytest.mark.parametrize(
    "channel, expected",
    [(I2, [1, 0]), (X, [0, 1]), (U_A, [2 / 3, 1 / 3])],
)
def test_born_examples(channel, expected):
    assert np.allclose(_z_row(born_probabilities(channel, D1)), expected, atol=1e-12)
    assert np.allclose(_z_row(born_probabilities(ideal_chi(channel), D1)), expected, atol=1e-12)


def test_born_unitary_rows_untouched():
    rng = np.random.default_rng(1)
    for d in (D1, D2):
        t = born_probabilities(random_unitary(d.dim, rng), d)
        assert np.allclose(t.weights, 1.0, atol=1e-12)
        assert np.allclose(t.probs.sum(axis=-1), 1.0, atol=1e-12)


def test_born_non_tp_weights():
    t = born_probabilities(U_B, D1)
    # U_B = sqrt2 |-><-|: |-> would have weight 1; |0>,|1>,|+i> get half, |+> none
    assert np.allclose(t.weights[:, 0], [0.5, 0.5, 0, 0.5])
    assert np.allclose(t.probs[2], 0)
    u = born_probabilities(U_A, D1)
    # weights are ||U psi||^2 divided by the largest singular value squared
    top = np.linalg.svd(U_A, compute_uv=False)[0] ** 2
    assert u.weights[0, 0] == pytest.approx(1 / top)


def test_weight_scale_oracle():
    rng = np.random.default_rng(2)
    op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    chi = ideal_chi(op)
    # the same channel as the normalized Kraus operator op / ||v||
    k = op / np.linalg.norm(pauli_expand(op))
    assert channel_output_weight_scale(chi.entries) == pytest.approx(np.linalg.svd(k, compute_uv=False)[0] ** 2)


def test_born_rejects_bad_channels():
    with pytest.raises(ValueError):
        born_probabilities(ChiMatrix(np.diag([1.2, -0.2, 0, 0])), D1)
    with pytest.raises(ValueError):
        born_probabilities(gate("CNOT"), D1)


def test_born_table_from_raw():
    raw = np.array([[[0.25, 0.25]], [[0.1, 0.0]], [[0.0, 0.0]]])
    t = BornTable.from_raw(raw)
    assert np.allclose(t.weights[:, 0], [1.0, 0.2, 0.0])
    assert np.allclose(t.probs[1, 0], [1, 0]) and np.allclose(t.probs[2, 0], [0, 0])
    with pytest.raises(ValueError):
        BornTable.from_raw(np.zeros((1, 1, 2)))


# --- counts ------------------------------------------------------------------


def test_counts_zero_mean_is_zero():
    c = simulate_counts(np.array([[[1.0, 0.0]]]), 1000, 3)
    assert c.counts[0, 0, 1] == 0 and c.counts[0, 0, 0] > 800


def test_counts_annihilated_row():
    c = simulate_counts(np.array([[[0.0, 0.0]], [[0.5, 0.5]]]), 1000, 3)
    assert np.all(c.counts[0] == 0)


def test_counts_golden_seed_42():
    c = simulate_counts(np.array([[[0.5, 0.5]]]), 10000, 42)
    assert c.counts.tolist() == [[[5041, 4966]]]


def test_counts_deterministic_and_seed_sensitive():
    t = born_probabilities(gate("CNOT"), D2)
    a, b = simulate_counts(t, 500, 11), simulate_counts(t, 500, 11)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, simulate_counts(t, 500, 12).counts)


def test_counts_keyed_per_cell():
    # changing one cell's mean leaves every other cell's draw untouched
    p = np.full((2, 2, 2), 0.5)
    q = p.copy()
    q[1, 1] = [0.9, 0.1]
    a, b = simulate_counts(p, 1000, 5).counts, simulate_counts(q, 1000, 5).counts
    mask = np.ones_like(a, dtype=bool)
    mask[1, 1] = False
    assert np.array_equal(a[mask], b[mask])


def test_counts_validation():
    with pytest.raises(ValueError):
        simulate_counts(np.array([[[0.5, 0.5]]]), 0, 1)
    with pytest.raises(ValueError):
        simulate_counts(np.array([[[0.7, 0.7]]]), 10, 1)
    with pytest.raises(ValueError):
        CountTable(np.array([[[-1, 2]]]), 10)


def test_poisson_statistics():
    c = simulate_counts(np.full((40, 40, 2), 0.5), 2000, 9).counts
    assert c.mean() == pytest.approx(1000, rel=0.01)
    assert c.var() == pytest.approx(1000, rel=0.1)


# --- linear inversion --------------------------------------------------------


@pytest.mark.parametrize("op, entries", [
    (I2, {("I", "I"): 1}),
    (X, {("X", "X"): 1}),
    (U_A, {("I", "I"): 2 / 3, ("X", "X"): 1 / 3, ("I", "X"): np.sqrt(2) / 3, ("X", "I"): np.sqrt(2) / 3}),
])
def test_linear_inversion_examples(op, entries):
    chi = linear_inversion_chi(expected_counts(born_probabilities(op, D1), 10**6), D1)
    expected = np.zeros((4, 4))
    for (r, c), v in entries.items():
        expected[chi.labels.index(r), chi.labels.index(c)] = v
    assert np.allclose(chi.entries, expected, atol=1e-12)


def test_linear_inversion_round_trip_random():
    rng = np.random.default_rng(77)
    for d in (D1, D2):
        for _ in range(25):
            u = random_unitary(d.dim, rng)
            est = linear_inversion_chi(expected_counts(born_probabilities(ideal_chi(u), d), 10**9), d)
            assert np.abs(est.entries - ideal_chi(u).entries).max() < 1e-8
            assert process_fidelity(est, ideal_chi(u)) >= 1 - 1e-8


def test_linear_inversion_non_tp_round_trip():
    rng = np.random.default_rng(78)
    for _ in range(10):
        op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        est = linear_inversion_chi(expected_counts(born_probabilities(op, D2), 10**9), D2)
        assert np.abs(est.entries - ideal_chi(op).entries).max() < 1e-8


def test_linear_inversion_rank_deficient():
    poor = TomographyDesign([KET_0, KET_PLUS], D1.meas_settings)
    with pytest.raises(TomographyError):
        linear_inversion_chi(expected_counts(born_probabilities(X, poor), 100), poor)


def test_linear_inversion_zero_counts():
    with pytest.raises(TomographyError):
        linear_inversion_chi(np.zeros(D1.shape), D1)


# --- MLE ---------------------------------------------------------------------


def test_mle_gradient_and_hessian_match_finite_differences():
    rng = np.random.default_rng(3)
    counts = simulate_counts(born_probabilities(U_A, D1), 300, 1).counts
    lik = tomo._CholeskyLikelihood(counts.astype(float), D1)
    x = rng.normal(size=16)
    _, g, h = lik.derivatives(x)
    eps = 1e-6
    for i in range(16):
        e = np.zeros(16)
        e[i] = eps
        fd = (lik.value(x + e) - lik.value(x - e)) / (2 * eps)
        assert fd == pytest.approx(g[i], abs=1e-7)
        _, gp, _ = lik.derivatives(x + e)
        _, gm, _ = lik.derivatives(x - e)
        assert np.allclose((gp - gm) / (2 * eps), h[:, i], atol=1e-6)


def test_mle_cnot_exact_frequencies():
    counts = expected_counts(born_probabilities(gate("CNOT"), D2), 10**6)
    fit = mle_fit(counts, D2)
    assert fit.converged and fit.grad_norm < 1e-8
    assert process_fidelity(fit.chi, ideal_chi(gate("CNOT"))) >= 0.999


def test_mle_rc_b_with_annihilated_row():
    counts = simulate_counts(born_probabilities(U_B, D1), 10**5, 4)
    assert counts.counts[2].sum() == 0
    fit = mle_fit(counts, D1)
    assert fit.converged
    ev = np.sort(fit.chi.eigenvalues())
    assert ev[-1] > 0.99 and ev[-2] < 1e-2
    v = np.array([1, -1, 0, 0]) / np.sqrt(2)
    assert np.abs(fit.chi.entries - np.outer(v, v)).max() < 0.02


def test_mle_zero_counts():
    with pytest.raises(TomographyError):
        mle_chi(np.zeros(D1.shape), D1)


def test_mle_non_convergence_warns():
    counts = simulate_counts(born_probabilities(U_A, D1), 1000, 2)
    with pytest.warns(ConvergenceWarning):
        chi = mle_chi(counts, D1, max_iter=1)
    chi.validate()


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from([50, 1000, 50000]))
def test_mle_output_is_physical(seed, shots):
    rng = np.random.default_rng(seed)
    op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    chi = mle_chi(simulate_counts(born_probabilities(op, D1), shots, seed % 1000), D1)
    assert np.allclose(chi.entries, chi.entries.conj().T, atol=1e-10)
    assert chi.eigenvalues().min() >= -1e-8
    assert abs(chi.trace - 1) <= 1e-10


def test_mle_likelihood_not_below_linear_inversion():
    counts = simulate_counts(born_probabilities(U_A, D1), 200, 8)
    fit = mle_fit(counts, D1)
    lik = tomo._CholeskyLikelihood(counts.counts.astype(float), D1)
    li = tomo._psd_start(linear_inversion_chi(counts, D1).entries)
    x_li = lik.coords(tomo._chi_to_factor(li))
    assert fit.log_likelihood >= lik.value(x_li / np.linalg.norm(x_li)) - 1e-12


# --- bootstrap ---------------------------------------------------------------


def test_bootstrap_rejects_single_trial():
    counts = simulate_counts(born_probabilities(X, D1), 100, 1)
    with pytest.raises(ValueError):
        bootstrap_fidelity(counts, D1, ideal_chi(X), n_trials=1)


def test_bootstrap_cnot_golden():
    counts = simulate_counts(born_probabilities(gate("CNOT"), D2), 10**4, 2024)
    res = bootstrap_fidelity(counts, D2, ideal_chi(gate("CNOT")), n_trials=100, seed=2024)
    mean, std = res
    assert mean >= 0.99 and std <= 0.01
    assert res.excluded == 0


def test_bootstrap_large_counts_small_std():
    counts = expected_counts(born_probabilities(gate("CNOT"), D2), 10**8)
    mean, std = bootstrap_fidelity(counts, D2, ideal_chi(gate("CNOT")), n_trials=20, seed=1)
    assert std <= 1e-3 and mean > 0.999


def test_bootstrap_deterministic_and_worker_independent():
    counts = simulate_counts(born_probabilities(U_A, D1), 2000, 6)
    args = (counts, D1, ideal_chi(U_A))
    a = bootstrap_fidelity(*args, n_trials=12, seed=3)
    b = bootstrap_fidelity(*args, n_trials=12, seed=3, workers=3)
    assert np.array_equal(a.fidelities, b.fidelities)
    assert a.formatted().count("±") == 1


@pytest.mark.parametrize("rank", [2, 3, 8])
def test_fidelity_stable_for_rank_deficient_chi(rank):
    rng = np.random.default_rng(rank)
    kraus = np.linalg.qr(rng.normal(size=(4 * rank, 4)) + 1j * rng.normal(size=(4 * rank, 4)))[0]
    chi = sum(np.outer(v, v.conj()) for v in (pauli_expand(kraus[4 * k:4 * k + 4]) for k in range(rank)))
    noise = 1e-16 * (rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16)))
    a, b = ChiMatrix(chi), ChiMatrix(chi + noise + noise.conj().T)
    assert process_fidelity(a, b) == pytest.approx(1.0, abs=1e-12)
    assert process_fidelity(b, a) == pytest.approx(1.0, abs=1e-12)
