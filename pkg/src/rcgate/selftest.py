"""Randomized invariant checks run by ``rcgate verify``.

Each check returns the number of violations over its draws; all draws come
from keyed generators so a run is reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    I2,
    equal_up_to_global_phase,
    is_hermitian,
    is_unitary,
    pauli_expand,
    pauli_reconstruct,
    psd_sqrt,
    random_state,
    random_unitary,
    tensor_product,
)
from .interferometer import (
    DualDofState,
    InterferometerSettings,
    effective_cu,
    ideal_cu,
    postselect_coincidence,
    propagate_umi,
    propagate_umzi,
    run_pipeline,
)
from .jones import hwp, qwp, verify_cs_decomposition
from .noise import depolarize
from .remote import RcCoefficients, rc_operator, rc_projection, rc_state_prep
from .rng import SELFTEST, keyed_generator
from .tomography import (
    born_probabilities,
    expected_counts,
    ideal_chi,
    linear_inversion_chi,
    mle_chi,
    process_fidelity,
    simulate_counts,
    standard_design,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    violations: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _rng(check_id: int, seed: int):
    return keyed_generator(SELFTEST, seed, check_id)


def _random_density(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def check_waveplates(seed: int, n: int = 100) -> int:
    rng = _rng(1, seed)
    bad = 0
    for theta in rng.uniform(-180, 180, size=n):
        for plate in (hwp(theta), qwp(theta)):
            bad += not np.allclose(plate.conj().T @ plate, I2, atol=1e-12)
        bad += not equal_up_to_global_phase(hwp(theta) @ hwp(theta), I2, tol=1e-12)
    return bad


def check_core_algebra(seed: int, n: int = 100) -> int:
    rng = _rng(2, seed)
    bad = 0
    for _ in range(n):
        a = random_state(2, rng)
        b = random_state(2, rng)
        bad += abs(np.linalg.norm(tensor_product(a, b)) - 1) > 1e-12
        op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        bad += not np.allclose(pauli_reconstruct(pauli_expand(op)), op, atol=1e-12)
        rho = _random_density(rng, 4)
        s = psd_sqrt(rho)
        bad += not (is_hermitian(s) and np.allclose(s @ s, rho, atol=1e-10))
        u = random_unitary(4, rng)
        bad += not (equal_up_to_global_phase(u, u) and equal_up_to_global_phase(np.exp(1.3j) * u, u))
    return bad


def check_cu_synthesis(seed: int, n: int = 100) -> int:
    rng = _rng(3, seed)
    bad = 0
    for _ in range(n):
        u0, u1 = random_unitary(2, rng), random_unitary(2, rng)
        s = InterferometerSettings(u0=u0, u1=u1)
        psi = random_state(4, rng)
        st0 = DualDofState.from_polarization(psi)
        st1 = propagate_umi(st0, s)
        st2 = propagate_umzi(st1, s)
        bad += st1.norm2 > st0.norm2 + 1e-12 or st2.norm2 > st1.norm2 + 1e-12
        _, p = postselect_coincidence(st2)
        bad += abs(p - 0.25) > 1e-12
        bad += not equal_up_to_global_phase(effective_cu(s), ideal_cu(u0, u1), tol=1e-10)
    bad += not verify_cs_decomposition()
    return bad


def check_linearity(seed: int, n: int = 100) -> int:
    rng = _rng(4, seed)
    bad = 0
    for _ in range(n):
        s = InterferometerSettings(u0=random_unitary(2, rng), u1=random_unitary(2, rng),
                                   umi_phase=rng.uniform(0, 2 * np.pi), umzi_phase=rng.uniform(0, 2 * np.pi))
        psi1, psi2 = random_state(4, rng), random_state(4, rng)
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        lhs = run_pipeline(a * psi1 + b * psi2, s)
        rhs = a * run_pipeline(psi1, s) + b * run_pipeline(psi2, s)
        bad += not np.allclose(lhs, rhs, atol=1e-12)
    return bad


def check_remote_control(seed: int, n: int = 100) -> int:
    rng = _rng(5, seed)
    bad = 0
    for _ in range(n):
        c = RcCoefficients.normalized(*(rng.normal(size=2) + 1j * rng.normal(size=2)))
        u0, u1 = random_unitary(2, rng), random_unitary(2, rng)
        psi = random_state(2, rng)
        a = rc_state_prep(c, u0, u1, psi)
        b = rc_projection(c, u0, u1, psi)
        expected = np.linalg.norm(rc_operator(c, u0, u1) @ psi) ** 2 / 8
        bad += abs(a.success_prob - expected) > 1e-12 or abs(b.success_prob - expected) > 1e-12
        bad += not np.allclose(a.output_state, b.output_state, atol=1e-12)
    c = RcCoefficients(np.sqrt(0.5), -np.sqrt(0.5))
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    plus = np.array([1, 1]) / np.sqrt(2)
    for out in (rc_state_prep(c, I2, x, plus), rc_projection(c, I2, x, plus)):
        bad += not (out.annihilated and out.success_prob == 0.0)
    return bad


def check_tomography(seed: int, n: int = 10) -> int:
    rng = _rng(6, seed)
    bad = 0
    for nq in (1, 2):
        design = standard_design(nq)
        for _ in range(n):
            u = random_unitary(2**nq, rng)
            target = ideal_chi(u)
            est = linear_inversion_chi(expected_counts(born_probabilities(u, design), 10**9), design)
            bad += process_fidelity(est, target) < 1 - 1e-8
    design = standard_design(1)
    for t in range(n):
        op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        counts = simulate_counts(born_probabilities(op, design), 500, seed + t)
        chi = mle_chi(counts, design)
        ev = chi.eigenvalues()
        bad += not (is_hermitian(chi.entries, atol=1e-10) and ev.min() >= -1e-8 and abs(chi.trace - 1) <= 1e-10)
        va, vb = pauli_expand(op), pauli_expand(random_unitary(2, rng))
        a, b = ideal_chi(op), ideal_chi(pauli_reconstruct(vb))
        f_ab, f_ba = process_fidelity(a, b), process_fidelity(b, a)
        overlap = abs(np.vdot(va, vb)) ** 2 / (np.vdot(va, va).real * np.vdot(vb, vb).real)
        bad += abs(f_ab - f_ba) > 1e-9 or abs(f_ab - overlap) > 1e-9
    return bad


def check_noise(seed: int, n: int = 100) -> int:
    rng = _rng(7, seed)
    bad = 0
    for _ in range(n):
        rho = _random_density(rng, 4)
        out = depolarize(rho, rng.uniform())
        bad += abs(np.trace(out) - 1) > 1e-12 or not is_hermitian(out, atol=1e-12)
    return bad


CHECKS: dict[str, Callable[[int], int]] = {
    "waveplate unitarity": check_waveplates,
    "core algebra (norms, Pauli round trip, PSD sqrt, phase equality)": check_core_algebra,
    "CU synthesis and norm bookkeeping": check_cu_synthesis,
    "pipeline linearity": check_linearity,
    "remote-control protocol equivalence": check_remote_control,
    "tomography round trip, chi PSD and trace": check_tomography,
    "depolarization trace and Hermiticity": check_noise,
}


def run_all(seed: int = 0) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        violations = int(fn(seed))
        results.append(CheckResult(name, violations, time.perf_counter() - t0))
    return results
