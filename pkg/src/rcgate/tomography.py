"""Process tomography: Born-rule tables, count simulation, chi estimators, fidelity.

A channel is written in the Pauli basis as
``E(rho) = sum_mn chi[m, n] sigma_m rho sigma_n^dag``. Post-selected channels
are not trace preserving, so a probability table carries two pieces: the
outcome distribution of each (preparation, setting) row conditioned on a
coincidence, and the row's success weight. Weights are scaled so the best
transmitted input has weight 1, which leaves unitary channels untouched.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng as _rng
from .core import (
    KET_0,
    KET_1,
    KET_MINUS,
    KET_MINUS_I,
    KET_PLUS,
    KET_PLUS_I,
    NotHermitianError,
    n_qubits_of,
    pauli_basis,
    pauli_expand,
    projector,
)


class TomographyError(RuntimeError):
    """Tomography could not produce an estimate (no data, rank-deficient design...)."""


class ConvergenceWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# chi matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChiMatrix:
    """Process matrix in the Pauli basis (4x4 for one qubit, 16x16 for two)."""

    entries: np.ndarray
    trace_normalized: bool = True

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (4, 16):
            raise ValueError(f"chi must be 4x4 or 16x16, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0, atol=1e-10):
            raise NotHermitianError("chi matrix is not Hermitian")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_qubits(self) -> int:
        return 1 if self.dim == 4 else 2

    @property
    def labels(self) -> list[str]:
        return pauli_basis(self.n_qubits)[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def validate(self, psd_tol: float = 1e-8, trace_tol: float = 1e-10) -> None:
        """Raise ``ValueError`` unless PSD and (if flagged) unit trace."""
        if self.eigenvalues().min() < -psd_tol:
            raise ValueError("chi matrix has a negative eigenvalue")
        if self.trace_normalized and abs(self.trace - 1) > trace_tol:
            raise ValueError(f"chi trace is {self.trace}, expected 1")

    def element(self, row: str, col: str) -> complex:
        labels = self.labels
        return complex(self.entries[labels.index(row), labels.index(col)])

    def to_dict(self) -> dict:
        """Row-major ``[re, im]`` pairs plus basis labels, dimension and trace flag."""
        return {
            "dimension": self.dim,
            "basis": self.labels,
            "trace_normalized": self.trace_normalized,
            "entries": [[float(z.real), float(z.imag)] for z in self.entries.ravel()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChiMatrix":
        dim = int(data["dimension"])
        pairs = np.asarray(data["entries"], dtype=float)
        if pairs.shape != (dim * dim, 2):
            raise ValueError("chi serialization has the wrong number of entries")
        m = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim)
        chi = cls(m, bool(data.get("trace_normalized", True)))
        if list(data.get("basis", chi.labels)) != chi.labels:
            raise ValueError("unexpected Pauli basis labels")
        return chi


def ideal_chi(op: np.ndarray) -> ChiMatrix:
    """Rank-1 chi ``v v^dag / (v^dag v)`` of the single-Kraus channel ``rho -> op rho op^dag``."""
    v = pauli_expand(op)
    nrm = float(np.vdot(v, v).real)
    if nrm < 1e-300:
        raise ValueError("zero operator has no process matrix")
    return ChiMatrix(np.outer(v, v.conj()) / nrm)


def _trimmed_sqrt(m: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    # eigenvalues at round-off level would otherwise enter as their square roots
    w, v = np.linalg.eigh(m)
    w = np.where(w > rel * w[-1], w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def process_fidelity(a: ChiMatrix, b: ChiMatrix) -> float:
    """``[tr sqrt(sqrt(a) b sqrt(a))]^2`` for trace-normalized chi matrices."""
    if a.dim != b.dim:
        raise ValueError("chi matrices have different dimensions")
    for chi in (a, b):
        if not chi.trace_normalized:
            raise ValueError("process_fidelity needs trace-normalized chi matrices")
        chi.validate()
    # A rank-1 argument v v^dag reduces the formula to v^dag (other) v, which
    # avoids square roots of round-off eigenvalues.
    for x, y in ((a, b), (b, a)):
        w, v = np.linalg.eigh(x.entries)
        if w[-2] <= 1e-13 * w[-1]:
            top = v[:, -1]
            f = float(w[-1] * np.vdot(top, y.entries @ top).real)
            break
    else:
        # sqrt(F) is the nuclear norm of sqrt(a) sqrt(b); singular values are
        # accurate to machine precision, unlike eigenvalues of sa b sa.
        sv = np.linalg.svd(_trimmed_sqrt(a.entries) @ _trimmed_sqrt(b.entries), compute_uv=False)
        f = float(np.sum(sv) ** 2)
    if f > 1 + 1e-9:
        raise ValueError(f"fidelity {f} exceeds 1; inputs are inconsistent")
    return min(max(f, 0.0), 1.0)


# ---------------------------------------------------------------------------
# experimental design
# ---------------------------------------------------------------------------

PREP_STATES_1Q = (KET_0, KET_1, KET_PLUS, KET_PLUS_I)
PREP_LABELS_1Q = ("0", "1", "+", "+i")
MEAS_BASES_1Q = {
    "X": (KET_PLUS, KET_MINUS),
    "Y": (KET_PLUS_I, KET_MINUS_I),
    "Z": (KET_0, KET_1),
}


@dataclass(frozen=True, eq=False)
class TomographyDesign:
    """Preparations (pure states) and projective measurement settings.

    ``meas_settings[j][k]`` is the ket whose projector is outcome ``k`` of
    setting ``j``; every setting is a complete orthonormal basis.
    """

    preps: list[np.ndarray]
    meas_settings: list[list[np.ndarray]]
    prep_labels: list[str] = field(default_factory=list)
    setting_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        dims = {np.asarray(p).shape[0] for p in self.preps}
        for setting in self.meas_settings:
            dims |= {np.asarray(k).shape[0] for k in setting}
        if len(dims) != 1:
            raise ValueError("preparations and measurements have inconsistent dimensions")
        d = dims.pop()
        n_qubits_of(d)
        for setting in self.meas_settings:
            if len(setting) != d:
                raise ValueError("each measurement setting must have d outcomes")
            basis = np.array(setting, dtype=complex)
            if not np.allclose(basis @ basis.conj().T, np.eye(d), atol=1e-10):
                raise ValueError("measurement setting is not an orthonormal basis")

    @property
    def dim(self) -> int:
        return int(np.asarray(self.preps[0]).shape[0])

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.preps), len(self.meas_settings), self.dim

    @cached_property
    def prep_density(self) -> np.ndarray:
        return np.array([projector(p) for p in self.preps])

    @cached_property
    def meas_projectors(self) -> np.ndarray:
        return np.array([[projector(k) for k in s] for s in self.meas_settings])

    @cached_property
    def born_tensor(self) -> np.ndarray:
        """``B[i, j, k, m, n] = tr(Pi_jk sigma_m rho_i sigma_n^dag)``."""
        _, sig = pauli_basis(self.n_qubits)
        # sigma_n^dag Pi sigma_m, then contract with rho
        left = np.einsum("nba,jkbc,mcd->jknmad", sig.conj(), self.meas_projectors, sig, optimize=True)
        return np.einsum("jknmad,ida->ijkmn", left, self.prep_density, optimize=True)

    @cached_property
    def born_matrix(self) -> np.ndarray:
        p, m, k = self.shape
        d2 = self.dim**2
        return self.born_tensor.reshape(p * m * k, d2 * d2)

    @cached_property
    def real_born_matrix(self) -> np.ndarray:
        """Real matrix mapping Hermitian coordinates of chi to cell probabilities.

        Coordinates are ``[diag, Re(strict lower), Im(strict lower)]``.
        """
        d2 = self.dim**2
        a = self.born_matrix
        diag = np.arange(d2)
        lr, lc = np.tril_indices(d2, -1)
        ab = a[:, lr * d2 + lc]
        ba = a[:, lc * d2 + lr]
        return np.hstack([a[:, diag * d2 + diag].real, (ab + ba).real, (1j * (ab - ba)).real])


def standard_design(n_qubits: int) -> TomographyDesign:
    """Preparations 0, 1, +, +i and Pauli X, Y, Z measurements on every qubit."""
    if n_qubits not in (1, 2):
        raise ValueError("only one- or two-qubit tomography is supported")
    preps, prep_labels = [], []
    for combo in itertools.product(range(4), repeat=n_qubits):
        state = np.ones(1, dtype=complex)
        for c in combo:
            state = np.kron(state, PREP_STATES_1Q[c])
        preps.append(state)
        prep_labels.append(",".join(PREP_LABELS_1Q[c] for c in combo))
    settings, setting_labels = [], []
    for combo in itertools.product("XYZ", repeat=n_qubits):
        kets = []
        for outcome in itertools.product(range(2), repeat=n_qubits):
            state = np.ones(1, dtype=complex)
            for basis, o in zip(combo, outcome):
                state = np.kron(state, MEAS_BASES_1Q[basis][o])
            kets.append(state)
        settings.append(kets)
        setting_labels.append("".join(combo))
    return TomographyDesign(preps, settings, prep_labels, setting_labels)


# ---------------------------------------------------------------------------
# probabilities and counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BornTable:
    """Conditional outcome probabilities ``probs[i, j, k]`` and row weights ``weights[i, j]``."""

    probs: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_raw(cls, raw: np.ndarray, scale: float | None = None) -> "BornTable":
        """Split unnormalized probabilities into conditional rows and weights.

        ``scale`` is the weight assigned the value 1; by default the largest
        row sum in the table.
        """
        raw = np.asarray(raw, dtype=float)
        # round-off residue of exact zeros would otherwise look like tiny events
        raw = np.where(raw > 1e-14 * max(float(raw.max()), 0.0), raw, 0.0)
        sums = raw.sum(axis=-1)
        if scale is None:
            scale = float(sums.max())
        if scale <= 0:
            raise ValueError("probability table is identically zero")
        probs = np.divide(raw, sums[..., None], out=np.zeros_like(raw), where=sums[..., None] > 1e-14)
        weights = np.where(sums > 1e-14, sums / scale, 0.0)
        return cls(probs, weights)

    @property
    def unconditional(self) -> np.ndarray:
        return self.probs * self.weights[..., None]


def channel_output_weight_scale(chi_entries: np.ndarray) -> float:
    """Largest success probability over inputs: top eigenvalue of ``sum chi_mn sigma_n^dag sigma_m``."""
    d2 = chi_entries.shape[0]
    _, sig = pauli_basis(1 if d2 == 4 else 2)
    dual = np.einsum("mn,nba,mbc->ac", chi_entries, sig.conj(), sig)
    return float(np.linalg.eigvalsh((dual + dual.conj().T) / 2).max())


def born_probabilities(channel, design: TomographyDesign) -> BornTable:
    """Born-rule table ``tr(Pi_k E(rho_i))`` for a chi matrix or a single Kraus operator."""
    if isinstance(channel, ChiMatrix):
        chi = channel
        if chi.eigenvalues().min() < -1e-8:
            raise ValueError("chi matrix is not positive semidefinite")
    else:
        op = np.asarray(channel, dtype=complex)
        if op.shape != (design.dim, design.dim):
            raise ValueError("operator dimension does not match the design")
        v = pauli_expand(op)
        chi = ChiMatrix(np.outer(v, v.conj()), trace_normalized=False)
    if chi.n_qubits != design.n_qubits:
        raise ValueError("channel dimension does not match the design")
    raw = np.einsum("ijkmn,mn->ijk", design.born_tensor, chi.entries).real
    return BornTable.from_raw(raw, scale=channel_output_weight_scale(chi.entries))


@dataclass(frozen=True, eq=False)
class CountTable:
    """Coincidence counts ``counts[prep, setting, outcome]``.

    Counts are integers for simulated data; float "counts" (expected values)
    are accepted to feed exact frequencies to the estimators.
    """

    counts: np.ndarray
    shots_per_setting: int
    seed: int | None = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 3:
            raise ValueError("counts must be indexed by (prep, setting, outcome)")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        if self.shots_per_setting < 1:
            raise ValueError("shots_per_setting must be positive")

    @property
    def total(self) -> float:
        return float(np.sum(self.counts))

    def to_dict(self) -> dict:
        return {
            "shots_per_setting": int(self.shots_per_setting),
            "seed": self.seed,
            "shape": list(np.shape(self.counts)),
            "counts": np.asarray(self.counts).ravel().tolist(),
        }


def simulate_counts(probabilities, shots: int, seed: int) -> CountTable:
    """Poisson coincidence counts with mean ``shots * weight * p``.

    Each cell is drawn from its own stream keyed by ``(seed, i, j, k)``, so a
    table is reproducible cell by cell.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    means = _as_means(probabilities) * shots
    counts = _rng.keyed_poisson(means, _rng.COUNTS, seed)
    return CountTable(counts, int(shots), seed)


def expected_counts(probabilities, shots: int) -> CountTable:
    """Noise-free "counts": the Poisson means themselves."""
    return CountTable(_as_means(probabilities) * shots, int(shots), None)


def _as_means(probabilities) -> np.ndarray:
    if isinstance(probabilities, BornTable):
        return probabilities.unconditional
    p = np.asarray(probabilities, dtype=float)
    if p.ndim == 1:
        p = p[None, None, :]
    sums = p.sum(axis=-1)
    if np.any(p < 0) or np.any((sums > 1e-12) & (np.abs(sums - 1) > 1e-9)):
        raise ValueError("probability rows must be normalized (or all zero)")
    return p


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _count_array(counts, design: TomographyDesign) -> np.ndarray:
    c = np.asarray(counts.counts if isinstance(counts, CountTable) else counts, dtype=float)
    if c.shape != design.shape:
        raise ValueError(f"counts shape {c.shape} does not match design {design.shape}")
    return c


def linear_inversion_chi(counts, design: TomographyDesign) -> ChiMatrix:
    """Least-squares solution of the linear Born system, Hermitized and trace-normalized.

    With noisy counts the result may have small negative eigenvalues.
    """
    c = _count_array(counts, design).ravel()
    if c.sum() <= 0:
        raise TomographyError("no counts to invert")
    a = design.born_matrix
    sol, _, rank, _ = np.linalg.lstsq(a, c.astype(complex), rcond=None)
    if rank < a.shape[1]:
        raise TomographyError(f"design is not informationally complete (rank {rank} < {a.shape[1]})")
    d2 = design.dim**2
    m = sol.reshape(d2, d2)
    m = (m + m.conj().T) / 2
    tr = np.trace(m).real
    if tr <= 0:
        raise TomographyError("linear inversion produced a non-positive trace")
    return ChiMatrix(m / tr)


@dataclass
class MleResult:
    chi: ChiMatrix
    converged: bool
    iterations: int
    grad_norm: float
    log_likelihood: float


def _chi_to_factor(chi: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with real diagonal and ``L^dag L = chi`` (chi positive definite)."""
    c = np.linalg.cholesky(chi[::-1, ::-1])
    lower = c[::-1, ::-1].conj().T
    # move the diagonal phases into the columns above so the diagonal is real
    ph = np.exp(-1j * np.angle(np.diag(lower)))
    return ph[:, None] * lower


def _psd_start(chi: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    w, v = np.linalg.eigh((chi + chi.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    w = w / w.sum() if w.sum() > 0 else np.full_like(w, 1.0 / len(w))
    w = (1 - floor) * w + floor / len(w)
    return (v * w) @ v.conj().T


class _CholeskyLikelihood:
    """Mean log-likelihood of a count table under ``chi = L^dag L / tr(L^dag L)``.

    The table is one multinomial over all cells (the overall rate is profiled
    out), which is what lets post-selected, non-trace-preserving channels be
    fitted. ``L`` is lower triangular with a real diagonal; its real
    coordinates ``x = [diag, Re(strict lower), Im(strict lower)]`` match the
    real Hermitian coordinates ``r`` of chi one to one.
    """

    def __init__(self, counts: np.ndarray, design: TomographyDesign):
        d2 = design.dim**2
        self.d2 = d2
        n = counts.ravel()
        self.freq = n / n.sum()
        self.mask = n > 0
        self.a = design.real_born_matrix
        self.col_sum = self.a.sum(axis=0)
        self.diag = np.arange(d2)
        self.lo_r, self.lo_c = np.tril_indices(d2, -1)
        n_lo = len(self.lo_r)
        self.prow = np.concatenate([self.diag, self.lo_r, self.lo_r])
        self.pcol = np.concatenate([self.diag, self.lo_c, self.lo_c])
        self.pcoef = np.concatenate([np.ones(d2 + n_lo), np.full(n_lo, 1j)])
        self.same_row = self.prow[:, None] == self.prow[None, :]
        self.coef_outer = np.conj(self.pcoef)[:, None] * self.pcoef[None, :]

    def factor(self, x: np.ndarray) -> np.ndarray:
        lower = np.zeros((self.d2, self.d2), dtype=complex)
        np.add.at(lower, (self.prow, self.pcol), self.pcoef * x)
        return lower

    def coords(self, lower: np.ndarray) -> np.ndarray:
        lo = lower[self.lo_r, self.lo_c]
        return np.concatenate([lower[self.diag, self.diag].real, lo.real, lo.imag])

    def _herm_coords(self, m: np.ndarray) -> np.ndarray:
        lo = m[..., self.lo_r, self.lo_c]
        return np.concatenate([m[..., self.diag, self.diag].real, lo.real, lo.imag], axis=-1)

    def chi(self, x: np.ndarray) -> np.ndarray:
        lower = self.factor(x)
        m = lower.conj().T @ lower
        return m / np.trace(m).real

    def value(self, x: np.ndarray) -> float:
        lower = self.factor(x)
        p = self.a @ self._herm_coords(lower.conj().T @ lower)
        pk = p[self.mask]
        if np.any(pk <= 0):
            return -np.inf
        return float(self.freq[self.mask] @ np.log(pk) - np.log(p.sum()))

    def derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian with respect to ``x``."""
        lower = self.factor(x)
        r = self._herm_coords(lower.conj().T @ lower)
        p = self.a @ r
        s = p.sum()
        pk = p[self.mask]
        if np.any(pk <= 0):
            raise FloatingPointError("likelihood evaluated outside its domain")
        val = float(self.freq[self.mask] @ np.log(pk) - np.log(s))
        fp = np.zeros_like(p)
        fp[self.mask] = self.freq[self.mask] / pk
        grad_r = self.a.T @ fp - self.col_sum / s
        fpp = np.zeros_like(p)
        fpp[self.mask] = fp[self.mask] / pk
        hess_r = -(self.a.T * fpp) @ self.a + np.outer(self.col_sum, self.col_sum) / s**2

        # Jacobian dr/dx: dM = dL^dag L + L^dag dL for each unit coordinate
        n_par = len(x)
        dm = np.zeros((n_par, self.d2, self.d2), dtype=complex)
        idx = np.arange(n_par)
        rows = lower[self.prow, :]
        dm[idx, self.pcol, :] += np.conj(self.pcoef)[:, None] * rows
        dm[idx, :, self.pcol] += self.pcoef[:, None] * np.conj(rows)
        jac = self._herm_coords(dm).T

        # second-order term: Hessian of x -> tr(G L^dag L) with G dual to grad_r
        g_mat = np.zeros((self.d2, self.d2), dtype=complex)
        g_mat[self.diag, self.diag] = grad_r[: self.d2]
        n_lo = len(self.lo_r)
        w = grad_r[self.d2 : self.d2 + n_lo] + 1j * grad_r[self.d2 + n_lo :]
        g_mat[self.lo_c, self.lo_r] = np.conj(w) / 2
        g_mat[self.lo_r, self.lo_c] = w / 2
        second = self.coef_outer * g_mat[self.pcol[None, :], self.pcol[:, None]]
        second = 2 * np.where(self.same_row, second.real, 0.0)

        grad = jac.T @ grad_r
        hess = jac.T @ hess_r @ jac + second
        return val, grad, hess


def _newton_direction(grad: np.ndarray, hess: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Saddle-free Newton ascent direction on the tangent of the unit sphere at ``x``.

    Curvatures enter by absolute value, so negative-curvature directions of
    the (non-concave) factor parameterization still yield ascent without
    damping the weakly curved ones.
    """
    xh = x / np.linalg.norm(x)
    g = grad - xh * (xh @ grad)
    neg = -hess
    hx = neg @ xh
    neg = neg - np.outer(xh, hx) - np.outer(hx, xh) + (xh @ hx) * np.outer(xh, xh)
    top = float(np.abs(neg).max()) or 1.0
    try:
        c = np.linalg.cholesky(neg + top * (np.outer(xh, xh) + 1e-12 * np.eye(len(x))))
        d = np.linalg.solve(c.T, np.linalg.solve(c, g))
    except np.linalg.LinAlgError:
        lam, vec = np.linalg.eigh(neg)
        curv = np.maximum(np.abs(lam), 1e-12 * top)
        d = vec @ ((vec.T @ g) / curv)
    return d - xh * (xh @ d)


def mle_fit(
    counts,
    design: TomographyDesign,
    *,
    start: ChiMatrix | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> MleResult:
    """Maximum-likelihood chi over a Cholesky factor ``chi = L^dag L / tr(L^dag L)``.

    Ascent steps are damped Newton directions accepted by an Armijo
    backtracking line search; a fully accepted step is also tried at
    doubled length, which matters when the optimum sits on the PSD
    boundary. ``L`` is kept at unit norm since the likelihood ignores its
    scale. Convergence means the gradient norm (of the log-likelihood per
    count) drops below ``tol``.
    """
    c = _count_array(counts, design)
    if c.sum() <= 0:
        raise TomographyError("all counts are zero")
    lik = _CholeskyLikelihood(c, design)
    if start is None:
        start = linear_inversion_chi(c, design)
    x = lik.coords(_chi_to_factor(_psd_start(start.entries)))
    x /= np.linalg.norm(x)

    val, grad, hess = lik.derivatives(x)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        d = _newton_direction(grad, hess, x)
        slope = float(grad @ d)
        step, new_x, new_val = 1.0, x, val
        while step > 1e-12:
            new_x = x + step * d
            new_val = lik.value(new_x)
            if new_val >= val + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            # Near the optimum the predicted gain can fall below the float
            # resolution of the objective; judge the Newton step by the
            # gradient norm instead before giving up.
            if slope > 1e-13 * (1.0 + abs(val)):
                break
            trial = x + d
            trial /= np.linalg.norm(trial)
            try:
                tv, tg, th = lik.derivatives(trial)
            except FloatingPointError:
                break
            if np.linalg.norm(tg) >= gnorm:
                break
            x, val, grad, hess = trial, tv, tg, th
            gnorm = float(np.linalg.norm(grad))
            continue
        if step == 1.0:
            while step < 64:
                trial = x + 2 * step * d
                tval = lik.value(trial)
                if tval <= new_val:
                    break
                new_x, new_val, step = trial, tval, 2 * step
        try:
            derivs = lik.derivatives(new_x / np.linalg.norm(new_x))
        except FloatingPointError:
            break  # rescaling pushed a probability through zero; keep x
        x = new_x / np.linalg.norm(new_x)
        val, grad, hess = derivs
        gnorm = float(np.linalg.norm(grad))

    return MleResult(ChiMatrix(lik.chi(x)), gnorm < tol, it, gnorm, val)


def mle_chi(counts, design: TomographyDesign, **kwargs) -> ChiMatrix:
    """Maximum-likelihood chi; warns with :class:`ConvergenceWarning` on non-convergence."""
    res = mle_fit(counts, design, **kwargs)
    if not res.converged:
        warnings.warn(
            f"MLE stopped after {res.iterations} iterations with gradient norm {res.grad_norm:.2e}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return res.chi


# ---------------------------------------------------------------------------
# Monte-Carlo error bars
# ---------------------------------------------------------------------------


@dataclass
class BootstrapResult:
    mean: float
    std: float
    fidelities: np.ndarray
    excluded: int

    def __iter__(self):
        return iter((self.mean, self.std))

    def formatted(self) -> str:
        return f"{self.mean:.3f}±{self.std:.3f}"


def bootstrap_fidelity(
    counts: CountTable,
    design: TomographyDesign,
    ideal: ChiMatrix,
    n_trials: int = 100,
    *,
    seed: int | None = None,
    workers: int = 1,
    start: ChiMatrix | None = None,
) -> BootstrapResult:
    """Fidelity mean and sample std over Poisson resamplings of the observed counts.

    Trial ``t`` resamples cell ``(i, j, k)`` from the stream keyed by
    ``(seed, t, i, j, k)``; results are independent of ``workers``.
    Trials whose fit does not converge are excluded.
    """
    if n_trials < 2:
        raise ValueError("bootstrap needs at least two trials")
    observed = _count_array(counts, design)
    if seed is None:
        seed = counts.seed if counts.seed is not None else 0
    if start is None:
        start = mle_fit(observed, design).chi

    def trial(t: int) -> float:
        resampled = _rng.keyed_poisson(observed, _rng.BOOTSTRAP, seed, t)
        if resampled.sum() == 0:
            return math.nan
        res = mle_fit(resampled, design, start=start)
        return process_fidelity(res.chi, ideal) if res.converged else math.nan

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fids = np.array(list(pool.map(trial, range(n_trials))))
    else:
        fids = np.array([trial(t) for t in range(n_trials)])
    ok = ~np.isnan(fids)
    excluded = int(n_trials - ok.sum())
    if ok.sum() < 2:
        raise TomographyError("fewer than two bootstrap trials converged")
    if excluded > 0.1 * n_trials:
        warnings.warn(f"{excluded} of {n_trials} bootstrap fits did not converge", ConvergenceWarning, stacklevel=2)
    return BootstrapResult(float(fids[ok].mean()), float(fids[ok].std(ddof=1)), fids, excluded)
