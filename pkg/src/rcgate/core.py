"""Dense complex linear algebra for one- and two-qubit states and operators.

States and operators are plain :class:`numpy.ndarray` objects. Qubit 0 (the
control) is always the most significant tensor factor, so a two-qubit
operator ``kron(a, b)`` acts with ``a`` on the control and ``b`` on the target.
"""

from __future__ import annotations

import itertools

import numpy as np

MAX_DIM = 16

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI_LABELS_1Q = ("I", "X", "Y", "Z")
PAULIS_1Q = np.stack([I2, PAULI_X, PAULI_Y, PAULI_Z])

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
KET_PLUS_I = np.array([1, 1j], dtype=complex) / np.sqrt(2)
KET_MINUS_I = np.array([1, -1j], dtype=complex) / np.sqrt(2)


class NotHermitianError(ValueError):
    """Raised when a matrix expected to be Hermitian (e.g. a chi matrix) is not."""


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` as the most-significant subsystem.

    Both arguments must be of the same kind (two vectors or two square
    matrices). Results larger than two qubits' worth of operator space
    (dimension 16) are rejected.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise ValueError("tensor_product needs two vectors or two matrices")
    if a.ndim == 2 and (a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]):
        raise ValueError("operators must be square")
    for x in (a, b):
        if x.shape[0] not in (2, 4):
            raise ValueError(f"factor dimension {x.shape[0]} not supported (2 or 4)")
    if a.shape[0] * b.shape[0] > MAX_DIM:
        raise ValueError("result dimension exceeds 16")
    return np.kron(a, b)


def ket(*labels: str) -> np.ndarray:
    """Product state from single-qubit labels among ``0 1 + - +i -i``."""
    table = {"0": KET_0, "1": KET_1, "+": KET_PLUS, "-": KET_MINUS, "+i": KET_PLUS_I, "-i": KET_MINUS_I}
    out = np.ones(1, dtype=complex)
    for lab in labels:
        out = np.kron(out, table[lab])
    return out


def projector(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj())


def normalize(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    nrm = np.linalg.norm(state)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return state / nrm


def is_unitary(op: np.ndarray, atol: float = 1e-10) -> bool:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    return bool(np.allclose(op.conj().T @ op, np.eye(op.shape[0]), rtol=0, atol=atol))


def is_hermitian(op: np.ndarray, atol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.allclose(op, op.conj().T, rtol=0, atol=atol))


def n_qubits_of(dim: int) -> int:
    if dim == 2:
        return 1
    if dim == 4:
        return 2
    raise ValueError(f"dimension {dim} is not one or two qubits")


def pauli_basis(n_qubits: int) -> tuple[list[str], np.ndarray]:
    """Labels and matrices of the n-qubit Pauli basis, row-major in I,X,Y,Z.

    For two qubits index ``4*a + b`` is ``sigma_a (x) sigma_b``.
    """
    if n_qubits not in (1, 2):
        raise ValueError("only one or two qubits are supported")
    labels = ["".join(p) for p in itertools.product(PAULI_LABELS_1Q, repeat=n_qubits)]
    mats = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        m = np.ones((1, 1), dtype=complex)
        for i in idx:
            m = np.kron(m, PAULIS_1Q[i])
        mats.append(m)
    return labels, np.stack(mats)


def pauli_expand(op: np.ndarray) -> np.ndarray:
    """Coefficients ``c_m = tr(sigma_m^dag op) / d`` so that ``op = sum c_m sigma_m``."""
    op = np.asarray(op, dtype=complex)
    d = op.shape[0]
    _, basis = pauli_basis(n_qubits_of(d))
    return np.einsum("mji,ji->m", basis.conj(), op) / d


def pauli_reconstruct(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    nq = {4: 1, 16: 2}.get(coeffs.shape[0])
    if nq is None:
        raise ValueError("coefficient vector must have length 4 or 16")
    _, basis = pauli_basis(nq)
    return np.einsum("m,mij->ij", coeffs, basis)


def psd_sqrt(a: np.ndarray, clamp: float = 1e-9) -> np.ndarray:
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues in ``[-clamp, 0)`` are treated as zero. A non-Hermitian input,
    or one with an eigenvalue below ``-clamp``, raises: both indicate a
    corrupted chi matrix upstream.
    """
    a = np.asarray(a, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if not np.allclose(a, a.conj().T, rtol=0, atol=1e-10 * scale):
        raise NotHermitianError("psd_sqrt received a non-Hermitian matrix")
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    if w.min() < -clamp * scale:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def equal_up_to_global_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    """True if ``a`` and ``b`` are unitaries differing only by a global phase."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("operators have different shapes")
    if not (is_unitary(a, atol=max(tol, 1e-10)) and is_unitary(b, atol=max(tol, 1e-10))):
        return False
    overlap = abs(np.trace(a.conj().T @ b)) / a.shape[0]
    return bool(overlap >= 1 - tol)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)
