"""Jones matrices for waveplates, the fixed gate library and waveplate-angle solvers.

A waveplate with its fast axis at angle theta from horizontal is
``R(theta) diag(1, exp(i delta)) R(-theta)`` with retardance ``delta = pi``
(half wave) or ``pi/2`` (quarter wave); global phases are dropped.
Polarization |H> is the computational |0>. Angles are given in degrees.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .core import I2, KET_0, PAULI_X, PAULI_Y, PAULI_Z, equal_up_to_global_phase


def rotation(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]], dtype=complex)


def waveplate(theta_deg: float, retardance: float) -> np.ndarray:
    if not np.isfinite(theta_deg):
        raise ValueError("waveplate angle must be finite")
    r = rotation(theta_deg)
    return r @ np.diag([1.0, np.exp(1j * retardance)]) @ r.T


def hwp(theta_deg: float) -> np.ndarray:
    """Half-wave plate, ``[[cos 2t, sin 2t], [sin 2t, -cos 2t]]``."""
    return waveplate(theta_deg, np.pi)


def qwp(theta_deg: float) -> np.ndarray:
    return waveplate(theta_deg, np.pi / 2)


def normalize_angle(theta_deg: float) -> float:
    """Map an angle into [-90, 90); waveplates are 180-degree periodic."""
    a = (float(theta_deg) + 90.0) % 180.0 - 90.0
    return 0.0 if a == 0 else a


@dataclass(frozen=True)
class WaveplateSetting:
    """A half-wave plate followed (for preparation) by a quarter-wave plate.

    For a projection the beam meets the quarter-wave plate first, then the
    half-wave plate, then a polarizing beam splitter transmitting |H>.
    """

    hwp_angle: float = 0.0
    qwp_angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hwp_angle", normalize_angle(self.hwp_angle))
        object.__setattr__(self, "qwp_angle", normalize_angle(self.qwp_angle))

    def preparation_operator(self) -> np.ndarray:
        return qwp(self.qwp_angle) @ hwp(self.hwp_angle)

    def prepared_state(self) -> np.ndarray:
        """State leaving the plates when |H> = |0> enters."""
        return self.preparation_operator() @ KET_0

    def measured_state(self) -> np.ndarray:
        """The state whose projector the QWP, HWP, PBS sequence implements."""
        return (hwp(self.hwp_angle) @ qwp(self.qwp_angle)).conj().T @ KET_0


# ---------------------------------------------------------------------------
# gate library
# ---------------------------------------------------------------------------


class GateName(str, enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"
    S = "S"
    T = "T"
    Tdag = "Tdag"
    H = "H"
    CNOT = "CNOT"
    CS = "CS"


_P0 = np.diag([1, 0]).astype(complex)
_P1 = np.diag([0, 1]).astype(complex)
_S = np.diag([1, 1j])
_T = np.diag([1, np.exp(1j * np.pi / 4)])

_LIBRARY = {
    GateName.I: I2,
    GateName.X: PAULI_X,
    GateName.Y: PAULI_Y,
    GateName.Z: PAULI_Z,
    GateName.S: _S,
    GateName.T: _T,
    GateName.Tdag: _T.conj().T,
    GateName.H: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    GateName.CNOT: np.kron(_P0, I2) + np.kron(_P1, PAULI_X),
    GateName.CS: np.kron(_P0, I2) + np.kron(_P1, _S),
}


def gate(name: GateName | str) -> np.ndarray:
    try:
        key = GateName(name)
    except ValueError:
        raise ValueError(f"unknown gate {name!r}") from None
    return _LIBRARY[key].copy()


# Waveplate sequences in beam order, [(kind, angle_deg), ...].
# QWP(45) HWP(t) QWP(45) is diag(1, exp(i pi (t/45 - 1))) up to phase, so S
# needs t = 67.5 and T needs t = 56.25. With t = 45 the sandwich is the
# identity.
Recipe = tuple[tuple[str, float], ...]

WAVEPLATE_RECIPES: dict[GateName, Recipe] = {
    GateName.I: (),
    GateName.X: (("hwp", 45.0),),
    GateName.Z: (("hwp", 0.0),),
    GateName.Y: (("hwp", 0.0), ("hwp", 45.0)),
    GateName.H: (("hwp", 22.5),),
    GateName.S: (("qwp", 45.0), ("hwp", 67.5), ("qwp", 45.0)),
    GateName.T: (("qwp", 45.0), ("hwp", 56.25), ("qwp", 45.0)),
}


def recipe_operator(recipe: Sequence[tuple[str, float]]) -> np.ndarray:
    """Jones matrix of a waveplate sequence; the first element is met first."""
    op = I2.copy()
    for kind, angle in recipe:
        if kind == "hwp":
            plate = hwp(angle)
        elif kind == "qwp":
            plate = qwp(angle)
        else:
            raise ValueError(f"unknown waveplate kind {kind!r}")
        op = plate @ op
    return op


def cs_decomposition(outer: np.ndarray | None = None, inner: np.ndarray | None = None) -> np.ndarray:
    """``(outer (x) outer) . CNOT . (I (x) inner) . CNOT``; T and T^dag by default."""
    outer = gate(GateName.T) if outer is None else outer
    inner = gate(GateName.Tdag) if inner is None else inner
    cx = gate(GateName.CNOT)
    return np.kron(outer, outer) @ cx @ np.kron(I2, inner) @ cx


def verify_cs_decomposition() -> bool:
    """True iff two T gates, one T^dag and two CNOTs compose to CS up to phase."""
    return equal_up_to_global_phase(cs_decomposition(), gate(GateName.CS), tol=1e-12)


# ---------------------------------------------------------------------------
# angle solvers
# ---------------------------------------------------------------------------


class WaveplateSolveError(RuntimeError):
    pass


# 5-degree grid ordered outward from 0 so ties resolve to the simplest setting
_GRID = np.array(sorted(np.arange(-90.0, 90.0, 5.0), key=lambda a: (abs(a), a)))


def _qwp_columns(q: np.ndarray, h: np.ndarray, adjoint: bool) -> np.ndarray:
    """``qwp(q) hwp(h) |0>`` (or with ``qwp(q)^dag``) for broadcast angle arrays, shape (..., 2)."""
    v = np.stack([np.cos(2 * np.deg2rad(h)), np.sin(2 * np.deg2rad(h))], axis=-1).astype(complex)
    t = np.deg2rad(q)
    c, s_ = np.cos(t), np.sin(t)
    e = -1j if adjoint else 1j
    m00 = c * c + e * s_ * s_
    m11 = s_ * s_ + e * c * c
    m01 = (1 - e) * c * s_
    return np.stack([m00 * v[..., 0] + m01 * v[..., 1], m01 * v[..., 0] + m11 * v[..., 1]], axis=-1)


def _solve(target: np.ndarray, adjoint: bool) -> WaveplateSetting:
    target = np.asarray(target, dtype=complex)
    if target.shape != (2,) or abs(np.linalg.norm(target) - 1) > 1e-10:
        raise ValueError("target must be a normalized single-qubit state")

    def state_of(h, q):
        return _qwp_columns(np.asarray(q), np.asarray(h), adjoint)

    def residual(angles):
        return float(1.0 - abs(np.vdot(target, state_of(*angles))) ** 2)

    def amplitude_residual(angles):
        st = state_of(*angles)
        ov = np.vdot(target, st)
        diff = st * (np.conj(ov) / abs(ov) if abs(ov) > 0 else 1.0) - target
        return np.concatenate([diff.real, diff.imag])

    hh, qq = np.meshgrid(_GRID, _GRID, indexing="ij")
    res = 1.0 - np.abs(_qwp_columns(qq, hh, adjoint) @ target.conj()) ** 2
    # refine from the first near-solution in grid order (smallest angles),
    # falling back to the best grid point
    near = np.flatnonzero(res.ravel() < 1e-2)
    best = (0.0, 0.0)
    for k in ([int(near[0])] if near.size else []) + [int(np.argmin(res))]:
        start = (float(hh.flat[k]), float(qq.flat[k]))
        if residual(start) > 1e-14:
            # least squares on the phase-aligned amplitudes converges quadratically;
            # the fidelity residual would only give half the digits
            start = tuple(optimize.least_squares(amplitude_residual, np.array(start),
                                                 xtol=1e-15, ftol=1e-15, gtol=1e-15).x)
        best = start
        if residual(best) < 1e-14:
            break
    if residual(best) > 1e-6:
        raise WaveplateSolveError(f"no waveplate setting reaches the target (residual {residual(best):.2e})")
    return WaveplateSetting(*best)


def solve_prep_angles(target: np.ndarray) -> WaveplateSetting:
    """HWP/QWP angles with ``qwp(q) hwp(h) |0> = target`` up to a global phase."""
    return _solve(target, adjoint=False)


def solve_projection_angles(target: np.ndarray) -> WaveplateSetting:
    """QWP/HWP angles whose projection (after the PBS) is onto ``target``.

    The measured state is ``(hwp(h) qwp(q))^dag |0> = qwp(q)^dag hwp(h) |0>``.
    """
    return _solve(target, adjoint=True)


def prep_residual(setting: WaveplateSetting, target: np.ndarray) -> float:
    return float(1.0 - abs(np.vdot(target, setting.prepared_state())) ** 2)
