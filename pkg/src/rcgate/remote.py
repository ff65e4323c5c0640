"""Remote-controlled gates ``alpha U0 + beta U1`` in both protocol variants.

In the state-preparation protocol the control photon is prepared in
``alpha|0> + beta|1>`` and projected onto |+>. In the projection protocol
the control is fixed to |+> and projected onto ``conj(alpha)|0> +
conj(beta)|1>``. The conjugation makes the effective operator ``alpha U0 +
beta U1`` for complex coefficients as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import KET_PLUS, is_unitary
from .interferometer import InterferometerSettings, run_pipeline

ANNIHILATION_THRESHOLD = 1e-14


@dataclass(frozen=True)
class RcCoefficients:
    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-10:
            raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def normalized(cls, alpha: complex, beta: complex) -> "RcCoefficients":
        n = np.hypot(abs(alpha), abs(beta))
        if n == 0:
            raise ValueError("coefficients must not both vanish")
        return cls(alpha / n, beta / n)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


@dataclass(frozen=True)
class RcOutcome:
    """Result of one protocol run on a target state.

    ``output_state`` is None when the input was annihilated.
    ``success_prob`` = ``coincidence_prob * projection_prob``.
    """

    output_state: Optional[np.ndarray]
    success_prob: float
    effective_operator: np.ndarray
    coincidence_prob: float
    projection_prob: float

    @property
    def annihilated(self) -> bool:
        return self.output_state is None


def rc_operator(c: RcCoefficients, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    return c.alpha * np.asarray(u0, dtype=complex) + c.beta * np.asarray(u1, dtype=complex)


def rc_is_unitary(c: RcCoefficients, u0: np.ndarray, u1: np.ndarray) -> bool:
    return is_unitary(rc_operator(c, u0, u1), atol=1e-10)


def run_protocol(
    control: np.ndarray,
    measurement: np.ndarray,
    target: np.ndarray,
    settings: InterferometerSettings,
) -> tuple[np.ndarray, float, float]:
    """Pipeline followed by projection of the control onto ``measurement``.

    Returns the unnormalized target state and the coincidence and total
    click probabilities.
    """
    psi = np.kron(np.asarray(control, dtype=complex), np.asarray(target, dtype=complex))
    kept = run_pipeline(psi, settings).reshape(2, 2)
    coincidence = float(np.vdot(kept, kept).real)
    out = np.asarray(measurement, dtype=complex).conj() @ kept
    return out, coincidence, float(np.vdot(out, out).real)


def _outcome(c, u0, u1, target, control, measurement, settings) -> RcOutcome:
    target = np.asarray(target, dtype=complex)
    if target.shape != (2,) or abs(np.linalg.norm(target) - 1) > 1e-10:
        raise ValueError("target must be a normalized single-qubit state")
    if settings is None:
        settings = InterferometerSettings(u0=u0, u1=u1)
    out, coincidence, total = run_protocol(control, measurement, target, settings)
    op = rc_operator(c, u0, u1)
    cond = total / coincidence if coincidence > 0 else 0.0
    if total < ANNIHILATION_THRESHOLD:
        return RcOutcome(None, 0.0, op, coincidence, 0.0)
    return RcOutcome(out / np.sqrt(total), total, op, coincidence, cond)


def rc_state_prep(
    c: RcCoefficients,
    u0: np.ndarray,
    u1: np.ndarray,
    target: np.ndarray,
    settings: InterferometerSettings | None = None,
) -> RcOutcome:
    return _outcome(c, u0, u1, target, c.vector, KET_PLUS, settings)


def rc_projection(
    c: RcCoefficients,
    u0: np.ndarray,
    u1: np.ndarray,
    target: np.ndarray,
    settings: InterferometerSettings | None = None,
) -> RcOutcome:
    return _outcome(c, u0, u1, target, KET_PLUS, c.vector.conj(), settings)


def protocol_states(c: RcCoefficients, protocol: str) -> tuple[np.ndarray, np.ndarray]:
    """(control preparation, control measurement state) for a protocol name."""
    if protocol == "state-prep":
        return c.vector, KET_PLUS.copy()
    if protocol == "projection":
        return KET_PLUS.copy(), c.vector.conj()
    raise ValueError(f"unknown protocol {protocol!r}")
