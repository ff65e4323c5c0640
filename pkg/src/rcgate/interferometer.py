"""Dual-degree-of-freedom photon model of the UMI + UMZI controlled-unitary.

Each photon carries polarization (the qubit) and a time bin, short ``s`` or
long ``l``. Amplitudes are stored as ``amps[pc, bc, pt, bt]`` where ``p*`` is
polarization and ``b*`` is the bin (0 = s, 1 = l) of the control and target
photons.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import I2, is_unitary
from .jones import Recipe, recipe_operator

SHORT, LONG = 0, 1

# Both beam splitters; only output port 0 is monitored by the detector.
BEAM_SPLITTER = np.array([[1, 1], [1, -1]], dtype=float) / np.sqrt(2)


class InterferometerError(ValueError):
    pass


@dataclass(frozen=True)
class InterferometerSettings:
    """Path unitaries and phases.

    ``u0`` acts in the short UMZI arm, ``u1`` in the long one. When a recipe
    is given the unitary is built from it (so waveplate misset noise can be
    applied to the individual plates).
    """

    u0: np.ndarray = field(default_factory=lambda: I2.copy())
    u1: np.ndarray = field(default_factory=lambda: I2.copy())
    umi_phase: float = 0.0
    umzi_phase: float = 0.0
    path_delta_m: float = 1.875
    umzi_delta_m: float = 3.75
    u0_recipe: Recipe | None = None
    u1_recipe: Recipe | None = None

    def __post_init__(self):
        for name in ("u0", "u1"):
            rec = getattr(self, name + "_recipe")
            if rec is not None:
                object.__setattr__(self, name + "_recipe", tuple((k, float(a)) for k, a in rec))
                object.__setattr__(self, name, recipe_operator(rec))
            u = np.array(getattr(self, name), dtype=complex)
            if u.shape != (2, 2) or not is_unitary(u, atol=1e-10):
                raise InterferometerError(f"{name} must be a 2x2 unitary")
            u.setflags(write=False)
            object.__setattr__(self, name, u)
        if not (np.isfinite(self.umi_phase) and np.isfinite(self.umzi_phase)):
            raise InterferometerError("phases must be finite")
        if self.path_delta_m <= 0 or self.umzi_delta_m <= 0:
            raise InterferometerError("path differences must be positive")

    @classmethod
    def from_recipes(cls, u0_recipe: Recipe, u1_recipe: Recipe, **kw) -> "InterferometerSettings":
        return cls(u0_recipe=tuple(u0_recipe), u1_recipe=tuple(u1_recipe), **kw)

    def with_recipes(self, u0_recipe: Recipe | None, u1_recipe: Recipe | None) -> "InterferometerSettings":
        kw = {}
        if u0_recipe is not None:
            kw["u0_recipe"] = tuple(u0_recipe)
        if u1_recipe is not None:
            kw["u1_recipe"] = tuple(u1_recipe)
        return replace(self, **kw)


@dataclass(frozen=True)
class DualDofState:
    amplitudes: np.ndarray
    umi_done: bool = False
    umzi_done: bool = False

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (2, 2, 2, 2):
            raise InterferometerError("amplitudes must have shape (2, 2, 2, 2)")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_polarization(cls, psi: np.ndarray) -> "DualDofState":
        """Both photons in the short bin, polarization ``psi`` (control first)."""
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        if psi.shape != (4,):
            raise InterferometerError("two-qubit polarization state expected")
        amps = np.zeros((2, 2, 2, 2), dtype=complex)
        amps[:, SHORT, :, SHORT] = psi.reshape(2, 2)
        return cls(amps)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def propagate_umi(state: DualDofState, settings: InterferometerSettings) -> DualDofState:
    """PBS-based UMI on the control photon: |0> keeps its bin, |1> is delayed to ``l``."""
    if state.umi_done:
        raise InterferometerError("UMI already applied")
    a = state.amplitudes
    if np.any(a[:, LONG] != 0):
        raise InterferometerError("control photon must enter the UMI in the short bin")
    out = np.zeros_like(a)
    out[0, SHORT] = a[0, SHORT]
    out[1, LONG] = np.exp(1j * settings.umi_phase) * a[1, SHORT]
    return DualDofState(out, umi_done=True, umzi_done=state.umzi_done)


def propagate_umzi(state: DualDofState, settings: InterferometerSettings) -> DualDofState:
    """Target photon through the unbalanced Mach-Zehnder, monitoring one output port.

    The first beam splitter sends the target into the short arm (``u0``) or
    the long arm (``u1`` plus ``umzi_phase``). The second one recombines them.
    Keeping output port 0 gives each arm a real amplitude factor of 1/2.
    """
    if state.umzi_done:
        raise InterferometerError("UMZI already applied")
    a = state.amplitudes
    if np.any(a[..., LONG] != 0):
        raise InterferometerError("target photon must enter the UMZI in the short bin")
    inp = a[..., SHORT]  # [pc, bc, pt]
    to_short = BEAM_SPLITTER[0, 0] * BEAM_SPLITTER[0, 0]
    to_long = BEAM_SPLITTER[0, 1] * BEAM_SPLITTER[1, 0]
    out = np.zeros_like(a)
    out[..., SHORT] = to_short * np.einsum("ij,abj->abi", settings.u0, inp)
    out[..., LONG] = to_long * np.exp(1j * settings.umzi_phase) * np.einsum("ij,abj->abi", settings.u1, inp)
    return DualDofState(out, umi_done=state.umi_done, umzi_done=True)


def postselect_coincidence(state: DualDofState, *, strict: bool = True) -> tuple[np.ndarray, float]:
    """Keep events where both photons share a time bin; returns (unnormalized state, probability).

    The kept polarization state is ``amps[:, s, :, s] + amps[:, l, :, l]``
    because the two coincident bins are indistinguishable at the detector.
    """
    if strict and not (state.umi_done and state.umzi_done):
        raise InterferometerError("post-selection needs both interferometers applied")
    a = state.amplitudes
    kept = (a[:, SHORT, :, SHORT] + a[:, LONG, :, LONG]).reshape(4)
    return kept, float(np.vdot(kept, kept).real)


def run_pipeline(psi: np.ndarray, settings: InterferometerSettings) -> np.ndarray:
    """Kept (unnormalized) two-qubit polarization state for input ``psi``."""
    st = DualDofState.from_polarization(psi)
    st = propagate_umzi(propagate_umi(st, settings), settings)
    kept, _ = postselect_coincidence(st)
    return kept


def pipeline_map(settings: InterferometerSettings) -> np.ndarray:
    """The (linear) map ``psi -> kept`` as a 4x4 matrix, columns in computational order."""
    return np.stack([run_pipeline(e, settings) for e in np.eye(4, dtype=complex)], axis=1)


SUCCESS_PROBABILITY = 0.25


def effective_cu(settings: InterferometerSettings, *, check: bool = True) -> np.ndarray:
    """Post-selected operation rescaled by 1/sqrt(success probability).

    Raises InterferometerError when ``check`` is set and the clicks are not
    equally likely for every computational input, since the rescaled map is
    then not a (controlled) unitary.
    """
    m = pipeline_map(settings)
    if check:
        norms = np.linalg.norm(m, axis=0)
        if np.ptp(norms) > 1e-10:
            raise InterferometerError("success amplitude differs between basis states")
    return m / np.sqrt(SUCCESS_PROBABILITY)


def ideal_cu(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    return np.kron(p0, u0) + np.kron(p1, u1)

