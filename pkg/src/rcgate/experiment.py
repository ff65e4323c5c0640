"""End-to-end tomography experiments on the simulated apparatus."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Optional, Union

import numpy as np

from .core import KET_PLUS, is_unitary
from .interferometer import InterferometerSettings, ideal_cu, pipeline_map
from .jones import (
    WAVEPLATE_RECIPES,
    GateName,
    WaveplateSetting,
    gate,
    solve_prep_angles,
    solve_projection_angles,
)
from .noise import NoiseConfig, depolarize, sample_noisy_settings
from .remote import RcCoefficients, rc_operator
from .tomography import (
    BornTable,
    ChiMatrix,
    TomographyDesign,
    bootstrap_fidelity,
    ideal_chi,
    mle_fit,
    process_fidelity,
    simulate_counts,
    standard_design,
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


PROTOCOLS = ("state-prep", "projection")

PRESETS: dict[str, dict[str, Any]] = {
    "cnot-qpt": {"kind": "cu", "u0": "I", "u1": "X"},
    "cs-qpt": {"kind": "cu", "u0": "I", "u1": "S"},
    "rc-stateprep-a": {"kind": "rc", "protocol": "state-prep", "u0": "I", "u1": "X",
                       "alpha": np.sqrt(2 / 3), "beta": np.sqrt(1 / 3)},
    "rc-stateprep-b": {"kind": "rc", "protocol": "state-prep", "u0": "I", "u1": "X",
                       "alpha": np.sqrt(1 / 2), "beta": -np.sqrt(1 / 2)},
    "rc-projection-a": {"kind": "rc", "protocol": "projection", "u0": "I", "u1": "X",
                        "alpha": np.sqrt(2 / 3), "beta": np.sqrt(1 / 3)},
    "rc-projection-b": {"kind": "rc", "protocol": "projection", "u0": "I", "u1": "X",
                        "alpha": np.sqrt(1 / 2), "beta": -np.sqrt(1 / 2)},
}
PRESET_NAMES = tuple(PRESETS) + ("custom",)

GateLike = Union[str, GateName, np.ndarray]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment. ``alpha``, ``beta``, ``u0``, ``u1`` and ``protocol`` are for ``custom`` only."""

    preset: str
    alpha: Optional[complex] = None
    beta: Optional[complex] = None
    u0: Optional[GateLike] = None
    u1: Optional[GateLike] = None
    protocol: Optional[str] = None
    shots: int = 10_000
    n_trials: int = 100
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    output_path: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.preset not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESET_NAMES)}")
        custom = (self.alpha, self.beta, self.u0, self.u1)
        if self.preset == "custom":
            if any(v is None for v in custom):
                raise ConfigError("custom preset requires alpha, beta, u0 and u1")
            if self.protocol is not None and self.protocol not in PROTOCOLS:
                raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        elif any(v is not None for v in custom) or self.protocol is not None:
            raise ConfigError(f"preset {self.preset!r} does not accept alpha/beta/u0/u1/protocol")
        for name in ("shots", "n_trials", "seed", "workers"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer")
        if self.shots < 1:
            raise ConfigError("shots must be positive")
        if self.n_trials < 2:
            raise ConfigError("n_trials must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if not isinstance(self.noise, NoiseConfig):
            raise ConfigError("noise must be a NoiseConfig")

    def echo(self) -> dict:
        def enc(v):
            if v is None or isinstance(v, (str, int, float)):
                return v
            if isinstance(v, GateName):
                return v.value
            if isinstance(v, complex):
                return [v.real, v.imag]
            a = np.asarray(v)
            return [[[complex(x).real, complex(x).imag] for x in row] for row in a]

        return {
            "preset": self.preset,
            "alpha": enc(None if self.alpha is None else complex(self.alpha)),
            "beta": enc(None if self.beta is None else complex(self.beta)),
            "u0": enc(self.u0),
            "u1": enc(self.u1),
            "protocol": self.protocol,
            "shots": int(self.shots),
            "n_trials": int(self.n_trials),
            "seed": int(self.seed),
            "noise": self.noise.to_dict(),
        }


@dataclass(frozen=True)
class Apparatus:
    """Resolved physical configuration for a run.

    ``control_prep``/``control_meas`` are only set for remote-controlled runs.
    """

    kind: str
    settings: InterferometerSettings
    ideal_operator: np.ndarray
    design: TomographyDesign
    coefficients: Optional[RcCoefficients] = None
    protocol: Optional[str] = None
    control_prep: Optional[WaveplateSetting] = None
    control_meas: Optional[WaveplateSetting] = None


def _resolve_gate(entry: GateLike):
    if isinstance(entry, (str, GateName)):
        try:
            name = GateName(entry)
        except ValueError:
            raise ConfigError(f"unknown gate {entry!r}") from None
        u = gate(name)
        if u.shape != (2, 2):
            raise ConfigError(f"{name.value} is not a single-qubit gate")
        return u, WAVEPLATE_RECIPES.get(name)
    u = np.asarray(entry, dtype=complex)
    if u.shape != (2, 2) or not is_unitary(u, atol=1e-10):
        raise ConfigError("explicit u0/u1 must be 2x2 unitary matrices")
    return u, None


def _phase(built: np.ndarray, target: np.ndarray) -> float:
    return float(np.angle(np.trace(target.conj().T @ built)))


def build_apparatus(cfg: ExperimentConfig) -> Apparatus:
    if cfg.preset == "custom":
        entry = {"kind": "rc", "protocol": cfg.protocol or "state-prep", "u0": cfg.u0, "u1": cfg.u1,
                "alpha": cfg.alpha, "beta": cfg.beta}
    else:
        entry = PRESETS[cfg.preset]
    u0, r0 = _resolve_gate(entry["u0"])
    u1, r1 = _resolve_gate(entry["u1"])
    settings = InterferometerSettings(u0=u0, u1=u1, u0_recipe=r0, u1_recipe=r1)
    # Waveplate recipes match their gates only up to a global phase; the
    # stabilized UMZI phase is locked so the two arms interfere as the
    # target controlled gate.
    settings = replace(settings, umzi_phase=_phase(settings.u0, u0) - _phase(settings.u1, u1))
    if entry["kind"] == "cu":
        return Apparatus("cu", settings, ideal_cu(u0, u1), standard_design(2))
    try:
        c = RcCoefficients(complex(entry["alpha"]), complex(entry["beta"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    op = rc_operator(c, u0, u1)
    if np.linalg.norm(op) < 1e-12:
        raise ConfigError("alpha U0 + beta U1 vanishes")
    if entry["protocol"] == "state-prep":
        prep, meas = solve_prep_angles(c.vector), solve_projection_angles(KET_PLUS)
    else:
        prep, meas = solve_prep_angles(KET_PLUS), solve_projection_angles(c.vector.conj())
    return Apparatus("rc", settings, op, standard_design(1), c, entry["protocol"], prep, meas)


def _raw_table(app: Apparatus, noise: NoiseConfig) -> np.ndarray:
    """Unnormalized click probabilities ``raw[i, j, k]`` from the apparatus model."""
    design = app.design
    n_prep, n_set, n_out = design.shape
    proj = design.meas_projectors  # [j, k, a, b]
    plates = [] if app.kind == "cu" else [app.control_prep, app.control_meas]
    raw = np.empty((n_prep, n_set, n_out))
    cache = None
    for i, psi in enumerate(design.preps):
        for j in range(n_set):
            if cache is None or noise.has_setting_noise:
                s, wp = sample_noisy_settings(app.settings, plates, noise, i * n_set + j)
                cache = (pipeline_map(s), wp)
            k_map, wp = cache
            if app.kind == "cu":
                kept = k_map @ psi
                rho = depolarize(np.outer(kept, kept.conj()), noise.depolarizing_p)
            else:
                kept = k_map @ np.kron(wp[0].prepared_state(), psi)
                rho2 = depolarize(np.outer(kept, kept.conj()), noise.depolarizing_p)
                m = wp[1].measured_state()
                rho = np.einsum("a,atbs,b->ts", m.conj(), rho2.reshape(2, 2, 2, 2), m)
            raw[i, j] = np.einsum("kab,ba->k", proj[j], rho).real
    return raw


def ideal_success_scale(app: Apparatus) -> float:
    """Largest click probability over target inputs for the noiseless apparatus."""
    k_map = pipeline_map(app.settings)
    if app.kind == "cu":
        a = k_map
    else:
        a = np.einsum("a,atbs,b->ts", app.control_meas.measured_state().conj(),
                      k_map.reshape(2, 2, 2, 2), app.control_prep.prepared_state())
    return float(np.linalg.eigvalsh(a.conj().T @ a).max())


def apparatus_table(app: Apparatus, noise: NoiseConfig) -> tuple[BornTable, np.ndarray]:
    """Born table for tomography and physical per-(prep, setting) click probabilities."""
    raw = _raw_table(app, noise)
    return BornTable.from_raw(raw, scale=ideal_success_scale(app)), raw.sum(axis=-1)


@dataclass(frozen=True)
class RunReport:
    preset: str
    chi_exp: ChiMatrix
    chi_ideal: ChiMatrix
    fidelity_mean: float
    fidelity_std: float
    fidelity_point: float
    success_prob_summary: dict
    settings: dict
    diagnostics: dict

    @property
    def fidelity_text(self) -> str:
        return f"{self.fidelity_mean:.3f}±{self.fidelity_std:.3f}"

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "fidelity": self.fidelity_text,
            "fidelity_mean": self.fidelity_mean,
            "fidelity_std": self.fidelity_std,
            "fidelity_point": self.fidelity_point,
            "success_prob_summary": self.success_prob_summary,
            "settings": self.settings,
            "diagnostics": self.diagnostics,
            "chi_exp": self.chi_exp.to_dict(),
            "chi_ideal": self.chi_ideal.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    app = build_apparatus(cfg)
    table, clicks = apparatus_table(app, cfg.noise)
    counts = simulate_counts(table, cfg.shots, cfg.seed)
    fit = mle_fit(counts, app.design)
    chi_ideal = ideal_chi(app.ideal_operator)
    boot = bootstrap_fidelity(counts, app.design, chi_ideal, cfg.n_trials, seed=cfg.seed,
                              workers=cfg.workers, start=fit.chi)
    summary = {label: float(p) for label, p in zip(app.design.prep_labels, clicks.mean(axis=1))}
    diagnostics = {
        "mle_converged": bool(fit.converged),
        "mle_iterations": int(fit.iterations),
        "mle_grad_norm": float(fit.grad_norm),
        "bootstrap_excluded": int(boot.excluded),
        "total_counts": int(counts.total),
        "success_prob_scale": ideal_success_scale(app),
    }
    settings = cfg.echo()
    if app.kind == "rc":
        settings["protocol"] = app.protocol
        settings["control_prep_angles"] = [app.control_prep.hwp_angle, app.control_prep.qwp_angle]
        settings["control_meas_angles"] = [app.control_meas.hwp_angle, app.control_meas.qwp_angle]
    settings["u0_recipe"] = [list(s) for s in app.settings.u0_recipe] if app.settings.u0_recipe else None
    settings["u1_recipe"] = [list(s) for s in app.settings.u1_recipe] if app.settings.u1_recipe else None
    report = RunReport(
        preset=cfg.preset,
        chi_exp=fit.chi,
        chi_ideal=chi_ideal,
        fidelity_mean=float(boot.mean),
        fidelity_std=float(boot.std),
        fidelity_point=process_fidelity(fit.chi, chi_ideal),
        success_prob_summary=summary,
        settings=settings,
        diagnostics=diagnostics,
    )
    if cfg.output_path:
        report.write(cfg.output_path)
    return report


def chi_table_rows(chi: ChiMatrix | np.ndarray) -> list[tuple[str, str, float, float]]:
    entries = chi.entries if isinstance(chi, ChiMatrix) else np.asarray(chi, dtype=complex)
    if entries.size == 0:
        raise ValueError("chi matrix is empty")
    if isinstance(chi, ChiMatrix):
        labels = chi.labels
    else:
        chi = ChiMatrix(entries, trace_normalized=False)
        labels = chi.labels
    return [(labels[r], labels[c], float(entries[r, c].real), float(entries[r, c].imag))
            for r in range(len(labels)) for c in range(len(labels))]


def write_chi_csv(chi: ChiMatrix | np.ndarray, fh: IO[str]) -> None:
    rows = chi_table_rows(chi)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    for r, c, re, im in rows:
        w.writerow([r, c, repr(re), repr(im)])


def export_bar_chart_data(chi: ChiMatrix | np.ndarray, path: str | Path) -> None:
    """Write (row, col, re, im) for every chi entry as CSV."""
    chi_table_rows(chi)  # validate before touching the file
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_chi_csv(chi, fh)
