"""Simulation of time-bin assisted controlled-unitary and remote-controlled photonic gates."""

from .core import equal_up_to_global_phase, pauli_basis, pauli_expand, pauli_reconstruct, tensor_product
from .experiment import ConfigError, ExperimentConfig, RunReport, export_bar_chart_data, run_experiment
from .interferometer import InterferometerSettings, effective_cu, ideal_cu
from .jones import GateName, WaveplateSetting, gate, hwp, qwp, solve_prep_angles, solve_projection_angles
from .noise import NoiseConfig, depolarize, noise_preset, sample_noisy_settings
from .remote import RcCoefficients, rc_operator, rc_projection, rc_state_prep
from .tomography import (
    ChiMatrix,
    CountTable,
    TomographyDesign,
    bootstrap_fidelity,
    born_probabilities,
    ideal_chi,
    linear_inversion_chi,
    mle_chi,
    process_fidelity,
    simulate_counts,
    standard_design,
)

__version__ = "0.1.0"
