"""Quantum enigma machine and quantum data locking simulator."""
__version__ = "0.1.0"

from ._backend import BACKEND, HAVE_NUMBA
from .core import (
    CapacityError, DensityMatrix, DomainError, PureState, QEnigmaError, RngStream, Unitary,
    apply_unitary, basis_state, dagger, haar_unitary, trace_distance,
)
from .locking import (
    Key, LockingEnsemble, Message, eve_average_state, generate_haar_ensemble, load_ensemble, lock,
    mub_qubit_ensemble, save_ensemble, unlock,
)
from .security import (
    KeyRule, LeakageBudget, OptimizerConfig, ScopeError, SecurityReport, accessible_info_oracle,
    ic_upper_bound, key_length_plan, leakage_budget, maximize_probe, probe_objective,
)
from .channels import (
    ChannelParams, DetectionEvent, Outcome, SinglePhotonState, depolarize_density, depolarize_symbol,
    detect, inject_noise_photons, lossy_transmit, mode_transform, unary_encode,
)
from .protocol import (
    ExperimentConfig, Transcript, eve_intercept_analysis, run_depolarizing_block,
    run_key_distribution, run_resend_protocol,
)
