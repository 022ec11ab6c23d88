"""Physical-layer channel models.

Covers the qudit depolarizing channel, single-photon unary encoding over N
modes, photon loss, and noise-photon (dark count) injection. Only the
one-photon subspace is modelled, so a photon spread over N modes is just an
N-dimensional pure state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import DensityMatrix, DomainError, PureState, Unitary, as_rng, check_dim


@dataclass(frozen=True)
class ChannelParams:
    eta: float = 1.0
    tau: float = 1.0
    mean_noise_photons: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"tau must lie in [0, 1], got {self.tau!r}")
        if not self.mean_noise_photons >= 0.0:
            raise DomainError(f"mean_noise_photons must be >= 0, got {self.mean_noise_photons!r}")


@dataclass(frozen=True, eq=False)
class SinglePhotonState(PureState):
    """One photon coherently spread over ``n_modes`` modes."""

    @property
    def n_modes(self) -> int:
        return self.dim


class Outcome(enum.Enum):
    PHOTON_IN_MODE = "photon_in_mode"
    NO_PHOTON = "no_photon"
    MULTI_PHOTON = "multi_photon"


@dataclass(frozen=True)
class DetectionEvent:
    outcome: Outcome
    n_modes: int
    mode: int | None = None
    timebin: int = 0

    def __post_init__(self):
        if self.outcome is Outcome.PHOTON_IN_MODE:
            if self.mode is None or not 0 <= self.mode < self.n_modes:
                raise DomainError(f"mode {self.mode} invalid for {self.n_modes} modes")
        elif self.mode is not None:
            raise DomainError(f"{self.outcome.value} events carry no mode index")


# ---------------------------------------------------------------------------
# depolarizing channel
# ---------------------------------------------------------------------------

def depolarize_density(rho: DensityMatrix, eta: float) -> DensityMatrix:
    """``eta * rho + (1 - eta) * I / d``."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta!r}")
    d = rho.dim
    if eta == 0.0:
        return DensityMatrix.maximally_mixed(d)
    return DensityMatrix(eta * rho.matrix + (1.0 - eta) * np.eye(d) / d)


def depolarize_symbols(js, dim: int, eta: float, rng) -> np.ndarray:
    """Vectorised :func:`depolarize_symbol` over an array of symbols."""
    dim = check_dim(dim)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta!r}")
    js = np.asarray(js, dtype=np.int64)
    if js.size and (js.min() < 0 or js.max() >= dim):
        raise DomainError(f"symbols must lie in [0, {dim})")
    rng = as_rng(rng)
    keep = rng.random(js.shape) < eta
    # the fully mixed state read out in any basis is a uniform symbol
    replacement = rng.integers(0, dim, size=js.shape)
    return np.where(keep, js, replacement)


def depolarize_symbol(j: int, dim: int, eta: float, rng) -> int:
    """Symbol seen after the depolarizing channel.

    ``j`` survives with probability ``eta + (1 - eta) / dim``; otherwise one
    of the other symbols comes out, uniformly.
    """
    return int(depolarize_symbols(np.array([j]), dim, eta, rng)[0])


# ---------------------------------------------------------------------------
# unary single-photon encoding
# ---------------------------------------------------------------------------

def unary_encode(n_modes: int, j: int) -> SinglePhotonState:
    n_modes = check_dim(n_modes)
    if not 0 <= j < n_modes:
        raise DomainError(f"mode {j} out of range for {n_modes} modes")
    a = np.zeros(n_modes, dtype=np.complex128)
    a[j] = 1.0
    return SinglePhotonState(a)


def mode_transform(u: Unitary, s: SinglePhotonState) -> SinglePhotonState:
    """Passive linear optics: the mode amplitudes are multiplied by ``u``."""
    if u.dim != s.dim:
        raise DomainError(f"dimension mismatch: unitary {u.dim}, state over {s.dim} modes")
    return SinglePhotonState(u.matrix @ s.amplitudes)


def lossy_transmit(s: SinglePhotonState, tau: float, rng):
    """The photon survives with probability ``tau``, whatever the mode count.

    Returns ``s`` unchanged on survival, otherwise a ``no_photon`` event.
    """
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    if as_rng(rng).random() < tau:
        return s
    return DetectionEvent(Outcome.NO_PHOTON, s.dim)


def detect(s: SinglePhotonState, rng, timebin: int = 0) -> DetectionEvent:
    """Projective detection in the mode basis (Born rule)."""
    prob = np.abs(s.amplitudes) ** 2
    cum = np.cumsum(prob)
    u = as_rng(rng).random() * cum[-1]
    mode = min(int(np.searchsorted(cum, u, side="right")), s.dim - 1)
    return DetectionEvent(Outcome.PHOTON_IN_MODE, s.dim, mode, timebin)


def inject_noise_photons(event: DetectionEvent, mean_noise_photons: float, rng) -> DetectionEvent:
    """Add Poisson(``mean_noise_photons``) dark counts to the event's time bin.

    Noise on top of a detected signal gives ``multi_photon``. Noise in an
    empty bin looks like a photon in a uniformly random mode.
    """
    if not mean_noise_photons >= 0.0:
        raise DomainError(f"mean_noise_photons must be >= 0, got {mean_noise_photons!r}")
    if mean_noise_photons == 0.0:
        return event
    rng = as_rng(rng)
    count = int(rng.poisson(mean_noise_photons))
    if count == 0:
        return event
    if event.outcome is Outcome.NO_PHOTON:
        mode = int(rng.integers(0, event.n_modes))
        return DetectionEvent(Outcome.PHOTON_IN_MODE, event.n_modes, mode, event.timebin)
    return DetectionEvent(Outcome.MULTI_PHOTON, event.n_modes, None, event.timebin)
