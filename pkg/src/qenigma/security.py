"""Eavesdropper analysis: accessible-information bounds, key planning, leakage.

The bound on Eve's accessible information is

    I_c <= n + 2**-m * max_phi  sum_{j,k} p_jk log2 p_jk,   p_jk = |<phi|U_k|j>|^2

and everything here is in bits. The inner maximisation is nonconvex. For
``dim <= 4`` it is done by exhaustive grid search and comes with a
``grid_gap`` certificate. Larger dimensions use multi-start projected gradient
ascent. That ascent gives a lower estimate of the maximum, so its
``ic_bound`` is an estimate rather than a certified bound.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from . import kernels
from .core import DomainError, PureState, RngStream, as_rng
from .locking import LockingEnsemble

NORM_TOL = 1e-8
_INV_E = math.exp(-1.0)


class ScopeError(DomainError):
    """The operation is only implemented for a narrower class of inputs."""


class Method(str, enum.Enum):
    CERTIFIED_GRID = "certified_grid"
    ASCENT_HEURISTIC = "ascent_heuristic"


@dataclass(frozen=True)
class ProbeObjectiveValue:
    value: float

    def __post_init__(self):
        if not self.value <= 1e-12:
            raise DomainError(f"probe objective must be <= 0, got {self.value!r}")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`maximize_probe`.

    ``method`` is ``"auto"`` (grid for dim <= 4, ascent otherwise), ``"grid"``
    or ``"ascent"``. ``column_starts`` adds that many extra ascent starts at
    the best-scoring locked states ``U_k|j>`` on top of ``restarts`` random ones.
    """

    restarts: int = 32
    tol: float = 1e-8
    max_iter: int = 2000
    armijo: float = 1e-4
    step_max: float = 64.0
    column_starts: int = 4
    grid_step_qubit: float = math.pi / 720
    grid_step_coarse: float = math.pi / 12
    grid_step_fine: float = math.pi / 60
    refine_candidates: int = 8
    method: str = "auto"
    seed: int = 0
    workers: int = 1


class ProbeOptimum(NamedTuple):
    probe: PureState
    value: ProbeObjectiveValue
    method: Method
    restarts_used: int = 0
    converged: bool = True
    grid_gap: float | None = None


@dataclass(frozen=True)
class SecurityReport:
    ic_bound: float
    probe: PureState = field(repr=False)
    probe_value: ProbeObjectiveValue
    method: Method
    restarts_used: int
    converged: bool
    n_bits: int
    m_bits: int
    dim: int
    grid_gap: float | None = None

    RECORD_FIELDS = ("ic_bound", "probe_value", "method", "restarts_used", "converged",
                     "n_bits", "m_bits", "dim", "grid_gap")

    def to_record(self) -> dict:
        """Flat record with the fields in :attr:`RECORD_FIELDS`, values as text."""
        return {
            "ic_bound": repr(float(self.ic_bound)),
            "probe_value": repr(float(self.probe_value.value)),
            "method": self.method.value,
            "restarts_used": str(self.restarts_used),
            "converged": "true" if self.converged else "false",
            "n_bits": str(self.n_bits),
            "m_bits": str(self.m_bits),
            "dim": str(self.dim),
            "grid_gap": "none" if self.grid_gap is None else repr(float(self.grid_gap)),
        }

    def format_record(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_record().items())


def parse_security_record(text: str) -> dict:
    """Inverse of :meth:`SecurityReport.format_record` (the probe is not serialised)."""
    raw = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()
    missing = set(SecurityReport.RECORD_FIELDS) - raw.keys()
    if missing:
        raise DomainError(f"security record lacks fields {sorted(missing)}")
    return {
        "ic_bound": float(raw["ic_bound"]),
        "probe_value": float(raw["probe_value"]),
        "method": Method(raw["method"]),
        "restarts_used": int(raw["restarts_used"]),
        "converged": raw["converged"] == "true",
        "n_bits": int(raw["n_bits"]),
        "m_bits": int(raw["m_bits"]),
        "dim": int(raw["dim"]),
        "grid_gap": None if raw["grid_gap"] == "none" else float(raw["grid_gap"]),
    }


# ---------------------------------------------------------------------------
# objective and gradient
# ---------------------------------------------------------------------------

def _probe_vector(e: LockingEnsemble, phi) -> np.ndarray:
    amps = phi.amplitudes if isinstance(phi, PureState) else np.asarray(phi, dtype=np.complex128)
    if amps.shape != (e.dim,):
        raise DomainError(f"probe has shape {amps.shape}, ensemble dimension is {e.dim}")
    if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
        raise DomainError("probe state is not normalised")
    return np.ascontiguousarray(amps, dtype=np.complex128)


def probe_objective(e: LockingEnsemble, phi) -> ProbeObjectiveValue:
    """``sum_{j,k} p log2 p`` over all locked states, with ``0 log 0 = 0``."""
    return ProbeObjectiveValue(kernels.objective(e.locked_columns, _probe_vector(e, phi)))


def probe_gradient(e: LockingEnsemble, phi) -> np.ndarray:
    """Wirtinger derivative of the probe objective with respect to ``conj(phi)``.

    Equals ``sum_s (log2 p_s + 1/ln 2) <psi_s|phi> psi_s``. The gradient with
    respect to the real and imaginary parts, packed as a complex vector, is
    twice this.
    """
    _, g = kernels.objective_and_grad(e.locked_columns, _probe_vector(e, phi))
    return g


def tangent_gradient(e: LockingEnsemble, phi) -> np.ndarray:
    """Real gradient projected onto the tangent space of the sphere at ``phi``."""
    amps = _probe_vector(e, phi)
    grad = 2.0 * probe_gradient(e, amps)
    return grad - np.vdot(amps, grad) * amps


# ---------------------------------------------------------------------------
# maximisation
# ---------------------------------------------------------------------------

def _eta_bits(x: float) -> float:
    """Worst change of ``p log2 p`` when ``p`` moves by at most ``x``."""
    x = min(x, _INV_E)
    return 0.0 if x <= 0 else -x * math.log2(x)


def _grid_gap(n_terms: int, state_shift: float) -> float:
    # |p(phi) - p(phi')| <= trace distance <= state_shift
    if state_shift > 0.5:
        return n_terms * _eta_bits(_INV_E)
    return n_terms * _eta_bits(state_shift)


def _qubit_probe(theta: float, azimuth: float) -> np.ndarray:
    return np.array([math.cos(theta / 2), complex(math.cos(azimuth), math.sin(azimuth)) * math.sin(theta / 2)])


def bloch_vectors(states: np.ndarray) -> np.ndarray:
    """Bloch vectors of qubit states given as the rows of ``states`` (..., 2)."""
    a0 = states[..., 0]
    a1 = states[..., 1]
    c = np.conj(a0) * a1
    return np.stack([2 * c.real, 2 * c.imag, np.abs(a0) ** 2 - np.abs(a1) ** 2], axis=-1)


def _sphere_grid(step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_theta = int(round(math.pi / step))
    n_az = int(round(2 * math.pi / step))
    theta = np.arange(n_theta + 1) * (math.pi / n_theta)
    az = np.arange(n_az) * (2 * math.pi / n_az)
    tt, aa = np.meshgrid(theta, az, indexing="ij")
    tt = tt.ravel()
    aa = aa.ravel()
    dirs = np.stack([np.sin(tt) * np.cos(aa), np.sin(tt) * np.sin(aa), np.cos(tt)], axis=1)
    return np.ascontiguousarray(dirs), tt, aa


def hyperspherical_states(angles: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Unit vectors from magnitude angles in [0, pi/2] and relative phases.

    ``angles`` and ``phases`` have shape (G, d-1); component 0 is real and
    non-negative, component i > 0 carries phase ``phases[:, i-1]``.
    """
    G, m = angles.shape
    d = m + 1
    out = np.empty((G, d), dtype=np.complex128)
    running = np.ones(G)
    for i in range(m):
        out[:, i] = running * np.cos(angles[:, i])
        running = running * np.sin(angles[:, i])
    out[:, d - 1] = running
    out[:, 1:] *= np.exp(1j * phases)
    return out


def _product_grid(axes: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _ascend(psi: np.ndarray, start: np.ndarray, cfg: OptimizerConfig):
    phi, f, it, conv = kernels.ascent(psi, np.ascontiguousarray(start, dtype=np.complex128),
                                      cfg.max_iter, cfg.tol, cfg.armijo, cfg.step_max)
    return np.asarray(phi), float(f), int(it), bool(conv)


def _run_starts(psi, starts, cfg):
    """Ascend from each start; best value wins, lowest index on ties."""
    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda s: _ascend(psi, s, cfg), starts))
    else:
        results = [_ascend(psi, s, cfg) for s in starts]
    best = 0
    for i, r in enumerate(results):
        if r[1] > results[best][1]:
            best = i
    return results[best], results


def _maximize_qubit(e: LockingEnsemble, cfg: OptimizerConfig) -> ProbeOptimum:
    psi = e.locked_columns
    bloch = np.ascontiguousarray(bloch_vectors(psi.T))
    step = cfg.grid_step_qubit
    dirs, tt, aa = _sphere_grid(step)
    values = kernels.bloch_grid_objective(bloch, dirs)
    # every direction lies within angle `step` of a grid node (meridian step
    # plus parallel step), so probe states move by at most sin(step/2) in
    # trace distance
    gap = _grid_gap(psi.shape[1], math.sin(step / 2))
    order = np.argsort(-values, kind="stable")[: max(1, cfg.refine_candidates)]
    best_phi = _qubit_probe(tt[order[0]], aa[order[0]])
    best_val = float(values[order[0]])
    for g in order:
        phi, f, _, _ = _ascend(psi, _qubit_probe(tt[g], aa[g]), cfg)
        if f > best_val:
            best_val, best_phi = f, phi
    best_val = min(best_val, 0.0)
    return ProbeOptimum(PureState(best_phi / np.linalg.norm(best_phi)), ProbeObjectiveValue(best_val),
                        Method.CERTIFIED_GRID, 0, True, gap)


def _maximize_nested(e: LockingEnsemble, cfg: OptimizerConfig) -> ProbeOptimum:
    psi = e.locked_columns
    d = e.dim
    coarse = cfg.grid_step_coarse
    ang_axis = np.linspace(0.0, math.pi / 2, int(round(math.pi / 2 / coarse)) + 1)
    n_ph = int(round(2 * math.pi / (2 * coarse)))
    ph_axis = np.arange(n_ph) * (2 * math.pi / n_ph)
    params = _product_grid([ang_axis] * (d - 1) + [ph_axis] * (d - 1))
    values = kernels.batch_objective(psi, hyperspherical_states(params[:, : d - 1], params[:, d - 1:]))
    # each coordinate derivative of the parametrisation has norm <= 1
    shift = (d - 1) * (ang_axis[1] - ang_axis[0]) / 2 + (d - 1) * (ph_axis[1] - ph_axis[0]) / 2
    gap = _grid_gap(psi.shape[1], shift)

    order = np.argsort(-values, kind="stable")[: max(1, cfg.refine_candidates)]
    candidates = [params[i].copy() for i in order]
    levels = []
    s = coarse
    while s > cfg.grid_step_fine + 1e-15:
        s = max(s / 2.5, cfg.grid_step_fine)
        levels.append(s)
    offsets = np.arange(-2, 3)
    for s in levels:
        refined = []
        for c in candidates:
            axes = [c[i] + offsets * s for i in range(d - 1)] + [c[d - 1 + i] + offsets * s for i in range(d - 1)]
            local = _product_grid(axes)
            local[:, : d - 1] = np.clip(local[:, : d - 1], 0.0, math.pi / 2)
            vals = kernels.batch_objective(psi, hyperspherical_states(local[:, : d - 1], local[:, d - 1:]))
            refined.append(local[int(np.argmax(vals))])
        candidates = refined
    starts = hyperspherical_states(np.array(candidates)[:, : d - 1], np.array(candidates)[:, d - 1:])
    (phi, f, _, _), _ = _run_starts(psi, list(starts), cfg)
    grid_best = float(values[order[0]])
    if f < grid_best:
        phi = hyperspherical_states(params[order[:1], : d - 1], params[order[:1], d - 1:])[0]
        f = grid_best
    return ProbeOptimum(PureState(phi / np.linalg.norm(phi)), ProbeObjectiveValue(min(f, 0.0)),
                        Method.CERTIFIED_GRID, 0, True, gap)


def _random_start(rng: RngStream, d: int) -> np.ndarray:
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def _maximize_ascent(e: LockingEnsemble, cfg: OptimizerConfig, rng: RngStream) -> ProbeOptimum:
    psi = e.locked_columns
    starts = []
    if cfg.column_starts > 0:
        col_vals = kernels.batch_objective(psi, np.ascontiguousarray(psi.T))
        for idx in np.argsort(-col_vals, kind="stable")[: cfg.column_starts]:
            starts.append(psi[:, idx].copy())
    for r in range(cfg.restarts):
        starts.append(_random_start(rng.split("restart", r), e.dim))
    (phi, f, _, conv), _ = _run_starts(psi, starts, cfg)
    return ProbeOptimum(PureState(phi / np.linalg.norm(phi)), ProbeObjectiveValue(min(f, 0.0)),
                        Method.ASCENT_HEURISTIC, len(starts), conv, None)


def maximize_probe(e: LockingEnsemble, cfg: OptimizerConfig | None = None, rng=None) -> ProbeOptimum:
    """Maximise the probe objective over unit vectors.

    Grid search (``certified_grid``) is used for ``dim <= 4``; above that,
    projected gradient ascent with backtracking from several starts
    (``ascent_heuristic``). ``rng`` defaults to a stream seeded from
    ``cfg.seed``. Non-convergence is reported through ``converged``.
    """
    cfg = cfg or OptimizerConfig()
    rng = as_rng(cfg.seed if rng is None else rng)
    method = cfg.method
    if method not in ("auto", "grid", "ascent"):
        raise DomainError(f"unknown optimizer method {method!r}")
    if e.dim == 1:
        phi = PureState(np.ones(1, dtype=np.complex128))
        return ProbeOptimum(phi, probe_objective(e, phi), Method.CERTIFIED_GRID, 0, True, 0.0)
    if method == "ascent" or (method == "auto" and e.dim > 4):
        return _maximize_ascent(e, cfg, rng)
    if e.dim == 2:
        return _maximize_qubit(e, cfg)
    if e.dim <= 4:
        return _maximize_nested(e, cfg)
    raise ScopeError(f"grid search supports dim <= 4, got {e.dim}")


def ic_upper_bound(e: LockingEnsemble, cfg: OptimizerConfig | None = None, rng=None) -> SecurityReport:
    opt = maximize_probe(e, cfg, rng)
    bound = e.n_bits + opt.value.value / e.n_keys
    return SecurityReport(
        ic_bound=bound,
        probe=opt.probe,
        probe_value=opt.value,
        method=opt.method,
        restarts_used=opt.restarts_used,
        converged=opt.converged,
        n_bits=e.n_bits,
        m_bits=e.m_bits,
        dim=e.dim,
        grid_gap=opt.grid_gap,
    )


# ---------------------------------------------------------------------------
# brute-force accessible information (qubits)
# ---------------------------------------------------------------------------

def measurement_directions(n_azimuth: int = 360, n_polar: int = 180) -> np.ndarray:
    """Bloch directions on a polar x azimuth grid with polar angle in [0, pi).

    A direction and its antipode define the same two-outcome measurement, so
    the half-open polar range loses nothing.
    """
    theta = np.arange(n_polar) * (math.pi / n_polar)
    az = np.arange(n_azimuth) * (2 * math.pi / n_azimuth)
    tt, aa = np.meshgrid(theta, az, indexing="ij")
    return np.ascontiguousarray(
        np.stack([np.sin(tt) * np.cos(aa), np.sin(tt) * np.sin(aa), np.cos(tt)], axis=-1).reshape(-1, 3))


def accessible_info_oracle(e: LockingEnsemble, grid: tuple[int, int] = (360, 180), label: str = "joint") -> float:
    """Best mutual information over rank-one projective qubit measurements.

    All ``(j, k)`` pairs are equally likely. With ``label="joint"`` the
    information is about the pair ``(j, k)``, which is the quantity the
    probe bound controls. ``label="message"`` gives the information about
    ``j`` alone, which is never larger. Only ``dim == 2`` is supported.
    """
    if e.dim != 2:
        raise ScopeError(f"the brute-force oracle handles qubit ensembles only, got dim={e.dim}")
    if label not in ("joint", "message"):
        raise DomainError(f"label must be 'joint' or 'message', got {label!r}")
    bloch = bloch_vectors(e.matrices[:, :, : e.n_messages].transpose(0, 2, 1))   # (K, J, 3)
    dirs = measurement_directions(*grid)
    values = kernels.mutual_info_grid(np.ascontiguousarray(bloch), dirs, label == "joint")
    return float(values.max())


# ---------------------------------------------------------------------------
# key planning and leakage accounting
# ---------------------------------------------------------------------------

class KeyRule(str, enum.Enum):
    HAAR_EPSILON = "haar_epsilon"
    UNARY = "unary"
    BLOCK = "block"


@dataclass(frozen=True)
class KeyPlan:
    rule: KeyRule
    m_recommended: int
    constant_factor: float
    n_bits: int
    epsilon: float
    b: int


def key_length_plan(rule, n_bits: int = 1, epsilon: float = 0.5, b: int = 1,
                    constant_factor: float = 1.0) -> KeyPlan:
    """Key length from one of the asymptotic scaling rules (logs base 2).

    * ``haar_epsilon``: ``4 log2(1/eps)``
    * ``unary``:        ``log2(n) log2(n/eps)``
    * ``block``:        ``b log2(b/eps)``

    The result is ``ceil(constant_factor * f)``.
    """
    rule = KeyRule(rule)
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if n_bits < 1:
        raise DomainError(f"n_bits must be >= 1, got {n_bits}")
    if b < 1:
        raise DomainError(f"b must be >= 1, got {b}")
    if constant_factor < 0:
        raise DomainError(f"constant_factor must be >= 0, got {constant_factor!r}")
    if rule is KeyRule.HAAR_EPSILON:
        f = 4.0 * math.log2(1.0 / epsilon)
    elif rule is KeyRule.UNARY:
        f = math.log2(n_bits) * math.log2(n_bits / epsilon)
    else:
        f = b * math.log2(b / epsilon)
    # round first so log2 of exact powers of two cannot ceil up by one ulp
    m = max(0, math.ceil(round(constant_factor * f, 9)))
    return KeyPlan(rule, m, float(constant_factor), int(n_bits), float(epsilon), int(b))


@dataclass(frozen=True)
class LeakageBudget:
    """Linear leakage account: ``total = epsilon_per_use * uses``.

    ``total`` is an exact :class:`~fractions.Fraction` of the float
    ``epsilon_per_use``, so budgets add without rounding drift.
    """

    epsilon_per_use: float
    uses: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon_per_use <= 1.0:
            raise DomainError(f"epsilon_per_use must lie in [0, 1], got {self.epsilon_per_use!r}")
        if self.uses < 0:
            raise DomainError(f"uses must be >= 0, got {self.uses}")

    @property
    def total(self) -> Fraction:
        return Fraction(self.epsilon_per_use) * self.uses

    def __float__(self):
        return float(self.total)

    def __add__(self, other: "LeakageBudget") -> "LeakageBudget":
        if not isinstance(other, LeakageBudget):
            return NotImplemented
        if other.epsilon_per_use != self.epsilon_per_use:
            raise DomainError("cannot merge budgets with different per-use leakage")
        return LeakageBudget(self.epsilon_per_use, self.uses + other.uses)


def leakage_budget(epsilon_per_use: float, uses: int) -> LeakageBudget:
    return LeakageBudget(float(epsilon_per_use), int(uses))


__all__ = [
    "Method", "ProbeObjectiveValue", "OptimizerConfig", "ProbeOptimum", "SecurityReport",
    "ScopeError", "probe_objective", "probe_gradient", "tangent_gradient", "maximize_probe",
    "ic_upper_bound", "accessible_info_oracle", "measurement_directions", "bloch_vectors",
    "hyperspherical_states", "KeyRule", "KeyPlan", "key_length_plan", "LeakageBudget",
    "leakage_budget", "parse_security_record",
]
