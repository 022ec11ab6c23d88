"""End-to-end protocol experiments with leakage accounting.

Trials are simulated in fixed blocks of :data:`CHUNK` trials. Block ``c``
draws all of its randomness from its own stream, ``seed / (experiment, c)``,
and always draws a full block's worth. So results never depend on the thread
count, and adding trials never changes the earlier ones.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channels import ChannelParams, Outcome
from .core import DomainError, PureState, RngStream
from .locking import LockingEnsemble, generate_haar_ensemble, mub_qubit_ensemble
from .security import LeakageBudget, OptimizerConfig, SecurityReport, ic_upper_bound, leakage_budget

CHUNK = 1024

_OUTCOMES = {
    kernels.OUTCOME_PHOTON: Outcome.PHOTON_IN_MODE,
    kernels.OUTCOME_NO_PHOTON: Outcome.NO_PHOTON,
    kernels.OUTCOME_MULTI: Outcome.MULTI_PHOTON,
}

RECORD_FIELDS = ("trial", "rounds", "delivered", "leak_total", "decode_ok")


@dataclass(frozen=True)
class ExperimentConfig:
    n_bits: int | None = None
    n_modes: int | None = None
    m_bits: int = 2
    channel: ChannelParams = field(default_factory=ChannelParams)
    trials: int = 10000
    max_rounds: int = 64
    epsilon_per_use: float = 0.001
    seed: int = 0
    ensemble: str = "haar"
    message: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.max_rounds < 1:
            raise DomainError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.m_bits < 0:
            raise DomainError(f"m_bits must be >= 0, got {self.m_bits}")
        if not 0.0 <= self.epsilon_per_use <= 1.0:
            raise DomainError(f"epsilon_per_use must lie in [0, 1], got {self.epsilon_per_use!r}")
        if self.ensemble not in ("haar", "mub"):
            raise DomainError(f"ensemble must be 'haar' or 'mub', got {self.ensemble!r}")
        if self.n_bits is None and self.n_modes is None:
            raise DomainError("either n_bits or n_modes is required")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")

    @property
    def dim(self) -> int:
        return self.n_modes if self.n_modes is not None else 2 ** self.n_bits

    @property
    def message_bits(self) -> int:
        if self.n_modes is not None:
            return int(math.floor(math.log2(self.n_modes)))
        return self.n_bits


def build_ensemble(cfg: ExperimentConfig) -> LockingEnsemble:
    """The public ensemble fixed by ``cfg``: anyone holding the seed rebuilds it."""
    if cfg.ensemble == "mub":
        if cfg.n_modes is not None and cfg.n_modes != 2 ** cfg.message_bits:
            raise DomainError("the MUB ensemble needs a power-of-two dimension")
        if cfg.m_bits != 1:
            raise DomainError("the MUB ensemble has exactly one key bit")
        return mub_qubit_ensemble(cfg.message_bits)
    return generate_haar_ensemble(cfg.message_bits, cfg.m_bits, RngStream(cfg.seed).split("ensemble"),
                                  dim=cfg.dim)


@dataclass(frozen=True)
class RoundRecord:
    index: int
    key: int
    outcome: Outcome
    decoded: int | None


@dataclass(frozen=True)
class Transcript:
    trial: int
    message: int
    rounds: tuple
    delivered: bool
    transmissions_used: int
    leakage: LeakageBudget
    keys_consumed_bits: int
    key_bits_per_round: int
    decoded: int | None
    payload: str = "message"

    def __post_init__(self):
        if self.transmissions_used != len(self.rounds):
            raise DomainError("transmissions_used must equal the number of rounds")
        if self.leakage.uses != self.transmissions_used:
            raise DomainError("leakage must be charged once per transmission")
        if self.keys_consumed_bits != self.key_bits_per_round * self.transmissions_used:
            raise DomainError("every round must consume one fresh key")

    @property
    def decode_ok(self) -> bool:
        return self.delivered and self.decoded == self.message

    def record(self) -> dict:
        return {
            "trial": self.trial,
            "rounds": self.transmissions_used,
            "delivered": self.delivered,
            "leak_total": float(self.leakage.total),
            "decode_ok": self.decode_ok,
        }


@dataclass
class ResendResult:
    transcripts: list
    n_modes: int
    m_bits: int
    tau: float
    max_rounds: int

    @property
    def delivery_rate(self) -> float:
        return sum(t.delivered for t in self.transcripts) / len(self.transcripts)

    @property
    def mean_rounds(self) -> float:
        return sum(t.transmissions_used for t in self.transcripts) / len(self.transcripts)

    @property
    def mean_leakage(self) -> float:
        return float(sum(t.leakage.total for t in self.transcripts) / len(self.transcripts))

    @property
    def decode_accuracy(self) -> float:
        delivered = [t for t in self.transcripts if t.delivered]
        return sum(t.decode_ok for t in delivered) / len(delivered) if delivered else 0.0

    def leakage_totals(self) -> np.ndarray:
        return np.array([float(t.leakage.total) for t in self.transcripts])

    def delivered_within(self, rounds: int) -> float:
        """Fraction of trials delivered using at most ``rounds`` transmissions."""
        return sum(t.delivered and t.transmissions_used <= rounds for t in self.transcripts) / len(self.transcripts)

    def summary(self) -> dict:
        return {
            "trials": len(self.transcripts),
            "delivery_rate": self.delivery_rate,
            "mean_rounds": self.mean_rounds,
            "mean_leak": self.mean_leakage,
            "decode_accuracy": self.decode_accuracy,
        }


def _chunks(trials: int):
    for c in range(math.ceil(trials / CHUNK)):
        yield c, min(CHUNK, trials - c * CHUNK)


def _map_chunks(fn, trials: int, workers: int):
    jobs = list(_chunks(trials))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def _resend_chunk(cfg: ExperimentConfig, e: LockingEnsemble, label: str, chunk: int, size: int,
                  fixed_message: int | None):
    rng = RngStream(cfg.seed).split(label, chunk)
    R = cfg.max_rounds
    N = e.dim
    messages = rng.integers(0, e.n_messages, size=CHUNK)
    keys = rng.integers(0, e.n_keys, size=(CHUNK, R))
    loss_u = rng.random((CHUNK, R))
    detect_u = rng.random((CHUNK, R))
    noise_k = rng.poisson(cfg.channel.mean_noise_photons, size=(CHUNK, R))
    noise_mode = rng.integers(0, N, size=(CHUNK, R))
    if fixed_message is not None:
        messages[:] = fixed_message
    rounds, delivered, decoded, outcomes, modes = kernels.resend_batch(
        e.matrices, messages[:size], keys[:size], loss_u[:size], detect_u[:size],
        noise_k[:size], noise_mode[:size], cfg.channel.tau)
    return messages[:size], keys[:size], rounds, delivered, decoded, outcomes, modes


def _run_resend(cfg: ExperimentConfig, label: str, payload: str, fixed_message: int | None) -> ResendResult:
    if cfg.n_modes is None or cfg.n_modes < 2:
        raise DomainError("the resend protocol needs a unary setting with n_modes >= 2")
    e = build_ensemble(cfg)
    parts = _map_chunks(lambda c, n: _resend_chunk(cfg, e, label, c, n, fixed_message), cfg.trials, cfg.workers)
    transcripts = []
    trial = 0
    for messages, keys, rounds, delivered, decoded, outcomes, modes in parts:
        for b in range(messages.size):
            used = int(rounds[b])
            recs = tuple(
                RoundRecord(r, int(keys[b, r]), _OUTCOMES[int(outcomes[b, r])],
                            int(modes[b, r]) if modes[b, r] >= 0 else None)
                for r in range(used))
            dec = int(decoded[b])
            transcripts.append(Transcript(
                trial=trial,
                message=int(messages[b]),
                rounds=recs,
                delivered=bool(delivered[b]),
                transmissions_used=used,
                leakage=leakage_budget(cfg.epsilon_per_use, used),
                keys_consumed_bits=e.m_bits * used,
                key_bits_per_round=e.m_bits,
                decoded=dec if dec >= 0 else None,
                payload=payload,
            ))
            trial += 1
    return ResendResult(transcripts, e.dim, e.m_bits, cfg.channel.tau, cfg.max_rounds)


def run_resend_protocol(cfg: ExperimentConfig) -> ResendResult:
    """Lossy single-photon link where Bob asks for a resend, under a fresh key, until a photon arrives.

    Each round locks the unary codeword with a freshly drawn key, sends it
    through loss and noise, and has Bob undo the key and detect. A missing
    photon or a multi-photon event triggers a resend. Trials that use up
    ``max_rounds`` are recorded as undelivered.
    """
    if cfg.message is not None and not 0 <= cfg.message < 2 ** cfg.message_bits:
        raise DomainError(f"message {cfg.message} out of range")
    return _run_resend(cfg, "resend", "message", cfg.message)


def run_key_distribution(cfg: ExperimentConfig) -> ResendResult:
    """Resend protocol carrying a fresh uniformly random key per trial.

    Nothing Alice sends is ever known plaintext, so a fixed ``message`` is
    rejected.
    """
    if cfg.message is not None:
        raise DomainError("key distribution draws fresh random payloads; a fixed message is not allowed")
    return _run_resend(cfg, "key_distribution", "key", None)


def shared_keys(result: ResendResult) -> list[tuple[int, int]]:
    """(Alice's key, Bob's key) for every delivered key-distribution trial."""
    return [(t.message, t.decoded) for t in result.transcripts if t.delivered]


@dataclass
class BlockReport:
    block_length: int
    repetition: int
    symbol_error_rate: float
    block_error_rate: float
    leakage: LeakageBudget
    trials: int
    dim: int
    block_ok: np.ndarray = field(repr=False)
    use_errors: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.leakage.uses != self.block_length:
            raise DomainError("block leakage must be charged once per channel use")

    def records(self):
        leak = float(self.leakage.total)
        for i in range(self.trials):
            yield {
                "trial": i,
                "rounds": self.block_length,
                "delivered": True,
                "leak_total": leak,
                "decode_ok": bool(self.block_ok[i]),
            }

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "symbol_error_rate": self.symbol_error_rate,
            "block_error_rate": self.block_error_rate,
            "leak_total": float(self.leakage.total),
        }


def _block_chunk(cfg, e, r, chunk, size):
    rng = RngStream(cfg.seed).split("depolarize_block", r, chunk)
    messages = rng.integers(0, e.n_messages, size=CHUNK)
    keys = rng.integers(0, e.n_keys, size=(CHUNK, r))
    dep_u = rng.random((CHUNK, r))
    repl = rng.integers(0, e.dim, size=(CHUNK, r))
    decoded, block = kernels.depolarizing_block(
        e.matrices, messages[:size], keys[:size], dep_u[:size], repl[:size], cfg.channel.eta)
    return messages[:size], decoded, block


def run_depolarizing_block(cfg: ExperimentConfig, repetition: int) -> BlockReport:
    """Repetition code over the locked depolarizing channel.

    Each message symbol goes out ``repetition`` times, each use under its own
    fresh key. Every use is locked, depolarized and unlocked, and Bob takes a
    majority vote. A depolarized use is simulated by replacing the state with
    a uniformly random basis state of the locked basis, which is an exact
    unravelling of the fully mixed state.
    """
    if repetition < 1 or repetition % 2 == 0:
        raise DomainError(f"repetition must be a positive odd integer, got {repetition}")
    if cfg.n_bits is None:
        raise DomainError("the depolarizing experiment needs n_bits (qudit dimension 2**n_bits)")
    e = build_ensemble(cfg)
    parts = _map_chunks(lambda c, n: _block_chunk(cfg, e, repetition, c, n), cfg.trials, cfg.workers)
    sent = np.concatenate([p[0] for p in parts])
    decoded = np.concatenate([p[1] for p in parts])
    block = np.concatenate([p[2] for p in parts])
    use_errors = decoded != sent[:, None]
    block_ok = block == sent
    return BlockReport(
        block_length=repetition,
        repetition=repetition,
        symbol_error_rate=float(use_errors.mean()),
        block_error_rate=float(np.mean(~block_ok)),
        leakage=leakage_budget(cfg.epsilon_per_use, repetition),
        trials=cfg.trials,
        dim=e.dim,
        block_ok=block_ok,
        use_errors=use_errors,
    )


def eve_intercept_analysis(cfg: ExperimentConfig, states=None,
                           optimizer: OptimizerConfig | None = None) -> SecurityReport:
    """Bound on what Eve learns from intercepted locked states.

    Eve knows the public ensemble (it is rebuilt from ``cfg``) but not the
    key. If intercepted ``states`` are given, each must be one of the locked
    states ``U_k|j>`` up to a phase.
    """
    e = build_ensemble(cfg)
    if states is not None:
        psi = e.locked_columns
        for s in states:
            amps = s.amplitudes if isinstance(s, PureState) else np.asarray(s)
            if amps.shape != (e.dim,):
                raise DomainError("intercepted state has the wrong dimension")
            if np.max(np.abs(psi.conj().T @ amps)) ** 2 < 1 - 1e-9:
                raise DomainError("intercepted state is not a member of the public ensemble")
    return ic_upper_bound(e, optimizer or OptimizerConfig(seed=cfg.seed))
