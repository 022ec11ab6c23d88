"""Keyed unitary ensembles and the lock/unlock round trip.

Binary ensemble container (all little-endian)::

    bytes 0-3    magic b"QLK1"
    int64        dim
    int64        n_bits
    int64        m_bits
    then 2**m_bits blocks of dim*dim complex entries, row-major, each entry
    stored as two float64 values (real, imag)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import (
    MAX_DIM,
    CapacityError,
    DensityMatrix,
    DomainError,
    PureState,
    Unitary,
    as_rng,
    check_dim,
    haar_matrix,
)

MAX_KEY_BITS = 12
# ceiling on 2**m * dim**2 complex entries held densely (1 GiB at 16 bytes each)
MAX_ENSEMBLE_ENTRIES = 2 ** 26
MAGIC = b"QLK1"
_HEADER = struct.Struct("<4sqqq")

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


@dataclass(frozen=True)
class Message:
    n_bits: int
    value: int

    def __post_init__(self):
        if self.n_bits < 1:
            raise DomainError(f"n_bits must be >= 1, got {self.n_bits}")
        if not 0 <= self.value < 2 ** self.n_bits:
            raise DomainError(f"message {self.value} out of range for {self.n_bits} bits")


@dataclass(frozen=True)
class Key:
    m_bits: int
    value: int

    def __post_init__(self):
        if self.m_bits < 0:
            raise DomainError(f"m_bits must be >= 0, got {self.m_bits}")
        if not 0 <= self.value < 2 ** self.m_bits:
            raise DomainError(f"key {self.value} out of range for {self.m_bits} bits")


class LockingEnsemble:
    """The public family ``{U_k}`` of ``2**m_bits`` unitaries on ``dim`` levels.

    Messages index the first ``2**n_bits`` basis states, so ``dim`` may exceed
    ``2**n_bits`` (unary encodings over a mode count that is not a power of two).
    The unitaries are held as one read-only ``(2**m, dim, dim)`` array.
    """

    def __init__(self, dim: int, n_bits: int, m_bits: int, unitaries, *, validate: bool = True):
        dim = check_dim(dim)
        if n_bits < 1 or 2 ** n_bits > dim:
            raise DomainError(f"need 1 <= n_bits and 2**n_bits <= dim, got n_bits={n_bits}, dim={dim}")
        if m_bits < 0:
            raise DomainError(f"m_bits must be >= 0, got {m_bits}")
        _check_capacity(dim, m_bits)
        if isinstance(unitaries, np.ndarray):
            mats = np.array(unitaries, dtype=np.complex128)
        else:
            mats = np.array([u.matrix if isinstance(u, Unitary) else u for u in unitaries],
                            dtype=np.complex128)
        if mats.shape != (2 ** m_bits, dim, dim):
            raise DomainError(f"expected {2 ** m_bits} unitaries of size {dim}, got array {mats.shape}")
        if validate:
            eye = np.eye(dim)
            for k, u in enumerate(mats):
                if np.max(np.abs(u.conj().T @ u - eye)) > 1e-10:
                    raise DomainError(f"ensemble element {k} is not unitary")
        mats.setflags(write=False)
        self.dim = dim
        self.n_bits = int(n_bits)
        self.m_bits = int(m_bits)
        self.matrices = mats

    def __len__(self):
        return self.matrices.shape[0]

    def __repr__(self):
        return f"LockingEnsemble(dim={self.dim}, n_bits={self.n_bits}, m_bits={self.m_bits})"

    @property
    def n_messages(self) -> int:
        return 2 ** self.n_bits

    @property
    def n_keys(self) -> int:
        return 2 ** self.m_bits

    @property
    def unitaries(self) -> list[Unitary]:
        return [Unitary(u) for u in self.matrices]

    def unitary(self, k: int) -> Unitary:
        return Unitary(self.matrices[k])

    @cached_property
    def locked_columns(self) -> np.ndarray:
        """All locked states ``U_k|j>`` as columns of a ``(dim, 2**m * 2**n)`` array.

        Column ``k * 2**n + j`` holds ``U_k|j>``.
        """
        cols = self.matrices[:, :, : self.n_messages]           # (K, d, J)
        out = np.ascontiguousarray(cols.transpose(1, 0, 2).reshape(self.dim, -1))
        out.setflags(write=False)
        return out


def _check_capacity(dim: int, m_bits: int) -> None:
    if dim > MAX_DIM:
        raise CapacityError(f"dimension {dim} exceeds {MAX_DIM}")
    if m_bits > MAX_KEY_BITS:
        raise CapacityError(f"m_bits={m_bits} exceeds the dense-storage cap of {MAX_KEY_BITS}")
    if 2 ** m_bits * dim * dim > MAX_ENSEMBLE_ENTRIES:
        raise CapacityError(f"2**{m_bits} unitaries of size {dim} exceed the memory guard")


def generate_haar_ensemble(n_bits: int, m_bits: int, rng, dim: int | None = None) -> LockingEnsemble:
    """``2**m_bits`` independent Haar unitaries on ``dim`` (default ``2**n_bits``) levels.

    Unitary ``k`` is drawn from ``rng.split(k)``, so raising ``m_bits`` with the
    same stream extends the ensemble instead of redrawing it.
    """
    if n_bits < 1:
        raise DomainError(f"n_bits must be >= 1, got {n_bits}")
    if m_bits < 0:
        raise DomainError(f"m_bits must be >= 0, got {m_bits}")
    if dim is None:
        if n_bits > 12:
            raise CapacityError(f"2**{n_bits} exceeds the supported maximum dimension {MAX_DIM}")
        dim = 2 ** n_bits
    dim = check_dim(dim)
    _check_capacity(dim, m_bits)
    rng = as_rng(rng)
    mats = np.empty((2 ** m_bits, dim, dim), dtype=np.complex128)
    for k in range(2 ** m_bits):
        mats[k] = haar_matrix(dim, rng.split("unitary", k))
    return LockingEnsemble(dim, n_bits, m_bits, mats, validate=False)


def mub_qubit_ensemble(n_bits: int) -> LockingEnsemble:
    """Identity plus the n-fold Hadamard: two mutually unbiased bases."""
    if n_bits < 1:
        raise DomainError(f"n_bits must be >= 1, got {n_bits}")
    if n_bits > 12:
        raise CapacityError(f"2**{n_bits} exceeds the supported maximum dimension {MAX_DIM}")
    h = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n_bits):
        h = np.kron(h, _HADAMARD)
    dim = 2 ** n_bits
    return LockingEnsemble(dim, n_bits, 1, np.stack([np.eye(dim, dtype=np.complex128), h]))


def _message_value(e: LockingEnsemble, j) -> int:
    if isinstance(j, Message):
        if j.n_bits != e.n_bits:
            raise DomainError(f"message has {j.n_bits} bits, ensemble expects {e.n_bits}")
        return j.value
    j = int(j)
    if not 0 <= j < e.n_messages:
        raise DomainError(f"message {j} out of range for {e.n_bits} bits")
    return j


def _key_value(e: LockingEnsemble, k) -> int:
    if isinstance(k, Key):
        if k.m_bits != e.m_bits:
            raise DomainError(f"key has {k.m_bits} bits, ensemble expects {e.m_bits}")
        return k.value
    k = int(k)
    if not 0 <= k < e.n_keys:
        raise DomainError(f"key {k} out of range for {e.m_bits} bits")
    return k


def lock(e: LockingEnsemble, j, k) -> PureState:
    """``U_k|j>``; ``j`` and ``k`` may be ints or :class:`Message`/:class:`Key`."""
    j = _message_value(e, j)
    k = _key_value(e, k)
    return PureState(e.matrices[k][:, j])


def unlock(e: LockingEnsemble, s: PureState, k) -> tuple[Message, float]:
    """Undo ``U_k`` and read out the most likely basis state.

    Returns the decoded message and its squared amplitude. Ties go to the
    lowest index. A decoded index beyond the message range (possible only when
    ``dim > 2**n_bits``) raises :class:`DomainError`.
    """
    if s.dim != e.dim:
        raise DomainError(f"dimension mismatch: state {s.dim}, ensemble {e.dim}")
    k = _key_value(e, k)
    back = e.matrices[k].conj().T @ s.amplitudes
    prob = back.real ** 2 + back.imag ** 2
    j = int(np.argmax(prob))
    if j >= e.n_messages:
        raise DomainError(f"decoded basis state {j} is not a valid {e.n_bits}-bit message")
    return Message(e.n_bits, j), float(prob[j])


def eve_average_state(e: LockingEnsemble) -> DensityMatrix:
    """Uniform mixture of every locked state, summed exactly over keys and messages."""
    J = e.n_messages
    rho = np.zeros((e.dim, e.dim), dtype=np.complex128)
    for u in e.matrices:
        cols = u[:, :J]
        rho += cols @ cols.conj().T
    rho /= e.n_keys * J
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def save_ensemble(e: LockingEnsemble, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, e.dim, e.n_bits, e.m_bits))
        fh.write(np.ascontiguousarray(e.matrices, dtype="<c16").tobytes())


def load_ensemble(path) -> LockingEnsemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DomainError(f"{path}: truncated ensemble header")
    magic, dim, n_bits, m_bits = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DomainError(f"{path}: bad magic {magic!r}")
    if m_bits < 0 or m_bits > MAX_KEY_BITS:
        raise CapacityError(f"{path}: m_bits={m_bits} outside the supported range")
    check_dim(dim)
    expected = _HEADER.size + (2 ** m_bits) * dim * dim * 16
    if len(raw) != expected:
        raise DomainError(f"{path}: expected {expected} bytes, found {len(raw)}")
    mats = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(2 ** m_bits, dim, dim)
    return LockingEnsemble(dim, n_bits, m_bits, mats.astype(np.complex128))


def message_states(e: LockingEnsemble, messages: Sequence[int], keys: Sequence[int]) -> list[PureState]:
    return [lock(e, j, k) for j, k in zip(messages, keys)]
