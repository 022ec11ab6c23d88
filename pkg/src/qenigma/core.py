"""Complex linear-algebra substrate: states, unitaries, Haar sampling, distances."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

ALGEBRA_TOL = 1e-10
SCALAR_TOL = 1e-12
PSD_TOL = 1e-9
MAX_DIM = 4096


class QEnigmaError(Exception):
    """Base class for library errors."""


class DomainError(QEnigmaError, ValueError):
    """An argument lies outside the operation's domain."""


class CapacityError(QEnigmaError, ValueError):
    """A requested size exceeds the supported capacity."""


def check_dim(dim: int) -> int:
    dim = int(dim)
    if dim < 1:
        raise DomainError(f"dimension must be >= 1, got {dim}")
    if dim > MAX_DIM:
        raise CapacityError(f"dimension {dim} exceeds the supported maximum {MAX_DIM}")
    return dim


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        check_dim(a.size)
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > ALGEBRA_TOL:
            raise DomainError(f"state norm is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", _freeze(a))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"density matrix must be square, got shape {m.shape}")
        check_dim(m.shape[0])
        if np.max(np.abs(m - m.conj().T)) > ALGEBRA_TOL:
            raise DomainError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > ALGEBRA_TOL:
            raise DomainError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise DomainError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        dim = check_dim(dim)
        return cls(np.eye(dim, dtype=np.complex128) / dim)


@dataclass(frozen=True, eq=False)
class Unitary:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"unitary must be square, got shape {m.shape}")
        check_dim(m.shape[0])
        dev = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if dev > ALGEBRA_TOL:
            raise DomainError(f"matrix is not unitary (max |U^dag U - I| = {dev:.3e})")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Unitary":
        return cls(np.eye(check_dim(dim), dtype=np.complex128))


def _mix64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


@dataclass
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    The stream owns a numpy ``Generator`` built lazily from a ``SeedSequence``
    keyed on both integers; use :meth:`split` to hand independent streams to
    concurrent tasks instead of sharing one.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(self.stream_id) & 0xFFFFFFFFFFFFFFFF

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def split(self, *labels) -> "RngStream":
        """Child stream whose id is a hash of this stream id and ``labels``."""
        return RngStream(self.seed, _mix64(self.stream_id, *labels))

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def poisson(self, lam, size=None):
        return self.generator.poisson(lam, size)


def as_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


def basis_state(dim: int, j: int) -> PureState:
    dim = check_dim(dim)
    if not 0 <= j < dim:
        raise DomainError(f"basis index {j} out of range for dimension {dim}")
    a = np.zeros(dim, dtype=np.complex128)
    a[j] = 1.0
    return PureState(a)


def haar_matrix(dim: int, rng) -> np.ndarray:
    """Haar-distributed unitary as a bare array.

    QR of a complex Ginibre matrix, with each column of Q rescaled by the
    phase of the matching diagonal entry of R. Without that correction the
    result is not Haar distributed.
    """
    dim = check_dim(dim)
    rng = as_rng(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def haar_unitary(dim: int, rng) -> Unitary:
    return Unitary(haar_matrix(dim, rng))


def apply_unitary(u: Unitary, s: PureState) -> PureState:
    if u.dim != s.dim:
        raise DomainError(f"dimension mismatch: unitary {u.dim}, state {s.dim}")
    return PureState(u.matrix @ s.amplitudes)


def dagger(u: Unitary) -> Unitary:
    return Unitary(u.matrix.conj().T)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the trace norm of ``a - b``."""
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.matrix - b.matrix
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())
