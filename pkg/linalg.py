"""Dense complex linear algebra over small multipartite Hilbert spaces.

Index convention: subsystem 0 is the most significant factor of the
Kronecker layout, i.e. |a b⟩ sits at index a * dims[1] + b.
"""

from dataclasses import dataclass
import math
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MAX_DIM = 2**14
HERMITIAN_TOL = 1e-12
UNIT_NORM_TOL = 1e-12

_max_dim = DEFAULT_MAX_DIM


class CapacityError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def set_max_dim(n: int):
    """Set the process-wide cap on total Hilbert space dimension."""
    global _max_dim
    if n < 1:
        raise ValueError(f'max dim must be positive, got {n}')
    _max_dim = n


def max_dim() -> int:
    return _max_dim


def check_capacity(total: int, what: str = 'operator'):
    if total > _max_dim:
        raise CapacityError(f'{what} of total dimension {total} exceeds cap {_max_dim}')


@dataclass(frozen=True)
class MultipartiteShape:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError('a shape needs at least one subsystem')
        for d in dims:
            if d < 1:
                raise ValueError(f'local dimensions must be >= 1, got {dims}')
        object.__setattr__(self, 'dims', dims)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    @property
    def num_parties(self) -> int:
        return len(self.dims)

    def check_subsystem(self, i: int):
        if not 0 <= i < len(self.dims):
            raise IndexError(f'subsystem {i} out of range for dims {list(self.dims)}')

    def __add__(self, other: 'MultipartiteShape') -> 'MultipartiteShape':
        return MultipartiteShape(self.dims + other.dims)

    def select(self, indices: Iterable[int]) -> 'MultipartiteShape':
        return MultipartiteShape(tuple(self.dims[i] for i in indices))


def as_shape(dims: 'MultipartiteShape | Sequence[int] | int') -> MultipartiteShape:
    if isinstance(dims, MultipartiteShape):
        return dims
    if isinstance(dims, (int, np.integer)):
        return MultipartiteShape((int(dims),))
    return MultipartiteShape(tuple(dims))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class HermitianOperator:
    """A dense Hermitian matrix tagged with its tensor-factor structure.

    Construction symmetrizes as (M + M*)/2 when the asymmetry is within
    HERMITIAN_TOL (absolute, entrywise) and rejects otherwise.
    """

    __slots__ = ('shape', 'matrix')

    def __init__(self, matrix, dims=None):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f'expected a square matrix, got shape {m.shape}')
        shape = as_shape(dims if dims is not None else m.shape[0])
        if shape.total != m.shape[0]:
            raise ValueError(
                f'dims {list(shape.dims)} do not match matrix of size {m.shape[0]}'
            )
        check_capacity(shape.total)
        asym = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if asym > HERMITIAN_TOL:
            raise NotHermitianError(f'matrix is not Hermitian (asymmetry {asym:.3g})')
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'matrix', _freeze((m + m.conj().T) / 2))

    def __setattr__(self, name, value):
        raise AttributeError('HermitianOperator is immutable')

    def __repr__(self):
        return f'HermitianOperator(dims={list(self.shape.dims)})'

    @property
    def dims(self) -> tuple[int, ...]:
        return self.shape.dims

    @property
    def total(self) -> int:
        return self.shape.total

    @classmethod
    def identity(cls, dims) -> 'HermitianOperator':
        shape = as_shape(dims)
        check_capacity(shape.total)
        return cls(np.eye(shape.total), shape)

    @classmethod
    def zeros(cls, dims) -> 'HermitianOperator':
        shape = as_shape(dims)
        check_capacity(shape.total)
        return cls(np.zeros((shape.total, shape.total)), shape)

    @classmethod
    def projector(cls, state: 'PureState') -> 'HermitianOperator':
        v = state.amplitudes
        return cls(np.outer(v, v.conj()), state.shape)

    @classmethod
    def diagonal(cls, values, dims=None) -> 'HermitianOperator':
        return cls(np.diag(np.asarray(values, dtype=float)), dims)

    def with_dims(self, dims) -> 'HermitianOperator':
        return HermitianOperator(self.matrix, dims)

    def __add__(self, other: 'HermitianOperator') -> 'HermitianOperator':
        _check_same_total(self, other)
        return HermitianOperator(self.matrix + other.matrix, self.shape)

    def __sub__(self, other: 'HermitianOperator') -> 'HermitianOperator':
        _check_same_total(self, other)
        return HermitianOperator(self.matrix - other.matrix, self.shape)

    def __neg__(self) -> 'HermitianOperator':
        return HermitianOperator(-self.matrix, self.shape)

    def __mul__(self, c: float) -> 'HermitianOperator':
        return HermitianOperator(float(c) * self.matrix, self.shape)

    __rmul__ = __mul__

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return eigh(self).eigenvalues

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[-1])

    def is_psd(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol

    def is_density(self, tol: float = 1e-10) -> bool:
        return self.is_psd(tol) and abs(self.trace() - 1) <= tol

    def max_asymmetry(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m - m.conj().T)))

    def to_json(self) -> dict:
        return {
            'dims': list(self.dims),
            're': self.matrix.real.tolist(),
            'im': self.matrix.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> 'HermitianOperator':
        re = np.asarray(data['re'], dtype=float)
        im = np.asarray(data['im'], dtype=float) if 'im' in data else np.zeros_like(re)
        return cls(re + 1j * im, data['dims'])


def _check_same_total(a: HermitianOperator, b: HermitianOperator):
    if a.total != b.total:
        raise ValueError(f'dimension mismatch: {a.total} vs {b.total}')


@dataclass(frozen=True, eq=False)
class PureState:
    shape: MultipartiteShape
    amplitudes: np.ndarray

    def __post_init__(self):
        shape = as_shape(self.shape)
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if v.size != shape.total:
            raise ValueError(f'{v.size} amplitudes for dims {list(shape.dims)}')
        norm = np.linalg.norm(v)
        if abs(norm - 1) > UNIT_NORM_TOL:
            raise ValueError(f'state is not normalized (norm {norm!r})')
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'amplitudes', _freeze(v))

    @classmethod
    def normalized(cls, amplitudes, dims=None) -> 'PureState':
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError('cannot normalize the zero vector')
        return cls(dims if dims is not None else v.size, v / norm)

    @classmethod
    def basis(cls, dims, index: int) -> 'PureState':
        shape = as_shape(dims)
        v = np.zeros(shape.total, dtype=complex)
        v[index] = 1
        return cls(shape, v)

    def tensor(self, other: 'PureState') -> 'PureState':
        return PureState(self.shape + other.shape, np.kron(self.amplitudes, other.amplitudes))

    def projector(self) -> HermitianOperator:
        return HermitianOperator.projector(self)

    def to_json(self) -> dict:
        return {
            'dims': list(self.shape.dims),
            're': self.amplitudes.real.tolist(),
            'im': self.amplitudes.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> 'PureState':
        re = np.asarray(data['re'], dtype=float)
        im = np.asarray(data['im'], dtype=float) if 'im' in data else np.zeros_like(re)
        return cls.normalized(re + 1j * im, data['dims'])


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def tensor(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    check_capacity(a.total * b.total)
    return HermitianOperator(np.kron(a.matrix, b.matrix), a.shape + b.shape)


def tensor_all(*ops: HermitianOperator) -> HermitianOperator:
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def partial_trace(a: HermitianOperator, keep: Iterable[int]) -> HermitianOperator:
    """Trace out every subsystem not in keep; kept dims stay in order."""
    keep = sorted(set(keep))
    if not keep:
        raise ValueError('keep must name at least one subsystem')
    for i in keep:
        a.shape.check_subsystem(i)
    dims = a.dims
    n = len(dims)
    t = a.matrix.reshape(dims + dims)
    rows = list(range(n))
    cols = [n + k if k in keep else k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    reduced = np.einsum(t, rows + cols, out)
    kept = a.shape.select(keep)
    return HermitianOperator(reduced.reshape(kept.total, kept.total), kept)


def partial_transpose(a: HermitianOperator, subsystem: int) -> HermitianOperator:
    """|a b⟩⟨c d| -> |a d⟩⟨c b| on the given subsystem. An exact involution."""
    a.shape.check_subsystem(subsystem)
    dims = a.dims
    n = len(dims)
    t = a.matrix.reshape(dims + dims)
    t = np.swapaxes(t, subsystem, n + subsystem)
    return HermitianOperator(t.reshape(a.total, a.total), a.shape)


def eigh(a: HermitianOperator) -> EigenDecomposition:
    try:
        values, vectors = np.linalg.eigh(a.matrix)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f'eigensolver failed on {a!r}: {e}') from e
    return EigenDecomposition(
        eigenvalues=_freeze(values[::-1].copy()),
        eigenvectors=_freeze(vectors[:, ::-1].copy()),
    )


def trace_norm(a: HermitianOperator) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(a.matrix))))


def spectral_norm(a: HermitianOperator) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(a.matrix))))


def hs_inner(a, b):
    """Hilbert-Schmidt inner product Tr(a* b).

    Real for two HermitianOperators; plain ndarrays (e.g. |01⟩⟨10|) give a
    complex result.
    """
    ma = a.matrix if isinstance(a, HermitianOperator) else np.asarray(a, dtype=complex)
    mb = b.matrix if isinstance(b, HermitianOperator) else np.asarray(b, dtype=complex)
    if ma.shape != mb.shape:
        raise ValueError(f'dimension mismatch: {ma.shape} vs {mb.shape}')
    value = np.vdot(ma, mb)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        return float(value.real)
    return complex(value)


def fidelity(psi: PureState, phi: PureState) -> float:
    return float(abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2)


def haar_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit vector: normalized i.i.d. complex Gaussian entries."""
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def haar_vectors(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n Haar-random unit vectors as the rows of an (n, d) array."""
    v = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_state(dims, rng: np.random.Generator) -> PureState:
    shape = as_shape(dims)
    return PureState(shape, haar_vector(shape.total, rng))


def random_psd(dims, rng: np.random.Generator, rank: int | None = None) -> HermitianOperator:
    """Wishart-style random PSD operator G G*, scaled to unit spectral norm."""
    shape = as_shape(dims)
    d = shape.total
    rank = rank or d
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    m /= np.max(np.linalg.eigvalsh(m))
    return HermitianOperator(m, shape)


def random_density(dims, rng: np.random.Generator, rank: int | None = None) -> HermitianOperator:
    op = random_psd(dims, rng, rank)
    return HermitianOperator(op.matrix / op.trace(), op.shape)


def random_hermitian(dims, rng: np.random.Generator) -> HermitianOperator:
    shape = as_shape(dims)
    d = shape.total
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return HermitianOperator((g + g.conj().T) / 2, shape)
