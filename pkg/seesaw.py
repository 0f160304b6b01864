"""Maximize ⟨φ|C|φ⟩ over pure product states |φ_1⟩⊗…⊗|φ_m⟩.

Each seesaw step fixes all local vectors but one and replaces that one by
the top eigenvector of the effective operator, so the objective never
decreases. Multistart plus a brute-force sampling oracle handle the
non-convexity.
"""

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from linalg import (
    CapacityError,
    HermitianOperator,
    MultipartiteShape,
    PureState,
    as_shape,
    eigh,
    haar_vector,
    haar_vectors,
    spectral_norm,
)
from util import chunks, parallel_map, spawn_generators

SWEEP_TOL = 1e-10
MAX_SWEEPS = 500
DEFAULT_RESTARTS = 32
PSD_PRECONDITION_TOL = 1e-6
MONOTONE_TOL = 1e-12
DEGENERACY_TOL = 1e-12
BRUTE_FORCE_MAX_DIM = 64


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProductState:
    shape: MultipartiteShape
    locals: tuple[np.ndarray, ...]

    def __post_init__(self):
        shape = as_shape(self.shape)
        if len(self.locals) != shape.num_parties:
            raise ValueError(
                f'{len(self.locals)} local vectors for {shape.num_parties} parties'
            )
        vectors = []
        for d, v in zip(shape.dims, self.locals):
            v = np.array(v, dtype=complex).reshape(-1)
            if v.size != d:
                raise ValueError(f'local vector of length {v.size} for dimension {d}')
            norm = np.linalg.norm(v)
            if abs(norm - 1) > 1e-12:
                raise ValueError(f'local vector is not normalized (norm {norm!r})')
            v.setflags(write=False)
            vectors.append(v)
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'locals', tuple(vectors))

    @classmethod
    def normalized(cls, dims, vectors) -> 'ProductState':
        return cls(dims, tuple(np.asarray(v) / np.linalg.norm(v) for v in vectors))

    @classmethod
    def random(cls, dims, rng: np.random.Generator) -> 'ProductState':
        shape = as_shape(dims)
        return cls(shape, tuple(haar_vector(d, rng) for d in shape.dims))

    @classmethod
    def basis(cls, dims, indices) -> 'ProductState':
        shape = as_shape(dims)
        vectors = []
        for d, i in zip(shape.dims, indices):
            v = np.zeros(d, dtype=complex)
            v[i] = 1
            vectors.append(v)
        return cls(shape, tuple(vectors))

    def vector(self) -> np.ndarray:
        return reduce(np.kron, self.locals)

    def pure_state(self) -> PureState:
        return PureState.normalized(self.vector(), self.shape)

    def replace_local(self, j: int, v: np.ndarray) -> 'ProductState':
        vectors = list(self.locals)
        vectors[j] = v / np.linalg.norm(v)
        return ProductState(self.shape, tuple(vectors))

    def pair(self, other: 'ProductState') -> 'ProductState':
        """Local-by-local tensor product onto the paired layout (X_j ⊗ Y_j)."""
        if self.shape.num_parties != other.shape.num_parties:
            raise ValueError('paired states need the same number of parties')
        dims = tuple(a * b for a, b in zip(self.shape.dims, other.shape.dims))
        return ProductState(
            dims, tuple(np.kron(a, b) for a, b in zip(self.locals, other.locals))
        )

    def to_json(self) -> dict:
        return {
            'dims': list(self.shape.dims),
            'locals': [{'re': v.real.tolist(), 'im': v.imag.tolist()} for v in self.locals],
        }

    @classmethod
    def from_json(cls, data: dict) -> 'ProductState':
        vectors = [
            np.asarray(v['re'], dtype=float) + 1j * np.asarray(v['im'], dtype=float)
            for v in data['locals']
        ]
        return cls.normalized(data['dims'], vectors)


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    value: float
    state: ProductState
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            'value': self.value,
            'iterations': self.iterations,
            'converged': self.converged,
            'state': self.state.to_json(),
            'trace': list(self.trace),
        }


def expectation(c: HermitianOperator, state: ProductState) -> float:
    v = state.vector()
    return float(np.vdot(v, c.matrix @ v).real)


def product_vectors(local_batches: list[np.ndarray]) -> np.ndarray:
    """Rows of the (n, total) array are the tensor products of the local rows."""
    out = local_batches[0]
    n = out.shape[0]
    for v in local_batches[1:]:
        out = (out[:, :, None] * v[:, None, :]).reshape(n, -1)
    return out


def batch_expectations(c: HermitianOperator, vectors: np.ndarray) -> np.ndarray:
    return np.einsum('si,si->s', vectors.conj(), vectors @ c.matrix.T).real


def effective_operator(
    c: HermitianOperator, state: ProductState, j: int
) -> HermitianOperator:
    """Contract c against every local vector except the j-th.

    The result E satisfies ⟨φ_j|E|φ_j⟩ = ⟨⊗φ|c|⊗φ⟩ for every unit φ_j.
    """
    if c.dims != state.shape.dims:
        raise ValueError(
            f'state dims {list(state.shape.dims)} do not match operator dims {list(c.dims)}'
        )
    c.shape.check_subsystem(j)
    dims = c.dims
    n = len(dims)
    operands = [c.matrix.reshape(dims + dims), list(range(2 * n))]
    for k, v in enumerate(state.locals):
        if k == j:
            continue
        operands += [v.conj(), [k], v, [n + k]]
    return HermitianOperator(np.einsum(*operands, [j, n + j]), dims[j])


def _top_eigenvector(e: HermitianOperator, current: np.ndarray) -> tuple[float, np.ndarray]:
    """Leading eigenpair; on a degenerate top eigenvalue keep closest to current."""
    decomposition = eigh(e)
    values, vectors = decomposition.eigenvalues, decomposition.eigenvectors
    top = float(values[0])
    degenerate = values >= top - DEGENERACY_TOL * max(1.0, abs(top))
    if np.count_nonzero(degenerate) > 1:
        space = vectors[:, degenerate]
        v = space @ (space.conj().T @ current)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return top, v / norm
    return top, vectors[:, 0]


def local_ascent(
    c: HermitianOperator,
    start: ProductState,
    tol: float = SWEEP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> OptimizationResult:
    """One seesaw run from start. Works for any Hermitian c."""
    state = start
    value = expectation(c, state)
    trace = [value]
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        before = value
        for j in range(c.shape.num_parties):
            top, v = _top_eigenvector(effective_operator(c, state, j), state.locals[j])
            assert top >= value - MONOTONE_TOL * max(1.0, abs(value)), (
                f'seesaw objective decreased: {value!r} -> {top!r}'
            )
            state = state.replace_local(j, v)
            value = top
        trace.append(value)
        if value - before < tol:
            converged = True
            break

    return OptimizationResult(
        value=expectation(c, state),
        state=state,
        iterations=sweeps,
        converged=converged,
        trace=trace,
    )


def best_basis_state(c: HermitianOperator) -> ProductState:
    i = int(np.argmax(np.diag(c.matrix).real))
    return ProductState.basis(c.dims, np.unravel_index(i, c.dims))


def seesaw_max(
    c: HermitianOperator,
    restarts: int = DEFAULT_RESTARTS,
    rng: np.random.Generator | None = None,
    initial_states: tuple[ProductState, ...] = (),
    tol: float = SWEEP_TOL,
    max_sweeps: int = MAX_SWEEPS,
    workers: int = 1,
) -> OptimizationResult:
    """Best of `restarts` seesaw runs from Haar-random product states.

    The product basis state with the largest diagonal entry of c is always
    one of the starts. Each random restart draws from its own spawned stream,
    so the result depends only on (rng seed, restarts).
    """
    min_eig = c.min_eigenvalue()
    if min_eig < -PSD_PRECONDITION_TOL:
        raise PreconditionError(
            f'accept operator must be PSD, min eigenvalue is {min_eig:.3g}'
        )
    if rng is None:
        rng = np.random.default_rng(0)
    starts = list(initial_states) + [best_basis_state(c)]
    if restarts > 0:
        starts += [ProductState.random(c.dims, g) for g in spawn_generators(rng, restarts)]
    results = parallel_map(
        lambda s: local_ascent(c, s, tol=tol, max_sweeps=max_sweeps), starts, workers
    )
    best = results[0]
    for r in results[1:]:
        if r.value > best.value:
            best = r
    bound = spectral_norm(c)
    assert best.value <= bound + 1e-9, f'seesaw value {best.value!r} above norm {bound!r}'
    return best


def lowest_samples(
    c: HermitianOperator,
    samples: int,
    keep: int,
    rng: np.random.Generator,
    chunk_size: int = 4096,
) -> list[tuple[float, ProductState]]:
    """The `keep` smallest ⟨φ|c|φ⟩ over Haar-random product states."""
    dims = c.dims
    best_values = np.empty(0)
    best_locals = [np.empty((0, d), dtype=complex) for d in dims]
    for n in chunks(samples, chunk_size):
        local_batches = [haar_vectors(n, d, rng) for d in dims]
        values = batch_expectations(c, product_vectors(local_batches))
        best_values = np.concatenate([best_values, values])
        best_locals = [np.concatenate([b, v]) for b, v in zip(best_locals, local_batches)]
        if best_values.size > keep:
            idx = np.argpartition(best_values, keep - 1)[:keep]
            best_values = best_values[idx]
            best_locals = [b[idx] for b in best_locals]
    order = np.argsort(best_values, kind='stable')
    return [
        (float(best_values[i]), ProductState(dims, tuple(b[i] for b in best_locals)))
        for i in order
    ]


def brute_force_max(
    c: HermitianOperator,
    samples: int = 10**6,
    rng: np.random.Generator | None = None,
    refine: int = 10,
) -> float:
    """Dense product-state sampling plus seesaw refinement of the best draws.

    An independent lower bound on the true optimum, limited to small spaces.
    """
    if c.total > BRUTE_FORCE_MAX_DIM:
        raise CapacityError(
            f'brute force oracle is limited to total dimension {BRUTE_FORCE_MAX_DIM}, got {c.total}'
        )
    if rng is None:
        rng = np.random.default_rng(0)
    negated = -c
    best = lowest_samples(negated, samples, max(1, refine), rng)
    value = -best[0][0]
    for _v, state in best[:refine]:
        value = max(value, local_ascent(c, state).value)
    return value
