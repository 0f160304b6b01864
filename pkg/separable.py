"""Separable operators, POVM checks, PPT screening and witness evidence.

Membership in the separable cone is not decided exactly here. The PPT test
can only certify that an operator lies outside it, and a witness W gets
product-state sampling evidence for min ⟨φ|W|φ⟩ ≥ 0, never a proof.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from linalg import (
    HermitianOperator,
    MultipartiteShape,
    PureState,
    as_shape,
    check_capacity,
    partial_transpose,
    tensor_all,
)
from seesaw import ProductState, expectation, local_ascent, lowest_samples
from util import parallel_map, spawn_generators, split_count

FACTOR_PSD_TOL = 1e-10
POVM_TOL = 1e-9
PPT_TOL = 1e-9
VIOLATION_TOL = 1e-6
DEFAULT_WITNESS_SAMPLES = 20000
DEFAULT_REFINE = 10


@dataclass(frozen=True, eq=False)
class SeparableOperator:
    """Σ_i C_{i,1} ⊗ … ⊗ C_{i,m} with every factor PSD."""

    shape: MultipartiteShape
    terms: tuple[tuple[HermitianOperator, ...], ...]

    def __post_init__(self):
        shape = as_shape(self.shape)
        terms = tuple(tuple(t) for t in self.terms)
        for i, term in enumerate(terms):
            if len(term) != shape.num_parties:
                raise ValueError(
                    f'term {i} has {len(term)} factors for {shape.num_parties} parties'
                )
            for j, (factor, d) in enumerate(zip(term, shape.dims)):
                if factor.total != d:
                    raise ValueError(
                        f'term {i} factor {j} has dimension {factor.total}, expected {d}'
                    )
                min_eig = factor.min_eigenvalue()
                if min_eig < -FACTOR_PSD_TOL:
                    raise ValueError(
                        f'term {i} factor {j} is not PSD (min eigenvalue {min_eig:.3g})'
                    )
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'terms', terms)

    @property
    def num_parties(self) -> int:
        return self.shape.num_parties

    @classmethod
    def identity(cls, dims) -> 'SeparableOperator':
        shape = as_shape(dims)
        return cls(shape, ((tuple(HermitianOperator.identity(d) for d in shape.dims)),))

    @classmethod
    def product(cls, *factors: HermitianOperator) -> 'SeparableOperator':
        return cls(tuple(f.total for f in factors), (tuple(factors),))

    def scaled(self, c: float) -> 'SeparableOperator':
        if c < 0:
            raise ValueError(f'scaling by {c} leaves the separable cone')
        return SeparableOperator(
            self.shape, tuple((term[0] * c,) + term[1:] for term in self.terms)
        )

    def tensor(self, other: 'SeparableOperator') -> 'SeparableOperator':
        """Parties of self followed by parties of other."""
        return SeparableOperator(
            self.shape + other.shape,
            tuple(a + b for a in self.terms for b in other.terms),
        )

    def to_json(self) -> dict:
        return {
            'dims': list(self.shape.dims),
            'terms': [[f.to_json() for f in term] for term in self.terms],
        }

    @classmethod
    def from_json(cls, data: dict) -> 'SeparableOperator':
        return cls(
            data['dims'],
            tuple(
                tuple(HermitianOperator.from_json(f) for f in term)
                for term in data['terms']
            ),
        )


def densify(s: SeparableOperator) -> HermitianOperator:
    check_capacity(s.shape.total)
    out = HermitianOperator.zeros(s.shape)
    for term in s.terms:
        out = out + tensor_all(*term)
    return out


def is_povm(ops: list[HermitianOperator], tol: float = POVM_TOL) -> bool:
    """Every element PSD within tol and the elements sum to 1 within tol."""
    if not ops:
        return False
    total = ops[0].total
    for op in ops:
        if op.total != total:
            raise ValueError(f'POVM elements of dimension {op.total} and {total}')
    if not all(op.is_psd(tol) for op in ops):
        return False
    s = sum((op.matrix for op in ops), np.zeros((total, total), dtype=complex))
    return float(np.max(np.abs(s - np.eye(total)))) <= tol


@dataclass(frozen=True)
class PptReport:
    min_eigenvalue_per_cut: tuple[float, ...]
    is_ppt: bool

    def to_json(self) -> dict:
        return {
            'min_eigenvalue_per_cut': list(self.min_eigenvalue_per_cut),
            'is_ppt': self.is_ppt,
        }


def ppt_check(a: HermitianOperator, tol: float = PPT_TOL) -> PptReport:
    """Minimum eigenvalue of the partial transpose on each single subsystem.

    A negative value certifies that a is not separable. is_ppt says nothing
    about separability beyond 2x2 and 2x3.
    """
    mins = tuple(
        partial_transpose(a, i).min_eigenvalue() for i in range(a.shape.num_parties)
    )
    return PptReport(min_eigenvalue_per_cut=mins, is_ppt=all(v >= -tol for v in mins))


@dataclass(frozen=True, eq=False)
class DualWitnessCandidate:
    operator: HermitianOperator
    provenance: str = ''

    @property
    def shape(self) -> MultipartiteShape:
        return self.operator.shape


@dataclass(frozen=True, eq=False)
class WitnessEvidence:
    minimum: float
    state: ProductState
    samples: int
    refined: int = 0
    tol: float = field(default=VIOLATION_TOL)

    @property
    def violated(self) -> bool:
        return self.minimum < -self.tol

    def to_json(self) -> dict:
        return {
            'minimum': self.minimum,
            'samples': self.samples,
            'refined': self.refined,
            'violated': self.violated,
            'state': self.state.to_json(),
        }


def witness_evidence(
    w: 'HermitianOperator | DualWitnessCandidate',
    samples: int = DEFAULT_WITNESS_SAMPLES,
    rng: np.random.Generator | None = None,
    refine: int = DEFAULT_REFINE,
    streams: int = 4,
    workers: int = 1,
    initial_states: tuple[ProductState, ...] = (),
) -> WitnessEvidence:
    """Estimate min ⟨φ|W|φ⟩ over product φ.

    Haar-random product samples are split over `streams` spawned generators
    and pooled with any `initial_states`, then the lowest few are polished by
    seesaw descent on -W. The result is an upper bound on the true minimum.
    """
    operator = w.operator if isinstance(w, DualWitnessCandidate) else w
    if samples < 1:
        raise ValueError(f'need at least one sample, got {samples}')
    if rng is None:
        rng = np.random.default_rng(0)
    streams = max(1, min(streams, samples))
    keep = max(1, refine)
    jobs = list(zip(spawn_generators(rng, streams), split_count(samples, streams)))
    per_stream = parallel_map(
        lambda job: lowest_samples(operator, job[1], keep, job[0]), jobs, workers
    )
    seeded = [(expectation(operator, s), s) for s in initial_states]
    candidates = sorted(
        seeded + [c for stream in per_stream for c in stream], key=lambda c: c[0]
    )[:keep]
    minimum, state = candidates[0]

    negated = -operator
    refined = candidates[:refine]
    for _v, start in refined:
        result = local_ascent(negated, start)
        if -result.value < minimum:
            minimum, state = -result.value, result.state
    return WitnessEvidence(minimum=minimum, state=state, samples=samples, refined=len(refined))


def witness_min_product(
    w: 'HermitianOperator | DualWitnessCandidate',
    samples: int = DEFAULT_WITNESS_SAMPLES,
    rng: np.random.Generator | None = None,
    **kwargs,
) -> float:
    return witness_evidence(w, samples, rng, **kwargs).minimum


def example_accept_operator() -> HermitianOperator:
    """C = ½|00⟩⟨00| + ½|Ψ+⟩⟨Ψ+| on two qubits.

    Its partial transpose is not PSD, so C is not separable, yet its best
    product state |00⟩ reaches the full norm ½.
    """
    psi_plus = bell_state()
    zero_zero = PureState.basis((2, 2), 0)
    return HermitianOperator(
        0.5 * zero_zero.projector().matrix + 0.5 * psi_plus.projector().matrix, (2, 2)
    )


def bell_state() -> PureState:
    """|Ψ+⟩ = (|01⟩ + |10⟩)/√2."""
    s = 1 / math.sqrt(2)
    return PureState((2, 2), np.array([0, s, s, 0], dtype=complex))
