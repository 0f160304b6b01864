"""Two-fold parallel repetition of separable accept operators.

The repeated instance acts on (X_1 ⊗ Y_1), …, (X_m ⊗ Y_m): prover j of the
repeated protocol holds both of its proofs. C1 ⊗ C2 is naturally laid out
as X_1…X_m Y_1…Y_m, so pairing is a fixed permutation of tensor axes.
"""

from dataclasses import dataclass, field

import numpy as np

from linalg import (
    HermitianOperator,
    MultipartiteShape,
    check_capacity,
    spectral_norm,
    tensor,
)
from seesaw import OptimizationResult, ProductState, seesaw_max
from separable import (
    DualWitnessCandidate,
    SeparableOperator,
    WitnessEvidence,
    densify,
    witness_evidence,
)
from util import parallel_map, spawn_generators

VERDICT_TOL = 1e-3
WITNESS_TOL = 1e-9
VIOLATION_TOL = 1e-6
# Tight enough that t1 * t2 is within float noise of the true product.
OPT_TOL = 1e-14
OPT_MAX_SWEEPS = 5000


class PartyCountError(ValueError):
    pass


def pairing_permutation(m: int) -> tuple[int, ...]:
    """Axis order taking (x_1…x_m, y_1…y_m) to (x_1 y_1)…(x_m y_m)."""
    return tuple(a for j in range(m) for a in (j, m + j))


def _check_parties(a: MultipartiteShape, b: MultipartiteShape) -> int:
    if a.num_parties != b.num_parties:
        raise PartyCountError(
            f'cannot pair {a.num_parties}-party and {b.num_parties}-party instances'
        )
    return a.num_parties


def pair_operators(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """a ⊗ b regrouped so that party j of the result is (a_j, b_j)."""
    m = _check_parties(a.shape, b.shape)
    check_capacity(a.total * b.total)
    dims_x, dims_y = a.dims, b.dims
    paired = tuple(x * y for x, y in zip(dims_x, dims_y))
    perm = list(pairing_permutation(m))
    t = np.kron(a.matrix, b.matrix).reshape(dims_x + dims_y + dims_x + dims_y)
    t = t.transpose(perm + [2 * m + p for p in perm])
    total = a.total * b.total
    return HermitianOperator(t.reshape(total, total), paired)


def unpair_operator(
    paired: HermitianOperator, dims_x: tuple[int, ...], dims_y: tuple[int, ...]
) -> HermitianOperator:
    """Inverse of pair_operators: back to the X_1…X_m Y_1…Y_m layout."""
    m = len(dims_x)
    assert len(dims_y) == m, f'{dims_x} and {dims_y} have different party counts'
    interleaved = tuple(d for x, y in zip(dims_x, dims_y) for d in (x, y))
    perm = list(pairing_permutation(m))
    inverse = [perm.index(i) for i in range(2 * m)]
    t = paired.matrix.reshape(interleaved + interleaved)
    t = t.transpose(inverse + [2 * m + p for p in inverse])
    return HermitianOperator(t.reshape(paired.total, paired.total), tuple(dims_x) + tuple(dims_y))


def pair_separable(c1: SeparableOperator, c2: SeparableOperator) -> SeparableOperator:
    """The paired operator as a separable decomposition: local factors C1_j ⊗ C2_j."""
    _check_parties(c1.shape, c2.shape)
    dims = tuple(x * y for x, y in zip(c1.shape.dims, c2.shape.dims))
    check_capacity(c1.shape.total * c2.shape.total)
    terms = tuple(
        tuple(tensor(f1, f2) for f1, f2 in zip(t1, t2))
        for t1 in c1.terms
        for t2 in c2.terms
    )
    return SeparableOperator(dims, terms)


def repeat_operator(c: HermitianOperator, k: int) -> HermitianOperator:
    """k-fold repetition by iterated pairing."""
    if k < 1:
        raise ValueError(f'repetition count must be >= 1, got {k}')
    out = c
    for _ in range(k - 1):
        out = pair_operators(out, c)
    return out


def repeat_separable(c: SeparableOperator, k: int) -> SeparableOperator:
    if k < 1:
        raise ValueError(f'repetition count must be >= 1, got {k}')
    out = c
    for _ in range(k - 1):
        out = pair_separable(out, c)
    return out


@dataclass(frozen=True, eq=False)
class RepetitionInstance:
    c1: SeparableOperator
    c2: SeparableOperator
    paired_operator: HermitianOperator
    permutation: tuple[int, ...]


def pair_instance(c1: SeparableOperator, c2: SeparableOperator) -> RepetitionInstance:
    m = _check_parties(c1.shape, c2.shape)
    return RepetitionInstance(
        c1=c1,
        c2=c2,
        paired_operator=pair_operators(densify(c1), densify(c2)),
        permutation=pairing_permutation(m),
    )


@dataclass(frozen=True, eq=False)
class DualSolution:
    """A dual point (t, W) with t·1 = C + W."""

    t: float
    witness: DualWitnessCandidate
    summands: tuple[DualWitnessCandidate, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            't': self.t,
            'provenance': self.witness.provenance,
            'witness': self.witness.operator.to_json(),
        }


def _accept_operator(c: 'SeparableOperator | HermitianOperator') -> HermitianOperator:
    return densify(c) if isinstance(c, SeparableOperator) else c


def dual_from_primal(c: 'SeparableOperator | HermitianOperator', t: float) -> DualSolution:
    accept = _accept_operator(c)
    w = t * HermitianOperator.identity(accept.shape) - accept
    return DualSolution(t=t, witness=DualWitnessCandidate(w, f't*1 - C at t={t!r}'))


def strict_feasible_pair(
    c: 'SeparableOperator | HermitianOperator',
) -> tuple[HermitianOperator, DualSolution]:
    """ρ = 1/dim for the primal and (2, 2·1 − C) for the dual.

    Both are strictly feasible whenever ‖C‖ ≤ 1, which gives strong duality.
    """
    accept = _accept_operator(c)
    norm = spectral_norm(accept)
    if norm > 1 + 1e-9:
        raise ValueError(f'accept operator has spectral norm {norm:.6g} > 1')
    rho = HermitianOperator(np.eye(accept.total) / accept.total, accept.shape)
    return rho, dual_from_primal(accept, 2.0)


def repetition_witness(
    c1: 'SeparableOperator | HermitianOperator',
    t1: float,
    c2: 'SeparableOperator | HermitianOperator',
    t2: float,
) -> DualSolution:
    """W = t1 t2·1 − C1 ⊗ C2 on the paired layout.

    W is the average of (t1·1 − C1) ⊗ (t2·1 + C2) and (t1·1 + C1) ⊗ (t2·1 − C2),
    and each of those lies in the dual cone whenever W1 and W2 do.
    """
    a, b = _accept_operator(c1), _accept_operator(c2)
    ia = HermitianOperator.identity(a.shape)
    ib = HermitianOperator.identity(b.shape)
    s1 = pair_operators(t1 * ia - a, t2 * ib + b)
    s2 = pair_operators(t1 * ia + a, t2 * ib - b)
    paired = pair_operators(a, b)
    w = t1 * t2 * HermitianOperator.identity(paired.shape) - paired
    gap = float(np.max(np.abs((s1.matrix + s2.matrix) / 2 - w.matrix)))
    assert gap <= 1e-9 * max(1.0, abs(t1 * t2)), f'witness summands off by {gap:.3g}'
    return DualSolution(
        t=t1 * t2,
        witness=DualWitnessCandidate(w, f't1*t2*1 - C1(x)C2 at t1={t1!r}, t2={t2!r}'),
        summands=(
            DualWitnessCandidate(s1, '(t1*1 - C1)(x)(t2*1 + C2)'),
            DualWitnessCandidate(s2, '(t1*1 + C1)(x)(t2*1 - C2)'),
        ),
    )


@dataclass(frozen=True, eq=False)
class RepetitionReport:
    v1: float
    v2: float
    v: float
    t1t2: float
    witness: WitnessEvidence
    verdict: str
    tol: float
    optimal: OptimizationResult | None = None

    @property
    def witness_min(self) -> float:
        return self.witness.minimum

    @property
    def product_gap(self) -> float:
        return self.v - self.v1 * self.v2

    @property
    def duality_gap(self) -> float:
        return self.t1t2 - self.v

    @property
    def weak_duality(self) -> bool:
        return self.v <= self.t1t2 + WITNESS_TOL

    def to_json(self) -> dict:
        out = {
            'v1': self.v1,
            'v2': self.v2,
            'v': self.v,
            't1t2': self.t1t2,
            'witness_min': self.witness_min,
            'duality_gap': self.duality_gap,
            'weak_duality': self.weak_duality,
            'tol': self.tol,
            'verdict': self.verdict,
        }
        if self.witness.violated:
            out['violator'] = self.witness.state.to_json()
        return out


def repetition_verdict(
    v: float,
    v1: float,
    v2: float,
    witness_min: float,
    tol: float,
    t1t2: float | None = None,
) -> str:
    """'violated' when the product witness fails or v exceeds its dual value t1t2."""
    if t1t2 is None:
        t1t2 = v1 * v2
    if witness_min < -VIOLATION_TOL or v > t1t2 + WITNESS_TOL:
        return 'violated'
    if abs(v - v1 * v2) <= tol and witness_min >= -WITNESS_TOL:
        return 'perfect'
    return 'inconclusive'


def verify_perfect_repetition(
    c1: 'SeparableOperator | HermitianOperator',
    c2: 'SeparableOperator | HermitianOperator',
    tol: float = VERDICT_TOL,
    rng: np.random.Generator | None = None,
    restarts: int = 32,
    samples: int = 20000,
    refine: int = 10,
    streams: int = 4,
    workers: int = 1,
) -> RepetitionReport:
    """Compare opt(paired) with opt(c1)·opt(c2) and check the product witness.

    The paired optimization also starts from the tensor of the two optimal
    product states, so v ≥ v1·v2 up to float noise. That start needs r1 and
    r2, so v runs after the two factor optimizations rather than alongside
    them. The paired optimum is also fed to the witness search: if it beats
    t1·t2 it is a product state on which the witness goes negative.
    """
    a, b = _accept_operator(c1), _accept_operator(c2)
    _check_parties(a.shape, b.shape)
    paired = pair_operators(a, b)
    if rng is None:
        rng = np.random.default_rng(0)
    g1, g2, g_paired, g_witness = spawn_generators(rng, 4)

    r1, r2 = parallel_map(
        lambda job: seesaw_max(
            job[0], restarts, job[1], tol=OPT_TOL, max_sweeps=OPT_MAX_SWEEPS
        ),
        [(a, g1), (b, g2)],
        workers,
    )
    start: ProductState = r1.state.pair(r2.state)
    r = seesaw_max(
        paired,
        restarts,
        g_paired,
        initial_states=(start,),
        tol=OPT_TOL,
        max_sweeps=OPT_MAX_SWEEPS,
    )

    dual = repetition_witness(a, r1.value, b, r2.value)
    evidence = witness_evidence(
        dual.witness,
        samples,
        g_witness,
        refine=refine,
        streams=streams,
        workers=workers,
        initial_states=(r.state,),
    )
    return RepetitionReport(
        v1=r1.value,
        v2=r2.value,
        v=r.value,
        t1t2=dual.t,
        witness=evidence,
        verdict=repetition_verdict(
            r.value, r1.value, r2.value, evidence.minimum, tol, t1t2=dual.t
        ),
        tol=tol,
        optimal=r,
    )
