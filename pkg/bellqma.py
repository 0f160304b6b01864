"""Multi-prover QMA protocol that simulates a BellQMA[r, m] verifier.

Merlin sends a classical register X claiming each prover's Stage-1 outcome
distribution, plus a quantum register Y holding k copies of each proof.
Arthur checks that X is a distribution (Step 3), spot-checks one claimed
probability against k measured copies (Step 4), then runs Stage 2 q times
on outcomes drawn from X and takes the majority (Step 5).
"""

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
import itertools
import math
from typing import Callable

import numpy as np
from scipy import stats
from tqdm import tqdm

from linalg import CapacityError, HermitianOperator, hs_inner
from separable import is_povm
from util import parallel_map, spawn_generators

TABLE_CAP = 10**6
MAX_COPIES = 2**63 - 1
DENSITY_TOL = 1e-10


class TableCapacityError(CapacityError):
    pass


class ParamOverflowError(OverflowError):
    pass


@dataclass(frozen=True, eq=False)
class Stage2Acceptor:
    """Acceptance probability for each outcome tuple (y_1, …, y_m) ∈ [r]^m."""

    m: int
    r: int
    table: np.ndarray

    def __post_init__(self):
        check_table_size(self.m, self.r)
        table = np.array(self.table, dtype=float)
        if table.shape != (self.r,) * self.m:
            raise ValueError(f'table of shape {table.shape} for m={self.m}, r={self.r}')
        if np.any(table < 0) or np.any(table > 1):
            raise ValueError('acceptance probabilities must lie in [0, 1]')
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @classmethod
    def constant(cls, m: int, r: int, p: float) -> 'Stage2Acceptor':
        check_table_size(m, r)
        return cls(m, r, np.full((r,) * m, p))

    @classmethod
    def from_function(cls, m: int, r: int, fn: Callable[[tuple[int, ...]], float]):
        check_table_size(m, r)
        table = np.empty((r,) * m)
        for y in itertools.product(range(r), repeat=m):
            table[y] = fn(y)
        return cls(m, r, table)

    def probability(self, outcomes: tuple[int, ...]) -> float:
        return float(self.table[tuple(outcomes)])

    def to_json(self) -> dict:
        return {'m': self.m, 'r': self.r, 'table': self.table.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> 'Stage2Acceptor':
        m, r = int(data['m']), int(data['r'])
        check_table_size(m, r)
        if 'table' in data:
            return cls(m, r, np.asarray(data['table'], dtype=float))
        return cls.constant(m, r, float(data['constant']))


def check_table_size(m: int, r: int):
    if m < 1 or r < 1:
        raise ValueError(f'need m, r >= 1, got m={m}, r={r}')
    if r**m > TABLE_CAP:
        raise TableCapacityError(f'Stage-2 table r^m = {r}^{m} exceeds cap {TABLE_CAP}')


@dataclass(frozen=True, eq=False)
class BellProtocol:
    n: int
    m: int
    r: int
    povms: tuple[tuple[HermitianOperator, ...], ...]
    stage2: Stage2Acceptor

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.r < 1:
            raise ValueError(f'need n, m, r >= 1, got {self.n}, {self.m}, {self.r}')
        povms = tuple(tuple(p) for p in self.povms)
        if len(povms) != self.m:
            raise ValueError(f'{len(povms)} POVMs for {self.m} provers')
        for j, povm in enumerate(povms):
            if len(povm) != self.r:
                raise ValueError(f'prover {j} POVM has {len(povm)} outcomes, expected {self.r}')
            if not is_povm(list(povm)):
                raise ValueError(f'prover {j} measurement is not a POVM')
        if (self.stage2.m, self.stage2.r) != (self.m, self.r):
            raise ValueError(
                f'Stage-2 table is for m={self.stage2.m}, r={self.stage2.r}; '
                f'protocol has m={self.m}, r={self.r}'
            )
        object.__setattr__(self, 'povms', povms)

    @property
    def local_dims(self) -> tuple[int, ...]:
        return tuple(povm[0].total for povm in self.povms)

    def to_json(self) -> dict:
        return {
            'n': self.n,
            'm': self.m,
            'r': self.r,
            'povms': [[op.to_json() for op in povm] for povm in self.povms],
            'stage2': self.stage2.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> 'BellProtocol':
        return cls(
            n=int(data['n']),
            m=int(data['m']),
            r=int(data['r']),
            povms=tuple(
                tuple(HermitianOperator.from_json(op) for op in povm)
                for povm in data['povms']
            ),
            stage2=Stage2Acceptor.from_json(data['stage2']),
        )


@dataclass(frozen=True)
class ProtocolParams:
    """p: Step-4 precision, k: copies per proof, q: Stage-2 runs, alpha: X-register bits."""

    p: int
    k: int
    q: int
    alpha: int

    def __post_init__(self):
        for name in ('p', 'k', 'q', 'alpha'):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f'{name} must be a positive integer, got {v!r}')
        if self.k > MAX_COPIES:
            raise ParamOverflowError(f'k = {self.k} does not fit in 63 bits')

    def to_json(self) -> dict:
        return {'p': self.p, 'k': self.k, 'q': self.q, 'alpha': self.alpha}


def derive_params(n: int, m: int, r: int) -> ProtocolParams:
    if n < 1 or m < 1 or r < 1:
        raise ValueError(f'need n, m, r >= 1, got {n}, {m}, {r}')
    p = 20 * m * r
    k = 5 * p**3
    if k > MAX_COPIES:
        raise ParamOverflowError(f'k = 5 * {p}^3 does not fit in 63 bits')
    return ProtocolParams(p=p, k=k, q=50 * n, alpha=20 * n * m * r)


def completeness_lower_bound(params: ProtocolParams) -> float:
    return 1 - 2 * math.exp(-5 * params.p / 4) - 2 * math.exp(-0.02 * params.q)


def soundness_upper_bound(m: int, r: int) -> float:
    return 1 - 1 / (40 * m**2 * r**2)


def precision_slack(m: int, r: int, alpha: int) -> float:
    """Bound on the Stage-2 acceptance change from alpha-bit truncation of X."""
    return math.ldexp(m * r, -alpha)


def _check_density(rho: HermitianOperator, what: str):
    if not rho.is_density(DENSITY_TOL):
        raise ValueError(f'{what} is not a density operator')


def born_probabilities(povm: tuple[HermitianOperator, ...], rho: HermitianOperator) -> np.ndarray:
    return np.array([hs_inner(op, rho) for op in povm])


def _sampling_probabilities(probs: np.ndarray) -> np.ndarray:
    probs = np.clip(probs, 0, None)
    return probs / probs.sum()


def stage1_distribution(protocol: BellProtocol, j: int, rho: HermitianOperator) -> np.ndarray:
    """p_j(i) = ⟨Π_j(i), ρ⟩."""
    if not 0 <= j < protocol.m:
        raise IndexError(f'prover {j} out of range for m={protocol.m}')
    d = protocol.local_dims[j]
    if rho.total != d:
        raise ValueError(f'proof of dimension {rho.total} for prover {j} of dimension {d}')
    probs = born_probabilities(protocol.povms[j], rho)
    assert abs(probs.sum() - 1) <= 1e-9, f'outcome probabilities sum to {probs.sum()!r}'
    return probs


def to_fixed_point(dist, alpha: int) -> tuple[int, ...]:
    """Numerators over 2^alpha, truncated then topped up by largest remainder.

    The result sums to exactly 2^alpha and each entry is within 2^-alpha of
    the (renormalized) input.
    """
    values = [Fraction(max(0.0, float(v))) for v in dist]
    total = sum(values)
    if total == 0:
        raise ValueError('cannot encode an all-zero distribution')
    scale = 1 << alpha
    scaled = [v * scale / total for v in values]
    floors = [math.floor(s) for s in scaled]
    missing = scale - sum(floors)
    order = sorted(range(len(scaled)), key=lambda i: (-(scaled[i] - floors[i]), i))
    for i in order[:missing]:
        floors[i] += 1
    return tuple(floors)


def fixed_point_values(numerators: tuple[int, ...], alpha: int) -> np.ndarray:
    return np.array([float(Fraction(x, 1 << alpha)) for x in numerators])


@dataclass(frozen=True, eq=False)
class IidCopies:
    """Every one of the k copies is the same state ρ."""

    rho: HermitianOperator

    def __post_init__(self):
        _check_density(self.rho, 'IID proof')

    @property
    def dimension(self) -> int:
        return self.rho.total

    def effective_state(self) -> HermitianOperator:
        return self.rho

    def sample_counts(
        self, povm: tuple[HermitianOperator, ...], k: int, rng: np.random.Generator
    ) -> np.ndarray:
        return rng.multinomial(k, _sampling_probabilities(born_probabilities(povm, self.rho)))

    def to_json(self) -> dict:
        return {'model': 'iid', 'rho': self.rho.to_json()}


@dataclass(frozen=True, eq=False)
class ExplicitCopies:
    """Copy l is in state σ(l); copies are unentangled with each other."""

    sigmas: tuple[HermitianOperator, ...]

    def __post_init__(self):
        sigmas = tuple(self.sigmas)
        if not sigmas:
            raise ValueError('need at least one copy')
        for n, s in enumerate(sigmas):
            _check_density(s, f'copy {n}')
            if s.total != sigmas[0].total:
                raise ValueError('copies have different dimensions')
        object.__setattr__(self, 'sigmas', sigmas)

    @property
    def dimension(self) -> int:
        return self.sigmas[0].total

    def effective_state(self) -> HermitianOperator:
        """ξ = (1/k) Σ_l σ(l)."""
        avg = sum(s.matrix for s in self.sigmas) / len(self.sigmas)
        return HermitianOperator(avg, self.sigmas[0].shape)

    def sample_counts(
        self, povm: tuple[HermitianOperator, ...], k: int, rng: np.random.Generator
    ) -> np.ndarray:
        if k != len(self.sigmas):
            raise ValueError(f'message holds {len(self.sigmas)} copies, protocol needs {k}')
        probs = np.array(
            [_sampling_probabilities(born_probabilities(povm, s)) for s in self.sigmas]
        )
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(k)
        outcomes = np.minimum((u[:, None] >= cdf).sum(axis=1), len(povm) - 1)
        return np.bincount(outcomes, minlength=len(povm))

    def to_json(self) -> dict:
        return {'model': 'explicit', 'sigmas': [s.to_json() for s in self.sigmas]}


CopyModel = IidCopies | ExplicitCopies


@dataclass(frozen=True, eq=False)
class MerlinMessage:
    x_register: tuple[tuple[int, ...], ...]
    alpha: int
    y_register: tuple[CopyModel, ...]

    def __post_init__(self):
        x_register = tuple(tuple(int(v) for v in x) for x in self.x_register)
        object.__setattr__(self, 'x_register', x_register)
        object.__setattr__(self, 'y_register', tuple(self.y_register))
        if len(self.x_register) != len(self.y_register):
            raise ValueError(
                f'{len(self.x_register)} X entries but {len(self.y_register)} Y entries'
            )

    def claimed_distribution(self, j: int) -> np.ndarray:
        return fixed_point_values(self.x_register[j], self.alpha)

    def to_json(self) -> dict:
        return {
            'alpha': self.alpha,
            'x': [list(x) for x in self.x_register],
            'y': [y.to_json() for y in self.y_register],
        }


def effective_single_copy_state(message: MerlinMessage, j: int) -> HermitianOperator:
    if not 0 <= j < len(message.y_register):
        raise IndexError(f'prover {j} out of range')
    return message.y_register[j].effective_state()


def _check_proofs(protocol: BellProtocol, proofs: list[HermitianOperator]):
    if len(proofs) != protocol.m:
        raise ValueError(f'{len(proofs)} proofs for {protocol.m} provers')
    for j, (rho, d) in enumerate(zip(proofs, protocol.local_dims)):
        if rho.total != d:
            raise ValueError(f'proof {j} has dimension {rho.total}, expected {d}')


def honest_message(
    protocol: BellProtocol, proofs: list[HermitianOperator], params: ProtocolParams
) -> MerlinMessage:
    _check_proofs(protocol, proofs)
    return MerlinMessage(
        x_register=tuple(
            to_fixed_point(stage1_distribution(protocol, j, rho), params.alpha)
            for j, rho in enumerate(proofs)
        ),
        alpha=params.alpha,
        y_register=tuple(IidCopies(rho) for rho in proofs),
    )


def lying_x_message(
    protocol: BellProtocol, proofs: list[HermitianOperator], params: ProtocolParams
) -> MerlinMessage:
    """X claims point masses on the outcome tuple Stage 2 likes best; Y is honest."""
    _check_proofs(protocol, proofs)
    favourite = np.unravel_index(int(np.argmax(protocol.stage2.table)), protocol.stage2.table.shape)
    scale = 1 << params.alpha
    return MerlinMessage(
        x_register=tuple(
            tuple(scale if i == y else 0 for i in range(protocol.r)) for y in favourite
        ),
        alpha=params.alpha,
        y_register=tuple(IidCopies(rho) for rho in proofs),
    )


def mixed_y_message(
    protocol: BellProtocol, proofs: list[HermitianOperator], params: ProtocolParams
) -> MerlinMessage:
    """Honest X, maximally mixed copies in Y."""
    honest = honest_message(protocol, proofs, params)
    return MerlinMessage(
        x_register=honest.x_register,
        alpha=params.alpha,
        y_register=tuple(
            IidCopies(HermitianOperator(np.eye(d) / d)) for d in protocol.local_dims
        ),
    )


MERLIN_PRESETS: dict[str, Callable[..., MerlinMessage]] = {
    'honest': honest_message,
    'lying-x': lying_x_message,
    'mixed-y': mixed_y_message,
}


@dataclass(frozen=True)
class DeviatingPair:
    j: int
    i: int
    deviation: float
    total_variation: float


def deviating_pair(message: MerlinMessage, protocol: BellProtocol) -> DeviatingPair:
    """The (j, i) maximizing |x_j(i) − q_j(i)|, with q_j from the effective state."""
    best = None
    for j in range(protocol.m):
        x = message.claimed_distribution(j)
        q = born_probabilities(protocol.povms[j], effective_single_copy_state(message, j))
        diff = np.abs(x - q)
        tv = float(diff.sum() / 2)
        i = int(np.argmax(diff))
        candidate = DeviatingPair(j=j, i=i, deviation=float(diff[i]), total_variation=tv)
        if best is None or candidate.deviation > best.deviation:
            best = candidate
    return best


def stage2_acceptance(stage2: Stage2Acceptor, distributions: list[np.ndarray]) -> float:
    """Σ_y table[y] Π_j p_j(y_j)."""
    if len(distributions) != stage2.m:
        raise ValueError(f'{len(distributions)} distributions for m={stage2.m}')
    value = stage2.table
    for d in distributions:
        value = np.tensordot(np.asarray(d, dtype=float), value, axes=([0], [0]))
    return float(value)


@dataclass(frozen=True)
class VerificationOutcome:
    accepted: bool
    rejection_stage: str | None = None
    step4_pick: tuple[int, int] | None = None
    step4_count: int | None = None
    stage2_accepts: int | None = None

    def __post_init__(self):
        assert (self.rejection_stage is None) == self.accepted, (
            f'accepted={self.accepted} with rejection stage {self.rejection_stage!r}'
        )

    def csv_row(self, trial: int) -> dict:
        j, i = self.step4_pick if self.step4_pick is not None else ('', '')
        return {
            'trial': trial,
            'accepted': int(self.accepted),
            'rejection_stage': self.rejection_stage or 'none',
            'j': j,
            'i': i,
            'n_ji': '' if self.step4_count is None else self.step4_count,
        }


def step3_check(message: MerlinMessage, r: int, alpha: int) -> bool:
    scale = 1 << alpha
    for x in message.x_register:
        if len(x) != r or any(v < 0 for v in x) or sum(x) != scale:
            return False
    return True


def step4_counts(
    protocol: BellProtocol, message: MerlinMessage, j: int, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Outcome counts from measuring all k copies of proof j."""
    return message.y_register[j].sample_counts(protocol.povms[j], k, rng)


def step4_check(count: int, k: int, claimed: int, alpha: int, p: int) -> bool:
    """True when |count/k − claimed/2^alpha| < 1/p, computed exactly."""
    deviation = abs(Fraction(int(count), k) - Fraction(int(claimed), 1 << alpha))
    return deviation < Fraction(1, p)


def _uniform_bits(alpha: int, rng: np.random.Generator) -> int:
    nbytes = (alpha + 7) // 8
    return int.from_bytes(rng.bytes(nbytes), 'big') >> (8 * nbytes - alpha)


def stage2_runs(
    stage2: Stage2Acceptor,
    message: MerlinMessage,
    alpha: int,
    q: int,
    rng: np.random.Generator,
) -> int:
    """Number of accepting Stage-2 runs out of q, outcomes drawn from X."""
    cdfs = [list(itertools.accumulate(x)) for x in message.x_register]
    accepted = 0
    for _ in range(q):
        outcomes = tuple(bisect.bisect_right(cdf, _uniform_bits(alpha, rng)) for cdf in cdfs)
        if rng.random() < stage2.probability(outcomes):
            accepted += 1
    return accepted


def arthur_verify(
    protocol: BellProtocol,
    message: MerlinMessage,
    params: ProtocolParams,
    rng: np.random.Generator,
) -> VerificationOutcome:
    if len(message.x_register) != protocol.m:
        raise ValueError(
            f'message for {len(message.x_register)} provers, protocol has {protocol.m}'
        )
    if message.alpha != params.alpha:
        raise ValueError(f'message uses {message.alpha} bits, params say {params.alpha}')
    for j, (y, d) in enumerate(zip(message.y_register, protocol.local_dims)):
        if y.dimension != d:
            raise ValueError(f'prover {j} copies have dimension {y.dimension}, expected {d}')

    if not step3_check(message, protocol.r, params.alpha):
        return VerificationOutcome(accepted=False, rejection_stage='step3')

    j = int(rng.integers(protocol.m))
    i = int(rng.integers(protocol.r))
    count = int(step4_counts(protocol, message, j, params.k, rng)[i])
    if not step4_check(count, params.k, message.x_register[j][i], params.alpha, params.p):
        return VerificationOutcome(
            accepted=False, rejection_stage='step4', step4_pick=(j, i), step4_count=count
        )

    runs = stage2_runs(protocol.stage2, message, params.alpha, params.q, rng)
    accepted = 2 * runs > params.q
    return VerificationOutcome(
        accepted=accepted,
        rejection_stage=None if accepted else 'step5',
        step4_pick=(j, i),
        step4_count=count,
        stage2_accepts=runs,
    )


@dataclass(frozen=True, eq=False)
class AcceptanceEstimate:
    mean: float
    ci95: float
    low: float
    high: float
    trials: int
    outcomes: list[VerificationOutcome] = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return sum(o.accepted for o in self.outcomes)

    def rejections(self, stage: str) -> int:
        return sum(o.rejection_stage == stage for o in self.outcomes)

    def to_json(self) -> dict:
        return {
            'mean': self.mean,
            'ci95': self.ci95,
            'low': self.low,
            'high': self.high,
            'trials': self.trials,
            'rejections': {s: self.rejections(s) for s in ('step3', 'step4', 'step5')},
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Returns (center, half_width) of the Wilson score interval."""
    z = stats.norm.ppf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z**2 / trials
    center = (phat + z**2 / (2 * trials)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2))
    return center, half


def estimate_acceptance(
    protocol: BellProtocol,
    merlin: 'MerlinMessage | Callable[[np.random.Generator], MerlinMessage]',
    params: ProtocolParams,
    trials: int,
    rng: np.random.Generator,
    workers: int = 1,
    progress: bool = False,
) -> AcceptanceEstimate:
    """Monte Carlo acceptance rate with a Wilson 95% interval.

    Trial t uses the t-th spawned stream, so results do not depend on the
    worker count.
    """
    if trials < 1:
        raise ValueError(f'need at least one trial, got {trials}')
    bar = tqdm(total=trials, desc='trials', disable=not progress)

    def trial(g: np.random.Generator) -> VerificationOutcome:
        message = merlin if isinstance(merlin, MerlinMessage) else merlin(g)
        outcome = arthur_verify(protocol, message, params, g)
        bar.update(1)
        return outcome

    outcomes = parallel_map(trial, spawn_generators(rng, trials), workers)
    bar.close()
    accepted = sum(o.accepted for o in outcomes)
    center, half = wilson_interval(accepted, trials)
    return AcceptanceEstimate(
        mean=accepted / trials,
        ci95=half,
        low=max(0.0, center - half),
        high=min(1.0, center + half),
        trials=trials,
        outcomes=outcomes,
    )
