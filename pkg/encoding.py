"""Classical fixed-point descriptions of small pure states and their preparation.

A description stores each real and imaginary part as a signed integer a
meaning a·2^-f. Preparation plans rebuild a state from |0⟩ with N−1 real
2×2 rotations between index 0 and index i followed by a diagonal phase layer.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from linalg import (
    HermitianOperator,
    PureState,
    check_capacity,
    fidelity,
    spectral_norm,
    trace_norm,
)

ACCEPT_NORM_TOL = 1e-9


class ZeroVectorError(ValueError):
    pass


def default_precision(dimension: int) -> int:
    return 20 * dimension


def word_bytes(precision_bits: int) -> int:
    """Bytes per two's-complement word holding a value in [−2^f, 2^f]."""
    return (precision_bits + 2 + 7) // 8


def error_bound(dimension: int, precision_bits: int) -> float:
    """Bound on ‖ψ − ψ'‖ for the raw fixed-point vector ψ'.

    Rounding each of 2N parts by at most 2^-(f+1) gives √(2N)·2^-(f+1), which
    is at most N·2^-(f+1) once N ≥ 2.
    """
    return max(dimension, math.sqrt(2 * dimension)) * math.ldexp(1.0, -(precision_bits + 1))


@dataclass(frozen=True)
class ClassicalStateDescription:
    dimension: int
    precision_bits: int
    components: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.precision_bits < 1:
            raise ValueError(f'precision must be at least 1 bit, got {self.precision_bits}')
        components = tuple((int(re), int(im)) for re, im in self.components)
        if len(components) != self.dimension:
            raise ValueError(f'{len(components)} components for dimension {self.dimension}')
        limit = 1 << self.precision_bits
        for re, im in components:
            if abs(re) > limit or abs(im) > limit:
                raise ValueError(f'component ({re}, {im}) exceeds magnitude 1')
        object.__setattr__(self, 'components', components)

    def exact_values(self) -> list[tuple[Fraction, Fraction]]:
        scale = 1 << self.precision_bits
        return [(Fraction(re, scale), Fraction(im, scale)) for re, im in self.components]

    def raw_vector(self) -> np.ndarray:
        """The fixed-point vector before renormalization."""
        return np.array([complex(float(re), float(im)) for re, im in self.exact_values()])

    def to_hex(self) -> str:
        w = word_bytes(self.precision_bits)
        return b''.join(
            v.to_bytes(w, 'big', signed=True) for pair in self.components for v in pair
        ).hex()

    @classmethod
    def from_hex(
        cls, text: str, dimension: int, precision_bits: int
    ) -> 'ClassicalStateDescription':
        data = bytes.fromhex(text)
        w = word_bytes(precision_bits)
        if len(data) != 2 * dimension * w:
            raise ValueError(
                f'{len(data)} bytes cannot hold {dimension} components of {w}-byte words'
            )
        words = [
            int.from_bytes(data[i : i + w], 'big', signed=True) for i in range(0, len(data), w)
        ]
        return cls(dimension, precision_bits, tuple(zip(words[::2], words[1::2])))

    def to_json(self) -> dict:
        return {
            'dimension': self.dimension,
            'precision_bits': self.precision_bits,
            'hex': self.to_hex(),
        }

    @classmethod
    def from_json(cls, data: dict) -> 'ClassicalStateDescription':
        return cls.from_hex(data['hex'], int(data['dimension']), int(data['precision_bits']))


def encode_state(psi: PureState, precision_bits: int | None = None) -> ClassicalStateDescription:
    """Round each real and imaginary part to the nearest multiple of 2^-f."""
    n = psi.shape.total
    f = default_precision(n) if precision_bits is None else precision_bits
    if f < 1:
        raise ValueError(f'precision must be at least 1 bit, got {f}')
    scale = 1 << f
    components = tuple(
        (round(Fraction(float(a.real)) * scale), round(Fraction(float(a.imag)) * scale))
        for a in psi.amplitudes
    )
    return ClassicalStateDescription(n, f, components)


def decode_state(desc: ClassicalStateDescription) -> PureState:
    if all(re == 0 and im == 0 for re, im in desc.components):
        raise ZeroVectorError('every component of the description is zero')
    return PureState.normalized(desc.raw_vector())


@dataclass(frozen=True)
class EncodingError:
    distance: float
    infidelity: float
    bound: float

    def to_json(self) -> dict:
        return {'distance': self.distance, 'infidelity': self.infidelity, 'bound': self.bound}


def encoding_error(psi: PureState, desc: ClassicalStateDescription) -> EncodingError:
    """Phase-sensitive ‖ψ − ψ'‖ (computed exactly) and 1 − |⟨ψ|decode⟩|²."""
    if desc.dimension != psi.shape.total:
        raise ValueError(
            f'description of dimension {desc.dimension} for a {psi.shape.total}-dim state'
        )
    squared = Fraction(0)
    for a, (re, im) in zip(psi.amplitudes, desc.exact_values()):
        squared += (Fraction(float(a.real)) - re) ** 2 + (Fraction(float(a.imag)) - im) ** 2
    try:
        infidelity = max(0.0, 1 - fidelity(psi, decode_state(desc)))
    except ZeroVectorError:
        infidelity = 1.0
    return EncodingError(
        distance=math.sqrt(squared),
        infidelity=infidelity,
        bound=error_bound(desc.dimension, desc.precision_bits),
    )


@dataclass(frozen=True)
class PreparationPlan:
    """Rotations (0, i, θ) applied in order to |0⟩, then a diagonal phase layer."""

    dimension: int
    phases: tuple[float, ...]
    rotations: tuple[tuple[int, int, float], ...]

    def _rotate(self, v: np.ndarray, adjoint: bool) -> np.ndarray:
        ops = reversed(self.rotations) if adjoint else self.rotations
        for a, b, theta in ops:
            c, s = math.cos(theta), math.sin(theta)
            if adjoint:
                s = -s
            va, vb = v[a].copy(), v[b].copy()
            v[a] = c * va - s * vb
            v[b] = s * va + c * vb
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        """U v. Works on vectors and on matrices column-wise."""
        v = self._rotate(np.array(v, dtype=complex), adjoint=False)
        phases = np.exp(1j * np.asarray(self.phases))
        return (phases * v.T).T

    def apply_adjoint(self, v: np.ndarray) -> np.ndarray:
        phases = np.exp(-1j * np.asarray(self.phases))
        v = (phases * np.array(v, dtype=complex).T).T
        return self._rotate(v, adjoint=True)

    def prepare(self) -> PureState:
        e0 = np.zeros(self.dimension, dtype=complex)
        e0[0] = 1
        return PureState.normalized(self.apply(e0))

    def unprepare(self, psi: PureState) -> np.ndarray:
        return self.apply_adjoint(psi.amplitudes)

    def unitary(self) -> np.ndarray:
        return self.apply(np.eye(self.dimension, dtype=complex))

    def to_json(self) -> dict:
        return {
            'phases': list(self.phases),
            'rotations': [[a, b, theta] for a, b, theta in self.rotations],
        }

    @classmethod
    def from_json(cls, data: dict) -> 'PreparationPlan':
        phases = tuple(float(p) for p in data['phases'])
        return cls(
            len(phases),
            phases,
            tuple((int(a), int(b), float(t)) for a, b, t in data['rotations']),
        )


def preparation_plan(psi: PureState) -> PreparationPlan:
    """Fold amplitudes N−1, …, 1 into index 0, then undo it in reverse."""
    v = psi.amplitudes
    n = v.size
    phases = tuple(float(p) if abs(a) > 0 else 0.0 for a, p in zip(v, np.angle(v)))
    magnitudes = np.abs(v)
    head = magnitudes[0]
    angles = {}
    for i in range(n - 1, 0, -1):
        angles[i] = math.atan2(magnitudes[i], head)
        head = math.hypot(head, magnitudes[i])
    return PreparationPlan(
        dimension=n,
        phases=phases,
        rotations=tuple((0, i, angles[i]) for i in range(1, n)),
    )


def simulate_mqa_protocol(
    descriptions: list[ClassicalStateDescription], verifier_accept: HermitianOperator
) -> float:
    """Arthur prepares each described proof, then measures the accept operator."""
    joint = math.prod(d.dimension for d in descriptions)
    check_capacity(joint, 'joint proof space')
    if verifier_accept.total != joint:
        raise ValueError(
            f'accept operator of dimension {verifier_accept.total} '
            f'for proofs of joint dimension {joint}'
        )
    if not verifier_accept.is_psd(ACCEPT_NORM_TOL):
        raise ValueError('accept operator is not PSD')
    norm = spectral_norm(verifier_accept)
    if norm > 1 + ACCEPT_NORM_TOL:
        raise ValueError(f'accept operator has spectral norm {norm:.6g} > 1')

    state = np.ones(1, dtype=complex)
    for desc in descriptions:
        state = np.kron(state, preparation_plan(decode_state(desc)).prepare().amplitudes)
    return float(np.vdot(state, verifier_accept.matrix @ state).real)


def accept_probability(states: list[PureState], accept: HermitianOperator) -> float:
    """⟨⊗ψ|A|⊗ψ⟩ for exactly known proofs."""
    state = np.ones(1, dtype=complex)
    for psi in states:
        state = np.kron(state, psi.amplitudes)
    if state.size != accept.total:
        raise ValueError(f'proofs of joint dimension {state.size}, operator of {accept.total}')
    return float(np.vdot(state, accept.matrix @ state).real)


def drift_bound(states: list[PureState], descriptions: list[ClassicalStateDescription]) -> float:
    """Σ_i ‖ψ_iψ_i* − ψ'_iψ'_i*‖_tr, taken from the projector difference.

    2√(1 − F) underflows to 0 once 1 − F is below float resolution.
    """
    if len(states) != len(descriptions):
        raise ValueError(f'{len(states)} states for {len(descriptions)} descriptions')
    return sum(
        trace_norm(psi.projector() - decode_state(desc).projector())
        for psi, desc in zip(states, descriptions)
    )
