import itertools
import math

import numpy as np
import pytest
from scipy import stats

from bellqma import (
    BellProtocol,
    ExplicitCopies,
    IidCopies,
    MerlinMessage,
    ParamOverflowError,
    ProtocolParams,
    Stage2Acceptor,
    TableCapacityError,
    VerificationOutcome,
    arthur_verify,
    born_probabilities,
    check_table_size,
    completeness_lower_bound,
    derive_params,
    deviating_pair,
    effective_single_copy_state,
    estimate_acceptance,
    fixed_point_values,
    honest_message,
    lying_x_message,
    mixed_y_message,
    precision_slack,
    soundness_upper_bound,
    stage1_distribution,
    stage2_acceptance,
    step3_check,
    step4_check,
    step4_counts,
    to_fixed_point,
    wilson_interval,
)
from linalg import HermitianOperator, random_density

SMALL = ProtocolParams(p=20, k=40000, q=50, alpha=120)

ZERO = HermitianOperator.diagonal([1, 0])
ONE = HermitianOperator.diagonal([0, 1])
PLUS = HermitianOperator(np.full((2, 2), 0.5))


def half_povm():
    return (
        HermitianOperator.diagonal([0.5, 0]),
        HermitianOperator.diagonal([0, 0.5]),
        HermitianOperator.identity(2) * 0.5,
    )


def make_protocol(stage2: Stage2Acceptor) -> BellProtocol:
    return BellProtocol(n=1, m=2, r=3, povms=(half_povm(), half_povm()), stage2=stage2)


ACCEPT_ALL = make_protocol(Stage2Acceptor.constant(2, 3, 1.0))
MATCHING = make_protocol(Stage2Acceptor.from_function(2, 3, lambda y: 1.0 if y[0] == y[1] else 0.25))
PROOFS = [ZERO, PLUS]


def test_derive_params():
    assert derive_params(4, 2, 3) == ProtocolParams(p=120, k=8_640_000, q=200, alpha=480)
    assert derive_params(1, 1, 1) == ProtocolParams(p=20, k=40000, q=50, alpha=20)
    with pytest.raises(ParamOverflowError):
        derive_params(1, 1, 10**5)
    with pytest.raises(ValueError):
        derive_params(0, 2, 3)
    with pytest.raises(ValueError):
        ProtocolParams(p=0, k=1, q=1, alpha=1)


def test_bounds():
    params = derive_params(4, 2, 3)
    expected = 1 - 2 * math.exp(-150) - 2 * math.exp(-4)
    assert completeness_lower_bound(params) == pytest.approx(expected)
    assert soundness_upper_bound(2, 3) == pytest.approx(1 - 1 / 1440)
    assert precision_slack(2, 3, 10) == 6 / 1024


def test_table_capacity():
    check_table_size(3, 100)
    with pytest.raises(TableCapacityError):
        check_table_size(2, 1001)
    with pytest.raises(TableCapacityError):
        Stage2Acceptor.constant(2, 1001, 1)
    with pytest.raises(ValueError):
        Stage2Acceptor(2, 3, np.full((3, 3), 1.5))
    with pytest.raises(ValueError):
        Stage2Acceptor(2, 3, np.ones((3, 2)))


def test_protocol_validation():
    with pytest.raises(ValueError):
        BellProtocol(
            n=1, m=1, r=2, povms=((ZERO, ZERO),), stage2=Stage2Acceptor.constant(1, 2, 1)
        )
    with pytest.raises(ValueError):
        BellProtocol(n=1, m=2, r=3, povms=(half_povm(),), stage2=Stage2Acceptor.constant(2, 3, 1))
    with pytest.raises(ValueError):
        make_protocol(Stage2Acceptor.constant(2, 2, 1))


def test_protocol_json():
    p = BellProtocol.from_json(MATCHING.to_json())
    assert p.local_dims == (2, 2)
    assert np.array_equal(p.stage2.table, MATCHING.stage2.table)
    s = Stage2Acceptor.from_json({'m': 2, 'r': 3, 'constant': 0.5})
    assert s.probability((2, 1)) == 0.5


def test_stage1_distribution():
    assert np.allclose(stage1_distribution(ACCEPT_ALL, 0, ZERO), [0.5, 0, 0.5])
    assert np.allclose(stage1_distribution(ACCEPT_ALL, 1, PLUS), [0.25, 0.25, 0.5])
    with pytest.raises(IndexError):
        stage1_distribution(ACCEPT_ALL, 2, ZERO)
    with pytest.raises(ValueError):
        stage1_distribution(ACCEPT_ALL, 0, HermitianOperator.identity(3) * (1 / 3))


def test_to_fixed_point():
    assert to_fixed_point([0.5, 0, 0.5], 20) == (2**19, 0, 2**19)
    rng = np.random.default_rng(0)
    for _ in range(100):
        dist = rng.dirichlet(np.ones(5))
        alpha = int(rng.integers(1, 64))
        x = to_fixed_point(dist, alpha)
        assert sum(x) == 2**alpha
        assert all(v >= 0 for v in x)
        assert np.all(np.abs(fixed_point_values(x, alpha) - dist) <= 2.0**-alpha + 1e-15)
    with pytest.raises(ValueError):
        to_fixed_point([0, 0], 4)


def test_honest_message():
    params = ProtocolParams(p=20, k=40000, q=50, alpha=20)
    message = honest_message(ACCEPT_ALL, PROOFS, params)
    assert message.x_register[0] == (2**19, 0, 2**19)
    assert message.x_register[1] == (2**18, 2**18, 2**19)
    assert all(sum(x) == 2**20 for x in message.x_register)
    assert step3_check(message, 3, 20)
    assert np.array_equal(message.claimed_distribution(0), [0.5, 0, 0.5])
    with pytest.raises(ValueError):
        honest_message(ACCEPT_ALL, [ZERO], params)


def test_step3_rejects_bad_sum():
    message = MerlinMessage(
        x_register=((1, 0, 0), (1, 1, 0)), alpha=1, y_register=(IidCopies(ZERO), IidCopies(PLUS))
    )
    assert not step3_check(message, 3, 1)
    params = ProtocolParams(p=20, k=100, q=5, alpha=1)
    outcome = arthur_verify(ACCEPT_ALL, message, params, np.random.default_rng(1))
    assert not outcome.accepted
    assert outcome.rejection_stage == 'step3'
    assert outcome.step4_pick is None


def test_message_validation():
    with pytest.raises(ValueError):
        MerlinMessage(x_register=((2, 0, 0),), alpha=1, y_register=())
    message = honest_message(ACCEPT_ALL, PROOFS, SMALL)
    with pytest.raises(ValueError):
        arthur_verify(ACCEPT_ALL, message, ProtocolParams(p=20, k=40000, q=50, alpha=8), np.random.default_rng(2))


def test_step4_check_is_exact():
    assert step4_check(5, 10, 1, 1, 10)
    # Deviation exactly 1/p rejects.
    assert not step4_check(6, 10, 1, 1, 10)
    assert step4_check(59, 100, 1, 1, 10)
    assert not step4_check(60, 100, 1, 1, 10)


def test_effective_state():
    assert effective_single_copy_state(honest_message(ACCEPT_ALL, PROOFS, SMALL), 1) is PLUS
    mixed = ExplicitCopies((ZERO, ONE))
    assert np.allclose(mixed.effective_state().matrix, np.eye(2) / 2)
    message = MerlinMessage(x_register=((1, 1, 0),), alpha=1, y_register=(mixed,))
    assert np.allclose(effective_single_copy_state(message, 0).matrix, np.eye(2) / 2)
    with pytest.raises(IndexError):
        effective_single_copy_state(message, 1)
    with pytest.raises(ValueError):
        ExplicitCopies((ZERO, HermitianOperator.identity(2)))


def test_explicit_counts_follow_effective_state():
    k = 10**4
    copies = ExplicitCopies(tuple(ZERO if n % 2 == 0 else ONE for n in range(k)))
    rng = np.random.default_rng(3)
    counts = copies.sample_counts(half_povm(), k, rng)
    assert counts.sum() == k
    # ξ = 1/2, so the three outcomes have probabilities 1/4, 1/4, 1/2.
    assert np.all(np.abs(counts / k - [0.25, 0.25, 0.5]) < 0.02)
    with pytest.raises(ValueError):
        copies.sample_counts(half_povm(), k - 1, rng)


def test_iid_counts_chi_square():
    k = 10**4
    counts = IidCopies(PLUS).sample_counts(half_povm(), k, np.random.default_rng(4))
    assert counts.sum() == k
    expected = k * np.array([0.25, 0.25, 0.5])
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_stage2_acceptance_matches_enumeration():
    rng = np.random.default_rng(5)
    table = rng.uniform(size=(3, 4, 2))
    stage2 = Stage2Acceptor.from_function(
        3, 4, lambda y: table[y[0] % 3, y[1], y[2] % 2]
    )
    dists = [rng.dirichlet(np.ones(4)) for _ in range(3)]
    direct = sum(
        stage2.probability(y) * dists[0][y[0]] * dists[1][y[1]] * dists[2][y[2]]
        for y in itertools.product(range(4), repeat=3)
    )
    assert stage2_acceptance(stage2, dists) == pytest.approx(direct, abs=1e-12)
    with pytest.raises(ValueError):
        stage2_acceptance(stage2, dists[:2])


def test_outcome_invariant():
    with pytest.raises(AssertionError):
        VerificationOutcome(accepted=True, rejection_stage='step4')
    row = VerificationOutcome(accepted=False, rejection_stage='step4', step4_pick=(1, 2), step4_count=7).csv_row(3)
    assert row == {'trial': 3, 'accepted': 0, 'rejection_stage': 'step4', 'j': 1, 'i': 2, 'n_ji': 7}
    row = VerificationOutcome(accepted=False, rejection_stage='step3').csv_row(0)
    assert row['j'] == '' and row['n_ji'] == ''


def test_wilson_interval():
    center, half = wilson_interval(50, 100)
    assert center == pytest.approx(0.5)
    assert half == pytest.approx(0.0962, abs=1e-3)
    center, half = wilson_interval(0, 100)
    assert center - half == pytest.approx(0, abs=1e-12)
    assert half > 0


def test_deviating_pair():
    message = mixed_y_message(ACCEPT_ALL, PROOFS, SMALL)
    pair = deviating_pair(message, ACCEPT_ALL)
    assert (pair.j, pair.i) == (0, 0)
    assert pair.deviation == pytest.approx(0.25)
    assert pair.total_variation == pytest.approx(0.25)
    honest = deviating_pair(honest_message(ACCEPT_ALL, PROOFS, SMALL), ACCEPT_ALL)
    assert honest.deviation <= 2.0**-SMALL.alpha + 1e-15


def test_large_total_variation_forces_a_deviating_pair():
    m, r, alpha = ACCEPT_ALL.m, ACCEPT_ALL.r, 40
    rng = np.random.default_rng(13)
    triggered = 0
    for _ in range(500):
        y_register = []
        for _j in range(m):
            rho = random_density(2, rng)
            if rng.random() < 0.5:
                y_register.append(ExplicitCopies((rho, random_density(2, rng))))
            else:
                y_register.append(IidCopies(rho))
        eps = rng.uniform(0, 0.3)
        qs = [
            born_probabilities(ACCEPT_ALL.povms[j], y.effective_state())
            for j, y in enumerate(y_register)
        ]
        x_register = tuple(
            to_fixed_point((1 - eps) * q + eps * rng.dirichlet(np.ones(r)), alpha) for q in qs
        )
        message = MerlinMessage(x_register=x_register, alpha=alpha, y_register=tuple(y_register))
        tv = max(np.abs(message.claimed_distribution(j) - q).sum() / 2 for j, q in enumerate(qs))
        pair = deviating_pair(message, ACCEPT_ALL)
        if tv >= 1 / (10 * m):
            triggered += 1
            assert pair.deviation >= 1 / (10 * m * r)
    assert 0 < triggered < 500


def test_honest_passes_step4():
    estimate = estimate_acceptance(
        ACCEPT_ALL, honest_message(ACCEPT_ALL, PROOFS, SMALL), SMALL, 200, np.random.default_rng(6)
    )
    assert estimate.rejections('step4') == 0
    assert estimate.mean == 1


def test_honest_counts_never_fail_step4():
    message = honest_message(ACCEPT_ALL, PROOFS, SMALL)
    rng = np.random.default_rng(14)
    rejections = 0
    for _ in range(10**5):
        j = int(rng.integers(ACCEPT_ALL.m))
        counts = step4_counts(ACCEPT_ALL, message, j, SMALL.k, rng)
        x = message.x_register[j]
        i = int(rng.integers(ACCEPT_ALL.r))
        if not step4_check(counts[i], SMALL.k, x[i], SMALL.alpha, SMALL.p):
            rejections += 1
    assert rejections == 0


def test_step4_rejections_fall_with_k():
    means = []
    for k in (10**3, 10**4, 10**5):
        params = ProtocolParams(p=200, k=k, q=50, alpha=120)
        message = honest_message(ACCEPT_ALL, PROOFS, params)
        estimate = estimate_acceptance(ACCEPT_ALL, message, params, 300, np.random.default_rng(7))
        assert estimate.rejections('step5') == 0
        means.append(estimate.mean)
    assert means[0] < means[1] < means[2]


def test_completeness():
    message = honest_message(ACCEPT_ALL, PROOFS, SMALL)
    estimate = estimate_acceptance(ACCEPT_ALL, message, SMALL, 1000, np.random.default_rng(8))
    assert estimate.mean >= 0.99
    assert estimate.low <= estimate.mean <= estimate.high
    assert len(estimate.outcomes) == 1000


def test_soundness_lying_x():
    m, r = 2, 3
    message = lying_x_message(MATCHING, PROOFS, SMALL)
    assert message.x_register == ((2**120, 0, 0), (2**120, 0, 0))
    pair = deviating_pair(message, MATCHING)
    assert (pair.j, pair.i) == (1, 0)

    estimate = estimate_acceptance(MATCHING, message, SMALL, 10**4, np.random.default_rng(9))
    picked = [o for o in estimate.outcomes if o.step4_pick == (pair.j, pair.i)]
    assert picked
    rejected = sum(o.rejection_stage == 'step4' for o in picked)
    center, half = wilson_interval(rejected, len(picked), 0.99)
    assert center - half >= 1 / (2 * SMALL.p)
    assert estimate.mean <= soundness_upper_bound(m, r) + estimate.ci95


def test_stage2_accepting_nothing():
    protocol = make_protocol(Stage2Acceptor.constant(2, 3, 0.0))
    message = honest_message(protocol, PROOFS, SMALL)
    estimate = estimate_acceptance(protocol, message, SMALL, 100, np.random.default_rng(10))
    assert estimate.mean == 0
    assert estimate.rejections('step5') == 100 - estimate.rejections('step4')
    assert estimate.to_json()['rejections']['step3'] == 0


def test_estimate_is_deterministic():
    message = mixed_y_message(ACCEPT_ALL, PROOFS, SMALL)
    a = estimate_acceptance(ACCEPT_ALL, message, SMALL, 60, np.random.default_rng(11))
    b = estimate_acceptance(ACCEPT_ALL, message, SMALL, 60, np.random.default_rng(11), workers=3)
    assert [o.csv_row(0) for o in a.outcomes] == [o.csv_row(0) for o in b.outcomes]


def test_merlin_generator():
    def fresh(g):
        return honest_message(ACCEPT_ALL, PROOFS, SMALL)

    estimate = estimate_acceptance(ACCEPT_ALL, fresh, SMALL, 20, np.random.default_rng(12))
    assert estimate.trials == 20
    with pytest.raises(ValueError):
        estimate_acceptance(ACCEPT_ALL, fresh, SMALL, 0, np.random.default_rng(12))
