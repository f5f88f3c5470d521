import math

import numpy as np
import pytest

from src.data.pipe_scan import PipeScanConfig, generate_pipe_scan
from src.svm.batch_smo import SmoConfig, solve
from src.svm.core import Dataset, Sample, decision_values
from src.svm.core import dual_objective as model_dual_objective
from src.svm.errors import (
    DegeneracyError,
    InvalidParameterError,
    InvariantViolationError,
    SampleNotFoundError,
)
from src.svm.isvm import (
    INVERSE_TOLERANCE,
    SUPPORT,
    IsvmState,
    LimitEvent,
    Membership,
    SensitivityPair,
    classify_membership,
    dual_objective,
    expand_inverse,
    first_support_inverse,
    learn_many,
    learn_sample,
    margin_gradient,
    max_increment,
    sensitivities,
    shrink_inverse,
    unlearn_sample,
)
from src.svm.kernel import KernelKind, KernelSpec

RBF = KernelSpec(KernelKind.RBF, gamma=0.5)


def blobs(n: int = 40, seed: int = 0, separation: float = 1.5) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.where(np.arange(n) % 2 == 0, 1, -1)
    features = rng.normal(0.0, 1.0, (n, 2)) + separation * labels[:, np.newaxis]
    return Dataset(features, labels)


def two_far_samples() -> list[Sample]:
    return [Sample(np.array([0.0]), 1), Sample(np.array([100.0]), -1)]


def hand_built_state(*, alpha_s: float, g_c: float, alpha_c: float = 0.0) -> IsvmState:
    """Support sample 0 and candidate 1, with coefficients set by hand."""

    state = IsvmState(100.0, KernelSpec(KernelKind.RBF, gamma=1.0))
    learn_sample(state, Sample(np.array([0.0]), 1, index=0))
    state._append(Sample(np.array([math.sqrt(math.log(5.0))]), 1, index=1))
    state.membership[0] = SUPPORT
    state.support = [0]
    state.inverse = first_support_inverse(1, 1.0)
    state.alpha[:] = [alpha_s, alpha_c]
    state.gradient[:] = [0.0, g_c]
    return state


@pytest.mark.parametrize(
    ("alpha", "g", "expected"),
    [
        (0.0, 0.3, Membership.REMAINDER),
        (42.0, 0.0, Membership.SUPPORT),
        (100.0, -0.7, Membership.ERROR),
        (0.0, -5e-7, Membership.REMAINDER),
    ],
)
def test_classify_membership(alpha: float, g: float, expected: Membership) -> None:
    assert classify_membership(alpha, g, 100.0) is expected


def test_classify_membership_rejects_corrupt_pairs() -> None:
    with pytest.raises(InvariantViolationError, match="no KKT case"):
        classify_membership(42.0, 0.5, 100.0)
    with pytest.raises(InvalidParameterError):
        classify_membership(-1.0, 0.0, 100.0)


def test_first_support_inverse_inverts_the_bordered_matrix() -> None:
    inverse = first_support_inverse(1, 1.0)

    assert inverse.tolist() == [[-1.0, 1.0], [1.0, 0.0]]
    assert np.allclose(np.array([[0.0, 1.0], [1.0, 1.0]]) @ inverse, np.eye(2))


def test_expand_and_shrink_agree_with_direct_inversion() -> None:
    rng = np.random.default_rng(7)
    features = rng.normal(size=(5, 3))
    labels = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
    gram = np.exp(-0.5 * ((features[:, None, :] - features[None, :, :]) ** 2).sum(axis=2))
    bordered = np.zeros((6, 6))
    bordered[0, 1:] = labels
    bordered[1:, 0] = labels
    bordered[1:, 1:] = np.outer(labels, labels) * gram

    inverse = np.linalg.inv(bordered[:5, :5])
    grown = expand_inverse(inverse, bordered[:5, 5], bordered[5, 5])
    assert np.allclose(grown, np.linalg.inv(bordered), atol=1e-9)

    shrunk = shrink_inverse(grown, 5)
    assert np.allclose(shrunk, inverse, atol=1e-9)

    keep = [0, 1, 3, 4, 5]
    assert np.allclose(
        shrink_inverse(grown, 2), np.linalg.inv(bordered[np.ix_(keep, keep)]), atol=1e-9
    )


def test_expand_rejects_linearly_dependent_samples() -> None:
    inverse = first_support_inverse(1, 1.0)
    # A duplicate of the support sample: eta = [y, K] = [1, 1] gives kappa = 0.
    with pytest.raises(DegeneracyError, match="kappa"):
        expand_inverse(inverse, np.array([1.0, 1.0]), 1.0)


def test_sensitivities_of_a_single_support_sample() -> None:
    state = hand_built_state(alpha_s=0.5, g_c=-0.4)

    sens = sensitivities(state, 1)

    assert not sens.bias_only
    assert sens.beta.tolist() == pytest.approx([0.8, -1.0])
    # kappa = K_cc + eta . beta = 1 + 0.8 - 0.2
    assert sens.candidate_gamma == pytest.approx(1.6)
    assert sens.gamma_margin[0] == 0.0


def test_sensitivities_without_support_move_the_bias_only() -> None:
    state = IsvmState(10.0, RBF)
    learn_sample(state, Sample(np.array([0.0, 0.0]), 1))
    state._append(Sample(np.array([5.0, 5.0]), -1))

    sens = sensitivities(state, 1)

    assert sens.bias_only
    assert sens.bias_rate == -1.0
    assert sens.candidate_rate == 0.0
    assert sens.gamma_margin.tolist() == [-1.0, 1.0]


def sensitivity(support_rate: float, candidate_gamma: float) -> SensitivityPair:
    return SensitivityPair(
        beta=np.array([0.0, support_rate]),
        gamma_margin=np.array([0.0, candidate_gamma]),
        candidate_gamma=candidate_gamma,
        candidate_rate=1.0,
        bias_only=False,
    )


def test_max_increment_candidate_joins_support() -> None:
    state = hand_built_state(alpha_s=0.5, g_c=-0.4)

    increment = max_increment(state, 1, sensitivity(0.0, 2.0))

    assert increment.delta_alpha == pytest.approx(0.2)
    assert increment.event is LimitEvent.CANDIDATE_TO_SUPPORT
    assert increment.index == 1


def test_max_increment_support_sample_leaves_first() -> None:
    state = hand_built_state(alpha_s=0.15, g_c=-0.4)

    increment = max_increment(state, 1, sensitivity(-1.0, 0.1))

    assert increment.delta_alpha == pytest.approx(0.15)
    assert increment.event is LimitEvent.SUPPORT_TO_REMAINDER
    assert increment.index == 0


def test_max_increment_candidate_saturates_at_C() -> None:
    state = hand_built_state(alpha_s=0.5, g_c=-0.4, alpha_c=99.95)

    increment = max_increment(state, 1, sensitivity(0.0, 2.0))

    assert increment.delta_alpha == pytest.approx(0.05)
    assert increment.event is LimitEvent.CANDIDATE_TO_ERROR


def test_margin_gradient_from_scratch() -> None:
    state = IsvmState(100.0, KernelSpec(KernelKind.RBF, gamma=1.0))
    learn_sample(state, Sample(np.array([0.0]), 1, index=0))
    state._append(Sample(np.array([math.sqrt(math.log(2.0))]), 1, index=1))
    state.alpha[:] = [1.0, 0.0]
    state.bias = 0.0

    # y_i * (a_j y_j K_ij + mu) - 1 with K_ij = 0.5
    assert margin_gradient(state, 1) == pytest.approx(-0.5)


def test_first_sample_sets_the_bias_and_rests_in_remainder() -> None:
    state = learn_sample(IsvmState(10.0, RBF), Sample(np.array([1.0, 2.0]), -1))

    assert state.bias == -1.0
    assert state.membership_of(0) is Membership.REMAINDER
    assert state.alpha_of(0) == 0.0
    assert dual_objective(state) == 0.0


def test_two_opposite_samples_solve_in_closed_form() -> None:
    state = learn_many(IsvmState(100.0, KernelSpec(KernelKind.RBF, gamma=1.0)), two_far_samples())

    assert state.alpha.tolist() == pytest.approx([1.0, 1.0])
    assert state.bias == pytest.approx(0.0, abs=1e-12)
    assert state.members(Membership.SUPPORT) == [0, 1]
    assert dual_objective(state) == pytest.approx(1.0)
    assert state.verify().ok


def test_empty_state_has_zero_objective() -> None:
    state = IsvmState(1.0, RBF)

    assert dual_objective(state) == 0.0
    assert len(state) == 0
    assert state.verify().ok


@pytest.mark.parametrize(
    ("kernel", "n", "C", "seed"),
    [
        (RBF, 40, 10.0, 0),
        (RBF, 40, 1.0, 1),
        (KernelSpec(KernelKind.RBF, gamma=2.0), 30, 100.0, 2),
        (KernelSpec(KernelKind.POLYNOMIAL, gamma=0.5, degree=2, coef0=1.0), 12, 1.0, 3),
        (RBF, 120, 10.0, 4),
    ],
)
def test_every_insertion_leaves_a_consistent_state(
    kernel: KernelSpec, n: int, C: float, seed: int
) -> None:
    state = IsvmState(C, kernel)

    for sample in blobs(n, seed=seed):
        learn_sample(state, sample)
        audit = state.verify()
        assert audit.ok, audit
        assert audit.gradient_drift < 1e-6
        for index in state.ids:
            classify_membership(state.alpha_of(int(index)), margin_gradient(state, int(index)), C)


def test_matches_the_batch_solver() -> None:
    dataset = blobs(40)
    state = learn_many(IsvmState(10.0, RBF), dataset)
    batch = solve(dataset, SmoConfig(C=10.0, kernel=RBF, tolerance=1e-9, max_passes=1000))

    incremental = dual_objective(state)
    assert incremental == pytest.approx(model_dual_objective(batch), rel=1e-4)
    assert np.allclose(
        decision_values(state.to_model(), dataset), decision_values(batch, dataset), atol=1e-3
    )


def test_insertion_order_does_not_change_the_optimum() -> None:
    dataset = blobs(30, seed=4)
    forward = learn_many(IsvmState(10.0, RBF), dataset)
    reverse = learn_many(IsvmState(10.0, RBF), dataset.subset(np.arange(30)[::-1]))

    assert dual_objective(forward) == pytest.approx(dual_objective(reverse), abs=1e-6)


def test_unlearning_restores_the_previous_solution() -> None:
    dataset = blobs(31, seed=5)
    state = learn_many(IsvmState(10.0, RBF), dataset.subset(range(30)))
    query_points = blobs(32, seed=6)
    before = decision_values(state.to_model(), query_points)

    # Mislabeled on purpose so it is sure to carry a nonzero coefficient.
    outlier = Sample(np.array([2.0, 2.0]), -1, index=99)
    learn_sample(state, outlier)
    assert state.alpha_of(99) > 0
    unlearn_sample(state, 99)

    assert 99 not in state
    assert np.allclose(decision_values(state.to_model(), query_points), before, atol=1e-6)
    assert state.verify().ok


def test_unlearning_a_remainder_sample_changes_nothing() -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(30, seed=8))
    remainder = state.members(Membership.REMAINDER)
    assert remainder
    alpha_before = {int(i): state.alpha_of(int(i)) for i in state.ids if i != remainder[0]}
    bias_before = state.bias

    unlearn_sample(state, remainder[0])

    assert {int(i): state.alpha_of(int(i)) for i in state.ids} == alpha_before
    assert state.bias == bias_before


def test_unlearning_every_sample_empties_the_state() -> None:
    state = learn_many(IsvmState(100.0, KernelSpec(KernelKind.RBF, gamma=1.0)), two_far_samples())

    unlearn_sample(state, 1)
    unlearn_sample(state, 0)

    assert len(state) == 0
    assert state.support == []


def test_unlearning_an_unknown_sample_fails() -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(6))

    with pytest.raises(SampleNotFoundError, match="sample 123"):
        unlearn_sample(state, 123)


def test_a_duplicate_of_a_remainder_sample_stays_in_remainder() -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(30, seed=9))
    index = state.members(Membership.REMAINDER)[0]
    position = state.position(index)
    alpha_before = state.alpha.copy()

    learn_sample(state, Sample(state.features[position], int(state.labels[position]), index=500))

    assert state.membership_of(500) is Membership.REMAINDER
    assert np.array_equal(state.alpha[:-1], alpha_before)


def test_relearning_a_stored_index_is_rejected() -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(4))

    with pytest.raises(InvalidParameterError, match="already stored"):
        learn_sample(state, Sample(np.array([0.0, 0.0]), 1, index=2))


def test_payload_round_trip_keeps_the_state() -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(20))

    restored = IsvmState.from_payload(state.to_payload())

    assert np.array_equal(restored.alpha, state.alpha)
    assert restored.support == state.support
    assert restored.bias == state.bias
    assert restored.verify().ok


def quadratic_classes(n: int, seed: int) -> Dataset:
    """3-D Gaussian points labeled by a quadric, so a degree-2 kernel fits them."""

    rng = np.random.default_rng(seed)
    features = rng.normal(0.0, 1.0, (n, 3))
    radius = (features**2).sum(axis=1) + 0.5 * features[:, 0] * features[:, 1]
    labels = np.where(radius + rng.normal(0.0, 0.3, n) < 2.5, 1, -1)
    return Dataset(features, labels)


def assert_consistent_after_each_insertion(state: IsvmState, dataset: Dataset) -> None:
    for sample in dataset:
        learn_sample(state, sample)
        audit = state.verify()
        assert audit.ok, (sample.index, audit)
        assert audit.gradient_drift < 1e-6


def narrow_pipe_scans(n: int, seed: int) -> Dataset:
    return generate_pipe_scan(
        PipeScanConfig(
            n_samples=n, beams_per_revolution=12, defect_width_range=(2, 6), seed=seed
        )
    )


@pytest.mark.parametrize(
    ("dataset", "C", "kernel"),
    [
        (blobs(500, seed=21, separation=1.0), 10.0, RBF),
        (narrow_pipe_scans(600, seed=7), 100.0, KernelSpec(KernelKind.RBF)),
    ],
    ids=["blobs", "pipe_scans"],
)
def test_long_stream_keeps_every_invariant(
    dataset: Dataset, C: float, kernel: KernelSpec
) -> None:
    state = IsvmState(C, kernel)

    assert_consistent_after_each_insertion(state, dataset)

    assert len(state) == len(dataset)
    assert state.inverse_residual() <= INVERSE_TOLERANCE


@pytest.mark.parametrize("n", [50, 200, 500])
def test_polynomial_stream_with_a_rank_deficient_gram_matrix(n: int) -> None:
    # Degree 2 in three dimensions spans ten features; longer streams are dependent.
    kernel = KernelSpec(KernelKind.POLYNOMIAL, gamma=1.0, degree=2, coef0=1.0)
    state = IsvmState(10.0, kernel)

    assert_consistent_after_each_insertion(state, quadratic_classes(n, seed=n))

    assert len(state.support) <= 11


@pytest.mark.parametrize("seed", range(50))
def test_learning_then_unlearning_an_outlier_is_a_round_trip(seed: int) -> None:
    state = learn_many(IsvmState(10.0, RBF), blobs(30, seed=100 + seed))
    query_points = blobs(32, seed=200 + seed)
    before = decision_values(state.to_model(), query_points)
    outlier = Sample(np.array([1.5, 1.5]), -1, index=999)

    learn_sample(state, outlier)
    assert state.alpha_of(999) > 0
    unlearn_sample(state, 999)

    assert np.allclose(decision_values(state.to_model(), query_points), before, atol=1e-6)
    assert state.verify().ok


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(25))
def test_matches_the_batch_solver_on_pipe_scans(seed: int) -> None:
    dataset = generate_pipe_scan(PipeScanConfig(n_samples=200, seed=seed))
    kernel = KernelSpec(KernelKind.RBF)
    state = learn_many(IsvmState(100.0, kernel), dataset)
    batch = solve(dataset, SmoConfig(C=100.0, kernel=kernel, tolerance=1e-9, max_passes=1000))

    assert dual_objective(state) == pytest.approx(model_dual_objective(batch), rel=1e-4)
    assert np.allclose(
        decision_values(state.to_model(), dataset), decision_values(batch, dataset), atol=1e-3
    )
