import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstmdpm.errors import DataError
from lstmdpm.evaluation import (
    ScoredVisit,
    auc_report,
    fit_lda,
    mae,
    multiclass_auc,
    pairwise_auc,
    posterior,
    score_visits,
)


def brute_force_pair_auc(pos_scores, neg_scores):
    """Independent oracle: P(pos > neg) + 0.5 P(tie) over all cross pairs."""
    wins = ties = 0
    for p, n in itertools.product(pos_scores, neg_scores):
        if p > n:
            wins += 1
        elif p == n:
            ties += 1
    return (wins + 0.5 * ties) / (len(pos_scores) * len(neg_scores))


def brute_force_multiclass(scored):
    classes = sorted({v.label for v in scored})
    terms = []
    for i, k in itertools.combinations(classes, 2):
        a_ik = brute_force_pair_auc(
            [v.posteriors[i] for v in scored if v.label == i],
            [v.posteriors[i] for v in scored if v.label == k],
        )
        a_ki = brute_force_pair_auc(
            [v.posteriors[k] for v in scored if v.label == k],
            [v.posteriors[k] for v in scored if v.label == i],
        )
        terms.append(0.5 * (a_ik + a_ki))
    return sum(terms) / len(terms)


def random_scored(rng, n_classes=3, max_samples=30):
    classes = [f"c{i}" for i in range(n_classes)]
    visits = []
    total = rng.integers(n_classes * 2, max_samples + 1)
    labels = [classes[i % n_classes] for i in range(total)]
    for label in labels:
        raw = rng.random(n_classes)
        if rng.random() < 0.3:
            raw = np.round(raw, 1)  # provoke ties
        if raw.sum() == 0.0:
            raw = np.ones_like(raw)
        post = raw / raw.sum()
        visits.append(ScoredVisit(label=label, posteriors=dict(zip(classes, post))))
    return visits


class TestMae:
    def test_perfect(self):
        y = np.zeros((1, 3, 2))
        assert (mae(y, y, np.ones_like(y, dtype=bool)) == 0).all()

    def test_masked_cells_excluded(self):
        s = np.array([[[1.0], [2.0], [7.7], [4.0]]])
        y = np.array([[[1.5], [2.0], [0.0], [3.0]]])
        mask = np.array([[[True], [True], [False], [True]]])
        assert mae(y, s, mask)[0] == pytest.approx((0.5 + 0.0 + 1.0) / 3)

    def test_affine_inverse_scales_result(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(-1, 1, (2, 4, 3))
        s = rng.uniform(-1, 1, (2, 4, 3))
        mask = rng.random((2, 4, 3)) > 0.3
        base = mae(y, s, mask)
        doubled = mae(y, s, mask, inverse=lambda v: 2.0 * v + 5.0)
        np.testing.assert_allclose(doubled, 2.0 * base, rtol=1e-12)

    def test_empty_node_undefined(self):
        mask = np.ones((1, 2, 2), dtype=bool)
        mask[:, :, 1] = False
        out = mae(np.zeros((1, 2, 2)), np.ones((1, 2, 2)), mask)
        assert out[0] == 1.0
        assert math.isnan(out[1])


class TestLda:
    def test_identical_classes_give_priors(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 2))
        labels = ["a"] * 30 + ["b"] * 10
        # Same rows for both classes: zero discriminant.
        x[30:] = x[:10]
        model = fit_lda(x, labels)
        post = posterior(model, rng.normal(size=2))
        assert post[0] == pytest.approx(model.priors[0], abs=0.35)

    def test_one_dimensional_closed_form(self):
        # Means +-1, shared unit variance, equal priors: posterior at 0
        # is exactly 0.5 and the boundary sits at 0.
        rng = np.random.default_rng(2)
        a = rng.normal(-1, 1, 200)
        b = rng.normal(1, 1, 200)
        x = np.concatenate([a, b])[:, None]
        model = fit_lda(x, ["neg"] * 200 + ["pos"] * 200)
        # Build the exact symmetric model rather than relying on sampling.
        exact = type(model)(
            classes=("neg", "pos"),
            means=np.array([[-1.0], [1.0]]),
            covariance=np.array([[1.0]]),
            priors=np.array([0.5, 0.5]),
        )
        post0 = posterior(exact, np.array([0.0]))
        assert post0[0] == pytest.approx(0.5, abs=1e-10)
        assert posterior(exact, np.array([0.5]))[1] > 0.5
        assert posterior(exact, np.array([-0.5]))[0] > 0.5

    def test_far_separated_clusters(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0, 0.1, size=(20, 2))
        b = rng.normal(50, 0.1, size=(20, 2))
        x = np.vstack([a, b])
        labels = ["a"] * 20 + ["b"] * 20
        model = fit_lda(x, labels)
        post = posterior(model, x)
        assert (post[:20, 0] >= 0.99).all()
        assert (post[20:, 1] >= 0.99).all()

    def test_posteriors_sum_to_one(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 3))
        labels = ["a", "b", "c"] * 10
        model = fit_lda(x, labels)
        post = posterior(model, rng.normal(size=(100, 3)) * 10)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
        assert (post >= 0).all()

    def test_matches_brute_force_density_ratio(self):
        rng = np.random.default_rng(5)
        x = np.vstack([rng.normal(0, 1, (15, 2)), rng.normal(2, 1, (15, 2))])
        labels = ["a"] * 15 + ["b"] * 15
        model = fit_lda(x, labels, ridge=1e-9)
        query = rng.normal(1, 1, size=(10, 2))
        post = posterior(model, query)
        inv = np.linalg.inv(model.covariance)
        for row, p in zip(query, post):
            dens = []
            for ci in range(2):
                d = row - model.means[ci]
                dens.append(model.priors[ci] * math.exp(-0.5 * d @ inv @ d))
            expected = dens[0] / (dens[0] + dens[1])
            assert p[0] == pytest.approx(expected, abs=1e-10)

    def test_affine_invariance_of_refit_posteriors(self):
        rng = np.random.default_rng(6)
        x = np.vstack([rng.normal(0, 1, (25, 3)), rng.normal(1.5, 1, (25, 3))])
        labels = ["a"] * 25 + ["b"] * 25
        transform = lambda v: v * np.array([2.0, -0.5, 10.0]) + np.array([1.0, 2.0, -3.0])
        base = fit_lda(x, labels, ridge=0.0)
        refit = fit_lda(transform(x), labels, ridge=0.0)
        query = rng.normal(0.5, 1, size=(20, 3))
        np.testing.assert_allclose(
            posterior(base, query), posterior(refit, transform(query)), atol=1e-8
        )

    def test_needs_two_classes_and_samples(self):
        with pytest.raises(DataError):
            fit_lda(np.zeros((4, 2)), ["a"] * 4)
        with pytest.raises(DataError):
            fit_lda(np.zeros((3, 2)), ["a", "a", "b"])


class TestMulticlassAuc:
    def test_hand_example_perfect_separation(self):
        # Class-A posteriors for A {0.9, 0.8}; class-B posteriors for A
        # {0.3, 0.4}; complements for B.
        visits = [
            ScoredVisit("A", {"A": 0.9, "B": 0.1}),
            ScoredVisit("A", {"A": 0.8, "B": 0.2}),
            ScoredVisit("B", {"A": 0.3, "B": 0.7}),
            ScoredVisit("B", {"A": 0.4, "B": 0.6}),
        ]
        assert multiclass_auc(visits) == pytest.approx(1.0)
        assert pairwise_auc(visits, "A", "B") == pytest.approx(1.0)

    def test_identical_scores_give_half(self):
        visits = [
            ScoredVisit(label, {"A": 0.5, "B": 0.5})
            for label in ("A", "A", "B", "B", "B")
        ]
        assert multiclass_auc(visits) == pytest.approx(0.5)

    def test_pair_symmetry(self):
        rng = np.random.default_rng(7)
        visits = random_scored(rng, n_classes=2)
        assert pairwise_auc(visits, "c0", "c1") == pytest.approx(
            pairwise_auc(visits, "c1", "c0"), abs=1e-12
        )

    @given(st.integers(0, 10_000), st.sampled_from([2, 3]))
    @settings(max_examples=120, deadline=None)
    def test_matches_counting_oracle(self, seed, n_classes):
        rng = np.random.default_rng(seed)
        visits = random_scored(rng, n_classes=n_classes)
        assert multiclass_auc(visits) == pytest.approx(
            brute_force_multiclass(visits), abs=1e-12
        )

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        visits = random_scored(rng, n_classes=2)
        warped = [
            ScoredVisit(v.label, {k: math.exp(3 * p) for k, p in v.posteriors.items()})
            for v in visits
        ]
        assert multiclass_auc(visits) == pytest.approx(
            multiclass_auc(warped), abs=1e-12
        )

    def test_empty_class_is_error(self):
        visits = [ScoredVisit("A", {"A": 0.5, "B": 0.5})]
        with pytest.raises(DataError):
            multiclass_auc(visits)

    def test_report_layout(self):
        rng = np.random.default_rng(8)
        visits = random_scored(rng, n_classes=3)
        report = auc_report(visits)
        assert set(report) == {"c0|c1", "c0|c2", "c1|c2", "multiclass"}


class TestScoreVisits:
    def test_labels_preserved_and_normalized(self):
        rng = np.random.default_rng(9)
        x = np.vstack([rng.normal(0, 1, (10, 2)), rng.normal(3, 1, (10, 2))])
        labels = ["a"] * 10 + ["b"] * 10
        model = fit_lda(x, labels)
        scored = score_visits(model, x, labels)
        assert [v.label for v in scored] == labels
        for v in scored:
            assert sum(v.posteriors.values()) == pytest.approx(1.0, abs=1e-12)
