"""
Tests for the evaluation metrics
================================

Concept classifier and its accuracy gate, restoration scores, transfer
matrices, the embedding atlas and ablation traces.
"""

import numpy as np
import pytest

from utils.autodiff.rng import RandomStream
from utils.conditioning.world import concept_token
from utils.metrics.ablation import ablation_trace, record_epochs
from utils.metrics.atlas import DegenerateProjectionError, embedding_atlas
from utils.metrics.classifier import ClassifierGateError, train_classifier
from utils.metrics.restoration import (
    neutral_histogram,
    neutral_preservation,
    restoration_accuracy,
    restoration_scores,
    total_variation,
)
from utils.metrics.transfer import AttackInput, TransferMatrix, build_transfer_matrix, cell_stream
from erasure_implementations import ERASURE_METHODS, ErasureSpec, erase
from restoration_implementations import ASConfig, select_candidate, textual_inversion
from restoration_implementations.adversarial_search import adversarial_search


def _cosine_silhouette(points, labels):
    """Silhouette with cosine distance, computed point by point."""
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    distance = 1.0 - unit @ unit.T
    labels = np.asarray(labels)
    values = []
    for i in range(len(points)):
        own = labels == labels[i]
        own[i] = False
        a = distance[i, own].mean()
        b = min(distance[i, labels == other].mean() for other in set(labels) if other != labels[i])
        values.append((b - a) / max(a, b))
    return float(np.mean(values))


# =============================================================================
# Classifier Tests
# =============================================================================

class TestClassifier:
    """Training, prediction and the accuracy gate."""

    def test_passes_gate(self, classifier):
        assert classifier.report.holdout_accuracy >= 0.98

    def test_centers_are_classified_as_their_concept(self, world, classifier):
        assert np.array_equal(classifier.predict(world.centers), np.arange(world.n_concepts))

    def test_midpoint_splits_between_neighbours(self, world, classifier):
        k = world.n_concepts
        for i in range(k):
            j = (i + 1) % k
            midpoint = 0.5 * (world.centers[i] + world.centers[j])
            top_two = np.argsort(classifier.predict_proba(midpoint)[0])[-2:]
            assert set(top_two.tolist()) == {i, j}

    def test_probabilities_sum_to_one(self, world, classifier):
        points, _ = world.sample_mixture(50, RandomStream(12))
        assert np.allclose(classifier.predict_proba(points).sum(axis=1), 1.0)

    def test_same_seed_same_checksum(self, world):
        a = train_classifier(world, steps=20, seed=13, gate=0.0)
        b = train_classifier(world, steps=20, seed=13, gate=0.0)
        assert a.checksum() == b.checksum()

    def test_unreachable_gate_raises(self, world):
        with pytest.raises(ClassifierGateError) as excinfo:
            train_classifier(world, steps=1, seed=14)
        assert excinfo.value.accuracy < 0.98

    def test_gate_above_one_always_fails(self, world):
        with pytest.raises(ClassifierGateError):
            train_classifier(world, steps=5, seed=15, gate=1.01)


# =============================================================================
# Restoration Score Tests
# =============================================================================

class TestRestorationScores:
    """Single-model restoration accuracy."""

    def test_single_sample_is_zero_or_one(self, base_model, classifier, short_schedule):
        accuracy = restoration_accuracy(base_model, "c1", classifier, 1, 1, 0, short_schedule)
        assert accuracy in (0.0, 1.0)

    def test_n_must_be_positive(self, base_model, classifier, short_schedule):
        with pytest.raises(ValueError):
            restoration_scores(base_model, "c1", classifier, 1, 0, 0, short_schedule)

    def test_repeatable_and_bounded(self, base_model, classifier, short_schedule):
        embedding = base_model["encoder.token_table"].data[base_model.token_index(concept_token(2))]
        a = restoration_scores(base_model, embedding.copy(), classifier, 2, 16, 5, short_schedule)
        b = restoration_scores(base_model, embedding.copy(), classifier, 2, 16, 5, short_schedule)
        assert a == b
        assert 0.0 <= a.accuracy <= 1.0 and 0.0 <= a.mean_probability <= 1.0
        assert a.n == 16

    def test_unknown_sampler(self, base_model, classifier, short_schedule):
        with pytest.raises(ValueError):
            restoration_scores(base_model, "c1", classifier, 1, 2, 0, short_schedule, sampler="euler")

    def test_neutral_histogram_is_a_distribution(self, base_model, classifier, short_schedule):
        histogram = neutral_histogram(base_model, classifier, 20, 3, short_schedule)
        assert histogram.shape == (classifier.n_classes,)
        assert histogram.sum() == pytest.approx(1.0)

    def test_total_variation(self):
        assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert total_variation([0.2, 0.3, 0.5], [0.3, 0.3, 0.4]) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            total_variation([1.0], [0.5, 0.5])

    def test_identical_models_preserve_neutral_histogram(self, base_model, classifier, short_schedule):
        preservation = neutral_preservation(base_model, base_model.copy(), classifier, 12, 6, short_schedule)
        assert np.array_equal(preservation.base_histogram, preservation.tuned_histogram)
        assert preservation.total_variation == 0.0
        assert preservation.within(0.0)
        assert preservation.to_dict()["n"] == 12

    def test_neutral_preservation_against_untrained_model(self, base_model, fresh_model, classifier, short_schedule):
        preservation = neutral_preservation(base_model, fresh_model, classifier, 12, 6, short_schedule)
        assert preservation.total_variation == pytest.approx(
            total_variation(preservation.base_histogram, preservation.tuned_histogram)
        )
        with pytest.raises(ValueError):
            neutral_preservation(base_model, fresh_model, classifier, 0, 6, short_schedule)


# =============================================================================
# Transfer Matrix Tests
# =============================================================================

class TestAttackInput:
    """Row validation."""

    def test_needs_an_input(self):
        with pytest.raises(ValueError):
            AttackInput("empty")

    def test_token_and_embedding_conflict(self):
        with pytest.raises(ValueError):
            AttackInput("mixed", token="c0", embedding=np.zeros(16))

    def test_per_model_lookup(self):
        attack = AttackInput("ti", per_model={"m1": np.ones(16)})
        assert np.array_equal(attack.value_for("m1"), np.ones(16))
        with pytest.raises(KeyError):
            attack.value_for("m2")


class TestTransferMatrix:
    """Cell scoring, averages and rankings."""

    @pytest.fixture(scope="class")
    def attacks(self, base_model):
        row = base_model["encoder.token_table"].data[base_model.token_index("c0")].copy()
        return [
            AttackInput("literal", token="c0"),
            AttackInput("shared", embedding=row),
            AttackInput("white", per_model={"m1": row, "m2": row * 0.5}, white_box_model="m1"),
        ]

    @pytest.fixture(scope="class")
    def matrix(self, base_model, fresh_model, classifier, short_schedule, attacks):
        return build_transfer_matrix(
            base_model, {"m1": base_model, "m2": fresh_model}, attacks, classifier,
            target=0, n=8, seed=21, schedule=short_schedule,
        )

    def test_single_cell_matches_direct_score(self, base_model, classifier, short_schedule):
        matrix = build_transfer_matrix(
            None, {"m": base_model}, [AttackInput("a", token="c3")], classifier,
            target=3, n=10, seed=22, schedule=short_schedule,
        )
        direct = restoration_accuracy(
            base_model, "c3", classifier, 3, 10, cell_stream(22, "a", "m"), short_schedule, 5,
        )
        assert matrix.accuracy.shape == (1, 1)
        assert matrix.cell("a", "m") == direct

    def test_layout_and_counts(self, matrix):
        assert matrix.models == ["base", "m1", "m2"]
        assert matrix.attacks == ["literal", "shared", "white"]
        assert np.all(matrix.counts == 8)
        assert np.all((matrix.accuracy >= 0) & (matrix.accuracy <= 1))

    def test_average_skips_reference_column(self, matrix):
        assert np.allclose(matrix.row_averages(), matrix.accuracy[:, 1:].mean(axis=1))
        frame = matrix.to_frame()
        assert list(frame.columns) == ["base", "m1", "m2", "average"]
        assert np.allclose(frame["average"].to_numpy(), matrix.row_averages())

    def test_white_box_flags(self, matrix):
        expected = np.zeros((3, 3), dtype=bool)
        expected[2, 1] = True
        assert np.array_equal(matrix.white_box, expected)

    def test_worker_count_does_not_change_cells(self, base_model, fresh_model, classifier, short_schedule, attacks, matrix):
        parallel = build_transfer_matrix(
            base_model, {"m1": base_model, "m2": fresh_model}, attacks, classifier,
            target=0, n=8, seed=21, schedule=short_schedule, workers=2,
        )
        assert np.array_equal(parallel.accuracy, matrix.accuracy)
        assert np.array_equal(parallel.mean_probability, matrix.mean_probability)

    def test_ranking_ties_keep_row_order(self):
        matrix = TransferMatrix(
            attacks=["a0", "a1", "a2"],
            models=["m1", "m2"],
            accuracy=np.array([[0.2, 0.5], [0.7, 0.5], [0.7, 0.1]]),
            mean_probability=np.zeros((3, 2)),
            counts=np.full((3, 2), 10),
            white_box=np.zeros((3, 2), dtype=bool),
        )
        assert matrix.ranking() == {"m1": ("a1", "a2"), "m2": ("a0", "a1")}
        assert np.allclose(matrix.row_averages(), [0.35, 0.6, 0.4])

    def test_out_of_range_cell_rejected(self):
        with pytest.raises(ValueError):
            TransferMatrix(["a"], ["m"], np.array([[1.5]]), np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))

    def test_unknown_score_kind(self, matrix):
        with pytest.raises(ValueError):
            matrix.to_frame(kind="recall")


# =============================================================================
# Atlas Tests
# =============================================================================

class TestEmbeddingAtlas:
    """Projection geometry and cluster statistics."""

    def test_planar_input_keeps_distances(self):
        stream = RandomStream(30)
        basis, _ = np.linalg.qr(stream.normal((16, 2)))
        coords = stream.normal((12, 2)) * [3.0, 1.0]
        points = coords @ basis.T + 5.0
        report = embedding_atlas([("a" if i < 6 else "b", p) for i, p in enumerate(points)])
        original = np.linalg.norm(points[:, None] - points[None], axis=-1)
        projected = np.linalg.norm(report.coordinates[:, None] - report.coordinates[None], axis=-1)
        assert np.allclose(original, projected, atol=1e-9)

    def test_components_are_orthonormal(self):
        points = RandomStream(31).normal((20, 16))
        report = embedding_atlas([(str(i % 3), p) for i, p in enumerate(points)])
        assert np.allclose(report.components @ report.components.T, np.eye(2), atol=1e-9)
        assert report.explained_variance[0] >= report.explained_variance[1]

    def test_tight_distant_clusters_separate(self):
        stream = RandomStream(32)
        a = 10.0 * np.eye(16)[0] + 0.01 * stream.normal((10, 16))
        b = 10.0 * np.eye(16)[1] + 0.01 * stream.normal((10, 16))
        report = embedding_atlas([("a", p) for p in a] + [("b", p) for p in b])
        assert report.silhouette > 0.9
        assert set(report.label_silhouette) == {"a", "b"}

    def test_silhouette_matches_direct_computation(self):
        stream = RandomStream(33)
        points = stream.normal((30, 16)) + np.repeat(stream.normal((3, 16)) * 2.0, 10, axis=0)
        labels = [f"m{i // 10}" for i in range(30)]
        report = embedding_atlas(list(zip(labels, points)))
        assert report.silhouette == pytest.approx(_cosine_silhouette(points, labels), abs=1e-9)

    def test_single_label_has_no_silhouette(self):
        points = RandomStream(34).normal((5, 16))
        report = embedding_atlas([("only", p) for p in points])
        assert report.silhouette is None
        assert report.coordinates.shape == (5, 2)
        assert len(report.to_frame()) == 5

    def test_silhouette_restricted_to_requested_labels(self):
        stream = RandomStream(35)
        labeled = [(label, stream.normal(16)) for label in ["ti-a"] * 4 + ["ti-b"] * 4 + ["as"] * 4]
        report = embedding_atlas(labeled, silhouette_labels=["ti-a", "ti-b"])
        assert set(report.label_silhouette) == {"ti-a", "ti-b"}
        assert set(report.centroid_spread) == {"ti-a", "ti-b", "as"}
        assert embedding_atlas(labeled, silhouette_labels=["as"]).silhouette is None

    def test_identical_embeddings_rejected(self):
        with pytest.raises(DegenerateProjectionError):
            embedding_atlas([("a", np.ones(16)), ("b", np.ones(16))])

    def test_needs_two_embeddings(self):
        with pytest.raises(ValueError):
            embedding_atlas([("a", np.ones(16))])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            embedding_atlas([("a", np.ones(16)), ("b", np.ones(8))])


# =============================================================================
# Ablation Tests
# =============================================================================

class TestAblation:
    """Recording schedule and the two search variants."""

    def test_record_epochs(self):
        assert record_epochs(5, 10) == [0]
        assert record_epochs(10, 3) == [0, 3, 6, 9]
        with pytest.raises(ValueError):
            record_epochs(10, 0)

    def test_small_trace(self, world, base_model, fresh_model, classifier, short_schedule):
        cfg = ASConfig(E=5, I_v=2, f=2, I_theta=2, batch_size=4)
        report = ablation_trace(
            base_model, world, 0, cfg, {"m1": base_model, "m2": fresh_model}, classifier,
            record_every=2, seed=40, schedule=short_schedule, n=6,
        )
        for trace in report.traces():
            assert trace.epochs == [0, 2, 4]
            assert trace.models == ["m1", "m2"]
            assert trace.accuracy.shape == (3, 2)
        # both variants share v0 and the first embedding phase
        assert np.array_equal(report.with_as.accuracy[0], report.without_as.accuracy[0])
        frame = report.to_frame()
        assert len(frame) == 12
        assert set(frame["variant"]) == {"with_as", "without_as"}
        assert set(report.models_favoring_search()) <= {"m1", "m2"}


# =============================================================================
# Pilot-Scale Directional Checks
# =============================================================================

def _transfer_trial(world, base, unlearned, classifier, schedule, target, seed):
    """Best-of-V search row against inversion on the base model, unlearned columns only."""
    candidates = adversarial_search(base, world, target, ASConfig(), seed=seed, schedule=schedule)
    choices = select_candidate(candidates, "best_of_V", unlearned, classifier, target, n=100, seed=seed + 1,
                               schedule=schedule, subsample=30)
    ti_base = textual_inversion(base, world, target, 1000, seed=seed + 2, schedule=schedule)
    attacks = [
        AttackInput("as", per_model={label: choice.embedding for label, choice in choices.items()}),
        AttackInput("ti-base", embedding=ti_base.numpy()),
    ]
    return build_transfer_matrix(None, unlearned, attacks, classifier, target, 300, seed + 3, schedule)


def _search_wins(matrix):
    """Search beats base inversion on at least three models and by 0.15 on average."""
    beaten = sum(matrix.cell("as", label) > matrix.cell("ti-base", label) for label in matrix.models)
    averages = matrix.row_averages()
    return beaten >= 3 and averages[0] >= averages[1] + 0.15


@pytest.mark.slow
def test_search_transfers_better_than_base_inversion(world, trained_base, unlearned_set, classifier, schedule):
    matrix = _transfer_trial(world, trained_base, unlearned_set, classifier, schedule, 0, 50)
    assert set(matrix.models) == set(unlearned_set)
    assert _search_wins(matrix)


@pytest.mark.slow
def test_transfer_holds_across_concepts_and_seeds(world, trained_base, classifier, schedule):
    passing_concepts = 0
    for target in (0, 2, 4):
        unlearned = {
            spec.label: erase(trained_base, spec, world, schedule, seed=80 + target)
            for spec in (ErasureSpec(method, target) for method in ERASURE_METHODS)
        }
        wins = [
            _search_wins(_transfer_trial(world, trained_base, unlearned, classifier, schedule, target, seed))
            for seed in (100, 200, 300)
        ]
        passing_concepts += sum(wins) >= 2
    assert passing_concepts >= 2


@pytest.mark.slow
def test_inversions_cluster_by_model_while_search_spreads(world, trained_base, unlearned_set, classifier, schedule):
    sources = {"base": trained_base, **{label: record.model for label, record in unlearned_set.items()}}
    labeled = [
        (f"ti-{label}", textual_inversion(model, world, 0, 500, seed=90 + run, schedule=schedule).numpy())
        for label, model in sources.items()
        for run in range(4)
    ]
    candidates = adversarial_search(trained_base, world, 0, ASConfig(), seed=95, schedule=schedule)
    labeled.extend(("as", entry.embedding) for entry in candidates.entries)
    report = embedding_atlas(labeled, silhouette_labels=[f"ti-{label}" for label in sources])
    assert report.silhouette is not None and report.silhouette > 0.3
    assert report.centroid_spread["as"] >= 2.0 * report.centroid_spread["ti-base"]


@pytest.mark.slow
def test_search_phases_help_on_most_models(world, trained_base, unlearned_set, classifier, schedule):
    report = ablation_trace(trained_base, world, 0, ASConfig(), unlearned_set, classifier,
                            record_every=25, seed=60, schedule=schedule)
    assert len(report.models_favoring_search()) >= 3
