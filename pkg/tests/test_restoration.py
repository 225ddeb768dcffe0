"""
Tests for restoration attacks
=============================

Textual inversion, the alternating adversarial search and candidate
selection. Includes finite-difference checks of both inner objectives and
the structural guarantees of the search: one candidate per epoch, the
parameter-update schedule, phase separation and the triangle-bound witnesses.
"""

import numpy as np
import pytest

from utils.autodiff import functional as F
from utils.autodiff.gradcheck import numerical_gradient, relative_error
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.prompts import neutral_prompt, placeholder_prompt
from utils.conditioning.world import concept_token
from utils.diffusion.forward import q_sample
from utils.diffusion.training import denoise_loss
from utils.metrics.restoration import neutral_preservation
from erasure_implementations import ErasureSpec, erase
from restoration_implementations import (
    ASConfig,
    AdversarialSearch,
    CandidateEntry,
    CandidateSet,
    RelaxationWitness,
    adversarial_search,
    erase_step_loss,
    final_window,
    initial_embedding,
    select_candidate,
    textual_inversion,
)


# =============================================================================
# Test Fixtures
# =============================================================================

@pytest.fixture
def tiny_config():
    return ASConfig(E=10, I_v=2, f=3, I_theta=2, batch_size=4)


@pytest.fixture
def synthetic_candidates(base_model):
    """Four snapshots built from token-table rows, with known losses."""
    table = base_model["encoder.token_table"].data
    rows = [table[base_model.token_index(concept_token(k))] for k in (3, 0, 2, 0)]
    entries = [CandidateEntry(epoch=e, embedding=row, loss=loss) for e, (row, loss) in enumerate(zip(rows, [0.9, 0.1, 0.5, 0.3]))]
    return CandidateSet(entries=entries, config=ASConfig(E=4, f=2))


def _noised_batch(seed, schedule, rows=6):
    stream = RandomStream(seed)
    z0 = stream.normal((rows, 2))
    t = stream.integers(1, schedule.T, size=rows)
    eps = stream.normal((rows, 2))
    return z0, t, eps


# =============================================================================
# Textual Inversion Tests
# =============================================================================

class TestTextualInversion:
    """Embedding-only optimization against a frozen model."""

    def test_zero_iterations_return_initial_embedding(self, world, base_model, short_schedule):
        v = textual_inversion(base_model, world, 2, iters=0, seed=7, schedule=short_schedule)
        expected = initial_embedding(base_model, "table_mean", 2, as_stream(7).spawn("v0"))
        assert np.array_equal(v.data, expected.data)

    def test_target_token_policy_starts_at_table_row(self, base_model):
        v = initial_embedding(base_model, "target_token", 4, RandomStream(0))
        assert np.array_equal(v.data, base_model["encoder.token_table"].data[base_model.token_index("c4")])

    def test_model_parameters_stay_frozen(self, world, base_model, short_schedule):
        before = base_model.checksum()
        v = textual_inversion(base_model, world, 1, iters=5, seed=0, schedule=short_schedule, batch_size=4)
        assert base_model.checksum() == before
        assert not v.requires_grad

    def test_deterministic_and_accepts_unlearned(self, world, base_model, short_schedule):
        unlearned = erase(base_model, ErasureSpec("uce", 1), world, short_schedule, seed=0)
        a = textual_inversion(unlearned, world, 1, iters=4, seed=3, schedule=short_schedule, batch_size=4)
        b = textual_inversion(unlearned, world, 1, iters=4, seed=3, schedule=short_schedule, batch_size=4)
        assert np.array_equal(a.data, b.data)

    def test_unknown_policy(self, base_model):
        with pytest.raises(ValueError):
            initial_embedding(base_model, "random", 0, RandomStream(0))

    @pytest.mark.parametrize("seed", [11, 12])
    def test_embedding_gradient_matches_finite_differences(self, base_model, schedule, seed):
        model = base_model.copy()
        v = Tensor(RandomStream(seed).normal(model.config.embed_dim), requires_grad=True)
        z0, t, eps = _noised_batch(seed, schedule)

        def loss_fn():
            return denoise_loss(model, z0, placeholder_prompt(v), t, eps, schedule)

        loss_fn().backward()
        assert relative_error(v.grad, numerical_gradient(loss_fn, v)) < 1e-4


# =============================================================================
# Inner Objective Tests
# =============================================================================

class TestEraseStepLoss:
    """The stop-gradient parameter objective."""

    def test_embedding_receives_no_gradient(self, base_model, schedule):
        model = base_model.copy()
        v = Tensor(RandomStream(1).normal(16), requires_grad=True)
        z0, t, eps = _noised_batch(1, schedule)
        erase_step_loss(model, v, z0, t, eps, schedule).backward()
        assert v.grad is None
        assert model["trunk.W_head"].grad is not None

    def test_gradient_equals_constant_target_gradient(self, base_model, schedule):
        model = base_model.copy()
        v = Tensor(RandomStream(2).normal(16))
        z0, t, eps = _noised_batch(2, schedule)
        zt = q_sample(z0, t, eps, schedule)
        neutral, _ = denoiser_forward(model, zt, neutral_prompt(), t)
        constant = Tensor(neutral.data.copy())
        model.zero_grad()

        def constant_loss():
            pred, _ = denoiser_forward(model, zt, placeholder_prompt(v), t)
            return F.mse(pred, constant)

        erase_step_loss(model, v, z0, t, eps, schedule).backward()
        for name in ("trunk.W_head", "trunk.W_hidden", "attention.W_value"):
            param = model[name]
            coords = [np.unravel_index(i, param.shape) for i in RandomStream(3).choice(param.size, size=12)]
            numeric = numerical_gradient(constant_loss, param, indices=coords)
            assert relative_error(param.grad, numeric) < 1e-4, name

    def test_reference_target_matches_at_start(self, base_model, schedule):
        v = Tensor(RandomStream(4).normal(16))
        z0, t, eps = _noised_batch(4, schedule)
        reference = base_model.copy()
        a = erase_step_loss(base_model.copy(), v, z0, t, eps, schedule)
        b = erase_step_loss(base_model.copy(), v, z0, t, eps, schedule, reference=reference)
        assert a.item() == b.item()

    def test_witness_slack(self):
        witness = RelaxationWitness(eps=np.array([3.0, 0.0]), eps_tilde=np.zeros(2), pred=np.array([0.0, 4.0]))
        assert witness.d == pytest.approx(3.0)
        assert witness.slack() == pytest.approx(5.0 - (3.0 - 4.0))
        assert witness.holds()


# =============================================================================
# Adversarial Search Tests
# =============================================================================

class TestAdversarialSearch:
    """Structure of the alternating optimization."""

    def test_one_candidate_per_epoch(self, world, base_model, short_schedule, tiny_config):
        candidates = adversarial_search(base_model, world, 0, tiny_config, seed=0, schedule=short_schedule)
        assert len(candidates) == 10
        assert [entry.epoch for entry in candidates.entries] == list(range(10))
        assert candidates.provenance["update_epochs"] == [0, 3, 6, 9]
        assert candidates.provenance["surrogate_checksum"] == base_model.checksum()

    def test_single_epoch(self, world, base_model, short_schedule):
        candidates = adversarial_search(base_model, world, 0, ASConfig(E=1, I_v=1, I_theta=1, batch_size=2),
                                        seed=0, schedule=short_schedule)
        assert len(candidates) == 1

    def test_update_epochs_arithmetic(self):
        assert ASConfig(E=10, f=3).update_epochs() == [0, 3, 6, 9]
        assert ASConfig(E=5, f=9).update_epochs() == [0]
        assert ASConfig(E=10, f=3, update_surrogate=False).update_epochs() == []

    def test_phases_are_separated(self, world, base_model, short_schedule, tiny_config):
        search = AdversarialSearch(base_model, world, 0, tiny_config, short_schedule)
        search.run(seed=1)
        phases = [record.phase for record in search.phase_records]
        assert phases.count("embedding") == 10
        assert phases.count("parameter") == 4
        assert all(record.separated() for record in search.phase_records)
        parameter_records = [r for r in search.phase_records if r.phase == "parameter"]
        assert all(r.theta_before != r.theta_after for r in parameter_records)

    def test_witnesses_hold(self, world, base_model, short_schedule, tiny_config):
        search = AdversarialSearch(base_model, world, 0, tiny_config, short_schedule)
        search.run(seed=2)
        assert len(search.witnesses) == 4 * tiny_config.I_theta * tiny_config.batch_size
        assert all(witness.holds() for witness in search.witnesses)

    def test_original_model_untouched(self, world, base_model, short_schedule, tiny_config):
        before = base_model.checksum()
        search = AdversarialSearch(base_model, world, 0, tiny_config, short_schedule)
        search.run(seed=3)
        assert base_model.checksum() == before
        assert search.surrogate.checksum() != before

    def test_no_surrogate_updates(self, world, base_model, short_schedule):
        cfg = ASConfig(E=4, I_v=2, f=1, I_theta=2, batch_size=4, update_surrogate=False)
        search = AdversarialSearch(base_model, world, 0, cfg, short_schedule)
        candidates = search.run(seed=4)
        assert search.surrogate.checksum() == base_model.checksum()
        assert candidates.provenance["update_epochs"] == []
        assert search.witnesses == []

    def test_rejects_unlearned_model(self, world, base_model, short_schedule):
        unlearned = erase(base_model, ErasureSpec("uce", 0), world, short_schedule, seed=0)
        with pytest.raises(TypeError):
            AdversarialSearch(unlearned, world, 0, ASConfig(E=1), short_schedule)

    def test_same_seed_same_candidates(self, world, base_model, short_schedule, tiny_config):
        a = adversarial_search(base_model, world, 0, tiny_config, seed=5, schedule=short_schedule)
        b = adversarial_search(base_model, world, 0, tiny_config, seed=5, schedule=short_schedule)
        assert np.array_equal(a.embeddings(), b.embeddings())
        assert np.array_equal(a.losses(), b.losses())

    def test_epoch_callback_sees_every_snapshot(self, world, base_model, short_schedule, tiny_config):
        seen = []
        search = AdversarialSearch(base_model, world, 0, tiny_config, short_schedule)
        candidates = search.run(seed=6, on_epoch_end=lambda epoch, v: seen.append((epoch, v)))
        assert [epoch for epoch, _ in seen] == list(range(10))
        assert np.array_equal(np.stack([v for _, v in seen]), candidates.embeddings())

    def test_reference_divergence_tracking(self, world, base_model, short_schedule):
        cfg = ASConfig(E=4, I_v=2, f=2, I_theta=3, batch_size=4, track_reference_divergence=True)
        search = AdversarialSearch(base_model, world, 0, cfg, short_schedule)
        search.run(seed=7)
        assert len(search.reference_divergence) == 2 * 3
        first = search.reference_divergence[0]
        assert first.stop_gradient_loss == first.reference_loss
        later = search.reference_divergence[-1]
        assert later.stop_gradient_loss != later.reference_loss

    def test_candidate_frame(self, world, base_model, short_schedule, tiny_config):
        frame = adversarial_search(base_model, world, 0, tiny_config, seed=0, schedule=short_schedule).to_frame()
        assert list(frame.columns[:3]) == ["epoch", "loss", "v0"]
        assert frame.shape == (10, 2 + base_model.config.embed_dim)

    def test_snapshots_are_read_only(self):
        entry = CandidateEntry(epoch=0, embedding=np.zeros(4), loss=0.0)
        with pytest.raises(ValueError):
            entry.embedding[0] = 1.0

    @pytest.mark.parametrize("kwargs", [{"E": 0}, {"f": 0}, {"lr_v": 0.0}, {"inner_loss": "exact"}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            ASConfig(**kwargs)


# =============================================================================
# Candidate Selection Tests
# =============================================================================

class TestSelection:
    """final_loss and best_of_V."""

    def test_final_window(self, synthetic_candidates):
        assert final_window(synthetic_candidates) == [2, 3]

    def test_final_loss_picks_lowest_in_window(self, synthetic_candidates):
        choice = select_candidate(synthetic_candidates)["surrogate"]
        assert choice.index == 3
        assert choice.score is None

    def test_single_candidate_under_both_modes(self, base_model, classifier, short_schedule):
        single = CandidateSet([CandidateEntry(0, np.ones(16), 0.2)], ASConfig(E=1))
        models = {"base": base_model}
        for mode in ("final_loss", "best_of_V"):
            choice = select_candidate(single, mode, models=models, classifier=classifier, target=0, n=4,
                                      schedule=short_schedule)["base"]
            assert choice.index == 0

    def test_best_of_v_dominates_final_loss(self, synthetic_candidates, base_model, classifier, short_schedule, world):
        unlearned = erase(base_model, ErasureSpec("uce", 0), world, short_schedule, seed=0)
        models = {"base": base_model, "uce-c0": unlearned}
        kwargs = dict(models=models, classifier=classifier, target=0, n=20, seed=9, schedule=short_schedule)
        final = select_candidate(synthetic_candidates, "final_loss", **kwargs)
        best = select_candidate(synthetic_candidates, "best_of_V", **kwargs)
        for label in models:
            assert final[label].index == 3
            assert best[label].score >= final[label].score

    def test_subsample_keeps_final_loss_choice(self, synthetic_candidates, base_model, classifier, short_schedule):
        best = select_candidate(synthetic_candidates, "best_of_V", models={"base": base_model}, classifier=classifier,
                                target=0, n=4, schedule=short_schedule, subsample=1)
        assert best["base"].index in (0, 3)

    def test_errors(self, synthetic_candidates, classifier):
        with pytest.raises(ValueError):
            select_candidate(CandidateSet([], ASConfig()))
        with pytest.raises(ValueError):
            select_candidate(synthetic_candidates, "median")
        with pytest.raises(ValueError):
            select_candidate(synthetic_candidates, "best_of_V")


# =============================================================================
# Pilot-Scale Neutral Preservation
# =============================================================================

@pytest.mark.slow
def test_full_search_keeps_neutral_generations(world, trained_base, classifier, schedule):
    search = AdversarialSearch(trained_base, world, 0, ASConfig(), schedule)
    search.run(seed=70)
    preservation = neutral_preservation(trained_base, search.surrogate, classifier, 1000, 71, schedule)
    assert preservation.total_variation <= 0.2
    assert search.surrogate.checksum() != trained_base.checksum()
