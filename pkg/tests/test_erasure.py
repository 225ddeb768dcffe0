"""
Tests for the erasure methods
=============================

ESD, CA and FMN fine-tuning analogues and the closed-form UCE edit: which
parameters each one touches, the zero-budget case, determinism and the
least-squares identities of the UCE normal equations.
"""

import numpy as np
import pytest

from utils.autodiff.rng import RandomStream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.prompts import concept_prompt, neutral_prompt
from utils.conditioning.world import NEUTRAL_TOKEN, concept_token
from utils.metrics.restoration import restoration_accuracy
from erasure_implementations import (
    DEFAULT_BUDGETS,
    ErasureSpec,
    SingularSystemError,
    UnlearnedModel,
    attention_suppression_loss,
    edit_uce,
    erase,
    mean_slot_attention,
    minimum_change_edit,
    negative_guidance_target,
    normal_equations,
    resolve_anchor,
    solve_projection,
    token_encoding,
)


def _changed(before, after):
    """Names of parameters whose values differ."""
    old, new = before.state_dict(), after.state_dict()
    return {name for name in old if not np.array_equal(old[name], new[name])}


# =============================================================================
# ErasureSpec Tests
# =============================================================================

class TestErasureSpec:
    """Validation and defaults."""

    def test_default_budgets_fill_in(self):
        spec = ErasureSpec("esd", 2)
        assert (spec.steps, spec.learning_rate) == DEFAULT_BUDGETS["esd"]
        assert spec.label == "esd-c2"

    def test_dict_round_trip(self):
        spec = ErasureSpec("uce", 1, preserve_tokens=("c2", NEUTRAL_TOKEN), ridge=1e-3)
        assert ErasureSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("kwargs", [
        {"method": "sld", "target": 0},
        {"method": "ca", "target": 1, "anchor": 1},
        {"method": "esd", "target": 0, "steps": -1},
        {"method": "uce", "target": 0, "ridge": -1.0},
    ])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ValueError):
            ErasureSpec(**kwargs)

    def test_anchor_defaults_to_world_map(self, world):
        assert resolve_anchor(ErasureSpec("ca", 0), world) == world.anchor_map[0]
        assert resolve_anchor(ErasureSpec("ca", 0, anchor=3), world) == 3


# =============================================================================
# Fine-Tuning Method Tests
# =============================================================================

class TestFinetuneMethods:
    """Shared contract of the gradient-based erasures."""

    @pytest.mark.parametrize("method", ["esd", "ca", "fmn"])
    def test_zero_steps_returns_base_copy(self, world, short_schedule, base_model, method):
        unlearned = erase(base_model, ErasureSpec(method, 0, steps=0), world, short_schedule, seed=0)
        assert unlearned.model.checksum() == base_model.checksum()
        assert unlearned.model is not base_model
        assert unlearned.losses == []

    @pytest.mark.parametrize("method", ["esd", "ca", "fmn"])
    def test_base_is_not_mutated(self, world, short_schedule, base_model, method):
        before = base_model.checksum()
        unlearned = erase(base_model, ErasureSpec(method, 0, steps=3), world, short_schedule, seed=0)
        assert base_model.checksum() == before
        assert unlearned.base_checksum == before
        assert len(unlearned.losses) == 3

    @pytest.mark.parametrize("method", ["esd", "ca", "fmn"])
    def test_same_seed_same_result(self, world, short_schedule, base_model, method):
        spec = ErasureSpec(method, 1, steps=4)
        a = erase(base_model, spec, world, short_schedule, seed=5)
        b = erase(base_model, spec, world, short_schedule, seed=5)
        assert a.model.checksum() == b.model.checksum()

    @pytest.mark.parametrize("method, expected", [
        ("ca", {"attention.W_key", "attention.W_value"}),
        ("fmn", {"attention.W_query", "attention.W_key"}),
    ])
    def test_tuned_parameter_subsets(self, world, short_schedule, base_model, method, expected):
        unlearned = erase(base_model, ErasureSpec(method, 0, steps=3), world, short_schedule, seed=0)
        assert _changed(base_model, unlearned.model) == expected

    def test_esd_scope(self, world, short_schedule, base_model):
        attention_only = erase(base_model, ErasureSpec("esd", 0, steps=3), world, short_schedule, seed=0)
        assert all(name.startswith("attention.") for name in _changed(base_model, attention_only.model))
        with_trunk = erase(base_model, ErasureSpec("esd", 0, steps=3, full_trunk=True), world, short_schedule, seed=0)
        assert any(name.startswith("trunk.") for name in _changed(base_model, with_trunk.model))
        assert not any(name.startswith("encoder.") for name in _changed(base_model, with_trunk.model))

    def test_zero_guidance_target_is_neutral_prediction(self, base_model, short_schedule):
        zt = Tensor(RandomStream(1).normal((4, 2)))
        t = np.array([1, 5, 10, 20])
        target = negative_guidance_target(base_model, zt, t, 0, 0.0)
        with no_grad():
            neutral, _ = denoiser_forward(base_model, zt, neutral_prompt(), t)
        assert np.array_equal(target.data, neutral.data)
        assert not target.requires_grad

    def test_fmn_reduces_target_attention(self, world, short_schedule, base_model):
        spec = ErasureSpec("fmn", 0, steps=40, learning_rate=1e-2)
        unlearned = erase(base_model, spec, world, short_schedule, seed=0)
        prompt = concept_prompt(0)
        before = mean_slot_attention(base_model, prompt, world, 0, short_schedule, RandomStream(2))
        after = mean_slot_attention(unlearned.model, prompt, world, 0, short_schedule, RandomStream(2))
        assert after < before
        assert unlearned.losses[-1] < unlearned.losses[0]

    def test_attention_suppression_loss_value(self):
        attention = Tensor([[0.2, 0.8], [0.5, 0.5]])
        assert attention_suppression_loss(attention).item() == pytest.approx(0.89)


# =============================================================================
# UCE Tests
# =============================================================================

class TestUCE:
    """Closed-form key/value edit."""

    def test_preservation_only_edit_keeps_weights(self, world, base_model):
        unlearned = edit_uce(base_model, ErasureSpec("uce", 0, edit_target=False), world)
        for name in ("attention.W_key", "attention.W_value"):
            assert np.allclose(unlearned.model[name].data, base_model[name].data, atol=1e-8)

    def test_target_maps_to_neutral_and_preserved_tokens_hold(self, world, base_model):
        unlearned = edit_uce(base_model, ErasureSpec("uce", 0), world)
        c_target = token_encoding(base_model, concept_token(0))
        c_neutral = token_encoding(base_model, NEUTRAL_TOKEN)
        c_other = token_encoding(base_model, concept_token(3))
        for name in ("attention.W_key", "attention.W_value"):
            w_old, w_new = base_model[name].data, unlearned.model[name].data
            before = np.linalg.norm(w_old @ c_target - w_old @ c_neutral)
            after = np.linalg.norm(w_new @ c_target - w_old @ c_neutral)
            assert after < 0.01 * before
            assert np.allclose(w_new @ c_other, w_old @ c_other, atol=1e-3)

    def test_only_key_and_value_change(self, world, base_model):
        unlearned = erase(base_model, ErasureSpec("uce", 0), world, None, seed=123)
        assert _changed(base_model, unlearned.model) <= {"attention.W_key", "attention.W_value"}
        assert isinstance(unlearned, UnlearnedModel)
        assert unlearned.seed == 0

    def test_normal_equation_residual(self, base_model):
        stream = RandomStream(3)
        w_old = base_model["attention.W_key"].data
        edits = [(stream.normal(16), stream.normal(w_old.shape[0]))]
        preserved = [stream.normal(16) for _ in range(4)]
        lhs, rhs = normal_equations(w_old, edits, preserved, ridge=1e-3)
        w_new = solve_projection(lhs, rhs)
        # lhs is symmetric: W lhs = rhs  <=>  lhs W^T = rhs^T
        w_dense = np.linalg.lstsq(lhs, rhs.T, rcond=None)[0].T
        assert np.linalg.norm(w_new @ lhs - rhs) < 1e-8
        assert np.allclose(w_new, w_dense, rtol=0.0, atol=1e-8)

    def test_empty_preservation_maps_target_exactly(self, world, base_model):
        unlearned = edit_uce(base_model, ErasureSpec("uce", 0, preserve_tokens=()), world)
        c_target = token_encoding(base_model, concept_token(0))
        c_neutral = token_encoding(base_model, NEUTRAL_TOKEN)
        orthogonal = RandomStream(4).normal(16)
        orthogonal -= (orthogonal @ c_target) / (c_target @ c_target) * c_target
        for name in ("attention.W_key", "attention.W_value"):
            w_old, w_new = base_model[name].data, unlearned.model[name].data
            assert np.allclose(w_new @ c_target, w_old @ c_neutral, rtol=0.0, atol=1e-8)
            assert np.allclose(w_new @ orthogonal, w_old @ orthogonal, rtol=0.0, atol=1e-8)

    def test_minimum_change_edit_without_edits_is_identity(self, base_model):
        w_old = base_model["attention.W_value"].data
        kept = minimum_change_edit(w_old, [])
        assert np.array_equal(kept, w_old)
        assert kept is not w_old

    def test_preservation_drift_is_small(self, world, base_model):
        unlearned = edit_uce(base_model, ErasureSpec("uce", 0), world)
        tokens = [concept_token(k) for k in range(world.n_concepts) if k != 0] + [NEUTRAL_TOKEN]
        for name in ("attention.W_key", "attention.W_value"):
            w_old, w_new = base_model[name].data, unlearned.model[name].data
            drift = [
                np.linalg.norm(w_new @ c - w_old @ c) / np.linalg.norm(w_old @ c)
                for c in (token_encoding(base_model, token) for token in tokens)
            ]
            assert max(drift) < 0.05

    def test_empty_system_with_unit_ridge(self, base_model):
        w_old = base_model["attention.W_value"].data
        lhs, rhs = normal_equations(w_old, [], [], ridge=1.0)
        assert np.array_equal(lhs, np.eye(16))
        assert np.allclose(solve_projection(lhs, rhs), w_old)

    def test_singular_system_asks_for_ridge(self, world, base_model):
        spec = ErasureSpec("uce", 0, preserve_tokens=(concept_token(1),), ridge=0.0)
        with pytest.raises(SingularSystemError, match="ridge"):
            edit_uce(base_model, spec, world)


# =============================================================================
# Pilot-Scale Effectiveness
# =============================================================================

@pytest.mark.slow
@pytest.mark.parametrize("method", ["esd", "ca", "fmn", "uce"])
def test_erased_literal_prompt_rarely_shows_target(unlearned_set, classifier, schedule, method):
    model = unlearned_set[f"{method}-c0"].model
    accuracy = restoration_accuracy(model, "c0", classifier, 0, 500, seed=40, schedule=schedule)
    assert accuracy <= 0.2


@pytest.mark.slow
def test_base_literal_prompt_shows_unerased_concept(trained_base, classifier, schedule):
    for k in (1, 3):
        assert restoration_accuracy(trained_base, concept_token(k), classifier, k, 500, seed=41, schedule=schedule) >= 0.9


@pytest.mark.slow
@pytest.mark.parametrize("method", ["esd", "ca", "fmn", "uce"])
def test_erasure_keeps_other_concepts(world, unlearned_set, classifier, schedule, method):
    model = unlearned_set[f"{method}-c0"].model
    accuracies = [
        restoration_accuracy(model, concept_token(k), classifier, k, 500, seed=42 + k, schedule=schedule)
        for k in range(1, world.n_concepts)
    ]
    assert np.mean(accuracies) >= 0.8


@pytest.mark.slow
def test_ca_remaps_target_onto_anchor(world, unlearned_set, classifier, schedule):
    unlearned = unlearned_set["ca-c0"]
    anchor = resolve_anchor(unlearned.spec, world)
    rate = restoration_accuracy(unlearned.model, "c0", classifier, anchor, 500, seed=48, schedule=schedule)
    assert rate >= 0.5


@pytest.mark.slow
def test_fmn_default_budget_silences_target_slot(world, trained_base, unlearned_set, schedule):
    prompt = concept_prompt(0)
    before = mean_slot_attention(trained_base, prompt, world, 0, schedule, RandomStream(49))
    after = mean_slot_attention(unlearned_set["fmn-c0"].model, prompt, world, 0, schedule, RandomStream(49))
    assert after < 0.1
    assert after < before
