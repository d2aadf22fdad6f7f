import numpy as np
import pytest

from pensim.policy import (
    MaskedCategorical,
    PolicyArchitecture,
    evaluate_2sas,
    evaluate_flat,
    forward_2sas,
    init_params,
    load_checkpoint,
    param_keys,
    sample_flat,
    save_checkpoint,
)
from pensim.rng import stream
from pensim.validation import ValidationError

TOY = PolicyArchitecture(
    input_dim=12, layer_size=16, n_actions=24, n_hosts=4, per_host_actions=6,
    embed_dim=8, head="flat", dtype="float64",
)
TOY2 = PolicyArchitecture(
    input_dim=12, layer_size=16, n_actions=24, n_hosts=4, per_host_actions=6,
    embed_dim=8, head="2sas", dtype="float64",
)


class TestMaskedCategorical:
    def test_single_valid_entry_gets_probability_one(self):
        logits = np.array([[5.0, -2.0, 1.0]])
        mask = np.array([[0.0, 1.0, 0.0]])
        dist = MaskedCategorical(logits, mask)
        assert dist.p[0, 1] == 1.0
        assert dist.p[0, 0] == 0.0 and dist.p[0, 2] == 0.0

    def test_uniform_logits_give_uniform_valid_probs(self):
        logits = np.zeros((1, 6))
        mask = np.array([[1, 0, 1, 1, 0, 0]], dtype=float)
        dist = MaskedCategorical(logits, mask)
        np.testing.assert_allclose(dist.p[0, [0, 2, 3]], 1 / 3)

    def test_masked_probability_mass_is_zero(self):
        rng = stream(0, 0x51)
        logits = rng.standard_normal((64, 40)) * 5
        mask = (rng.random((64, 40)) < 0.5).astype(float)
        mask[:, 0] = 1.0
        dist = MaskedCategorical(logits, mask)
        assert float((dist.p * (1 - mask)).sum()) < 1e-20

    def test_mask_invariance(self):
        # changing masked logits leaves the distribution and entropy unchanged
        rng = stream(1, 0x52)
        logits = rng.standard_normal((8, 10))
        mask = (rng.random((8, 10)) < 0.6).astype(float)
        mask[:, 0] = 1.0
        d1 = MaskedCategorical(logits, mask)
        logits2 = logits + (1 - mask) * rng.standard_normal((8, 10)) * 100
        d2 = MaskedCategorical(logits2, mask)
        assert np.allclose(d1.p, d2.p, atol=1e-12)
        assert np.allclose(d1.entropy(), d2.entropy(), atol=1e-12)

    def test_all_false_mask_rejected(self):
        with pytest.raises(ValidationError):
            MaskedCategorical(np.zeros((1, 4)), np.zeros((1, 4)))

    def test_entropy_values(self):
        mask = np.array([[1.0, 1.0, 1.0, 1.0, 0.0]])
        dist = MaskedCategorical(np.zeros((1, 5)), mask)
        assert dist.entropy()[0] == pytest.approx(np.log(4))
        single = MaskedCategorical(np.zeros((1, 5)), np.eye(5)[[0]])
        assert single.entropy()[0] == pytest.approx(0.0)

    def test_log_prob_of_masked_action_rejected(self):
        dist = MaskedCategorical(np.zeros((1, 3)), np.array([[1.0, 0.0, 1.0]]))
        with pytest.raises(ValidationError):
            dist.log_prob(np.array([1]))


class TestForward:
    def test_sample_respects_mask_and_logprob_consistency(self):
        rng = stream(2, 0x53)
        params = init_params(TOY, rng)
        x = rng.standard_normal((32, TOY.input_dim))
        mask = (rng.random((32, TOY.n_actions)) < 0.4).astype(float)
        mask[:, 3] = 1.0
        sample = sample_flat(params, x, mask, rng)
        assert mask[np.arange(32), sample.action].all()
        logp, entropy, value, _, _ = evaluate_flat(params, x, mask, sample.action)
        np.testing.assert_array_equal(logp, sample.log_prob)
        np.testing.assert_array_equal(value, sample.value)
        assert (sample.log_prob <= 0).all()

    def test_2sas_single_choice_has_probability_one(self):
        rng = stream(3, 0x54)
        params = init_params(TOY2, rng)
        x = rng.standard_normal((5, TOY2.input_dim))
        host_mask = np.zeros((5, 4))
        host_mask[:, 2] = 1.0
        per_host = np.zeros((5, 4, 6))
        per_host[:, 2, 1] = 1.0
        sample = forward_2sas(params, x, host_mask, per_host, rng)
        assert (sample.host == 2).all() and (sample.action == 1).all()
        np.testing.assert_allclose(sample.host_log_prob, 0.0, atol=1e-12)
        np.testing.assert_allclose(sample.log_prob, 0.0, atol=1e-12)
        np.testing.assert_allclose(sample.host_entropy, 0.0, atol=1e-12)
        np.testing.assert_allclose(sample.entropy, 0.0, atol=1e-12)

    def test_2sas_joint_distribution_sums_to_one(self):
        rng = stream(4, 0x55)
        params = init_params(TOY2, rng)
        x = rng.standard_normal((1, TOY2.input_dim))
        host_mask = np.array([[1.0, 1.0, 0.0, 1.0]])
        per_host = (stream(5, 0x56).random((1, 4, 6)) < 0.6).astype(float)
        per_host[:, :, 0] = 1.0
        total = 0.0
        for h in range(4):
            if not host_mask[0, h]:
                continue
            hd, ad, _ = evaluate_2sas(
                params, x, host_mask, per_host[:, h], np.array([h]), np.array([0])
            )
            ph = np.exp(hd.log_prob(np.array([h])))[0]
            for a in range(6):
                if per_host[0, h, a]:
                    pa = ad.p[0, a]
                    total += ph * pa
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_2sas_support_sizes(self):
        # head widths versus the flat action count for the 40-host shape
        arch = PolicyArchitecture(input_dim=8, layer_size=8, n_actions=640, n_hosts=40,
                                  per_host_actions=16, embed_dim=4, head="2sas")
        assert arch.n_hosts == 40 and arch.per_host_actions == 16
        assert arch.n_hosts * arch.per_host_actions == arch.n_actions
        assert max(arch.n_hosts, arch.per_host_actions) < arch.n_actions

    def test_evaluate_of_fresh_sample_matches(self):
        rng = stream(6, 0x57)
        params = init_params(TOY2, rng)
        x = rng.standard_normal((16, TOY2.input_dim))
        host_mask = np.ones((16, 4))
        per_host = np.ones((16, 4, 6))
        sample = forward_2sas(params, x, host_mask, per_host, rng)
        hd, ad, cache = evaluate_2sas(
            params, x, host_mask, per_host[np.arange(16), sample.host], sample.host, sample.action
        )
        np.testing.assert_array_equal(hd.log_prob(sample.host), sample.host_log_prob)
        np.testing.assert_array_equal(ad.log_prob(sample.action), sample.log_prob)
        np.testing.assert_array_equal(cache["value"], sample.value)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = stream(7, 0x58)
        params = init_params(TOY2, rng)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, TOY2, params, rng.bit_generator.state, 12345)
        arch2, params2, rng_state, steps = load_checkpoint(path)
        assert arch2 == TOY2
        assert steps == 12345
        restored = stream(0, 0)
        restored.bit_generator.state = rng_state
        assert np.array_equal(restored.random(8), rng.random(8))
        for k in param_keys(TOY2):
            np.testing.assert_array_equal(params2[k], params[k])

    def test_version_check(self, tmp_path):
        rng = stream(8, 0x59)
        params = init_params(TOY, rng)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, TOY, params, rng.bit_generator.state, 1)
        data = dict(np.load(path, allow_pickle=False))
        data["version"] = np.int64(99)
        np.savez(path, **data)
        with pytest.raises(ValidationError):
            load_checkpoint(path)
