import math

import numpy as np
import pytest

from fedchain import data, fed, verify
from fedchain.errors import (
    EmptyChallengeError,
    InsufficientSamplesError,
    UnsupportedSecurityError,
)


@pytest.fixture
def setup():
    arch = fed.Architecture(n_features=6, n_classes=4)
    model = fed.DenseClassifier(arch, seed=1)
    held_out = data.make_blobs(500, n_features=6, n_classes=4, seed=2)
    pp = verify.keygen(128, seed=3)
    blinding = verify.make_blinding(4)
    return model, held_out, pp, blinding


class TestKeygen:
    def test_deterministic(self):
        assert verify.keygen(128, seed=9) == verify.keygen(128, seed=9)

    def test_unsupported_level(self):
        with pytest.raises(UnsupportedSecurityError):
            verify.keygen(64, seed=0)

    def test_nonce_nonzero(self):
        pp = verify.keygen(256, seed=5)
        assert any(pp.verifier_nonce)
        assert len(pp.verifier_nonce) == 32


class TestCommit:
    def test_blinding_changes_commitment(self, setup):
        model, _, pp, blinding = setup
        other = verify.make_blinding(99)
        assert verify.commit(model, pp, blinding) != verify.commit(model, pp, other)

    def test_recommit_reproduces(self, setup):
        model, _, pp, blinding = setup
        assert verify.commit(model, pp, blinding) == verify.commit(model, pp, blinding)

    def test_lowest_bit_flip_changes_commitment(self, setup):
        model, _, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        bumped = model.weights.copy()
        bumped[0] += 2.0 ** -verify.fixedpoint.SCALE_BITS  # one fixed-point ulp
        assert verify.commit(model.clone(bumped), pp, blinding) != com

    def test_security_level_sets_digest_length(self, setup):
        model, _, _, blinding = setup
        com128 = verify.commit(model, verify.keygen(128, seed=1), blinding)
        com256 = verify.commit(model, verify.keygen(256, seed=1), blinding)
        assert len(com128.digest) == 16
        assert len(com256.digest) == 32


class TestSerialization:
    def test_roundtrip(self, setup):
        model, _, _, _ = setup
        blob = verify.serialize_model(model)
        back = verify.deserialize_model(blob)
        assert back.arch == model.arch
        # fixed-point quantization is the only loss
        assert np.max(np.abs(back.weights - model.weights)) <= 2.0 ** -verify.fixedpoint.SCALE_BITS

    def test_deterministic_bytes(self, setup):
        model, _, _, _ = setup
        assert verify.serialize_model(model) == verify.serialize_model(model)
        assert verify.serialize_model(model)[:4] == b"FCM1"

    def test_mlp_header(self):
        arch = fed.Architecture(n_features=3, n_classes=2, hidden=(5,))
        model = fed.DenseClassifier(arch, seed=0)
        back = verify.deserialize_model(verify.serialize_model(model))
        assert back.arch.hidden == (5,)


class TestProveVerify:
    def test_empty_challenge_rejected(self, setup):
        model, _, pp, blinding = setup
        with pytest.raises(EmptyChallengeError):
            verify.prove(model, np.empty((0, 6)), pp, blinding)

    def test_honest_roundtrip_accepts(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        sample = verify.derive_challenge(held_out, com, 250)
        proof = verify.prove(model, sample.x, pp, blinding)
        result = verify.verify(com, sample, proof.y, proof, pp)
        assert result.accepted

    def test_measured_accuracy_equals_evaluate(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        sample = verify.derive_challenge(held_out, com, 300)
        proof = verify.prove(model, sample.x, pp, blinding)
        result = verify.verify(com, sample, proof.y, proof, pp)
        subset = data.Dataset(sample.x, sample.labels, held_out.n_classes)
        assert result.measured_accuracy == fed.evaluate(model, subset)

    def test_different_batch_rejected(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        sample = verify.derive_challenge(held_out, com, 200)
        proof = verify.prove(model, sample.x, pp, blinding)
        other = verify.VerificationSample(
            x=held_out.x[:200], labels=held_out.y[:200]
        )
        result = verify.verify(com, other, proof.y, proof, pp)
        assert not result.accepted

    def test_tampered_prediction_rejected(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        sample = verify.derive_challenge(held_out, com, 200)
        proof = verify.prove(model, sample.x, pp, blinding)
        tampered = proof.y.copy()
        tampered[0] = (tampered[0] + 1) % 4
        result = verify.verify(com, sample, tampered, proof, pp)
        assert not result.accepted

    def test_cross_model_replay_rejected(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        other_model = fed.DenseClassifier(model.arch, seed=77)
        other_blinding = verify.make_blinding(78)
        sample = verify.derive_challenge(held_out, com, 200)
        foreign = verify.prove(other_model, sample.x, pp, other_blinding)
        result = verify.verify(com, sample, foreign.y, foreign, pp)
        assert not result.accepted
        assert result.reason == "commitment mismatch"

    def test_mutated_model_never_verifies(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        sample = verify.derive_challenge(held_out, com, 200)
        rng = np.random.default_rng(6)
        for _ in range(200):
            mutated = model.weights.copy()
            idx = int(rng.integers(0, len(mutated)))
            mutated[idx] += 2.0 ** -verify.fixedpoint.SCALE_BITS * int(rng.integers(1, 100))
            bad = verify.prove(model.clone(mutated), sample.x, pp, blinding)
            assert not verify.verify(com, sample, bad.y, bad, pp).accepted


class TestChallengeDerivation:
    def test_deterministic_per_commitment(self, setup):
        model, held_out, pp, blinding = setup
        com = verify.commit(model, pp, blinding)
        a = verify.derive_challenge(held_out, com, 100)
        b = verify.derive_challenge(held_out, com, 100)
        assert np.array_equal(a.x, b.x)

    def test_commitment_changes_challenge(self, setup):
        model, held_out, pp, blinding = setup
        com_a = verify.commit(model, pp, blinding)
        com_b = verify.commit(model, pp, verify.make_blinding(50))
        a = verify.derive_challenge(held_out, com_a, 100)
        b = verify.derive_challenge(held_out, com_b, 100)
        assert not np.array_equal(a.x, b.x)


class TestAccuracyClaim:
    def test_exact_claim_accepted(self):
        assert verify.accuracy_claim_check(0.90, 0.90, 1000)

    def test_far_shortfall_rejected(self):
        assert not verify.accuracy_claim_check(0.60, 0.90, 1000)

    def test_margin_value(self):
        expected = 2.326 * math.sqrt(0.9 * 0.1 / 1000)
        assert verify.margin(0.90, 1000) == pytest.approx(expected, rel=1e-12)
        assert verify.margin(0.90, 1000) == pytest.approx(0.0221, abs=5e-4)
        # acceptance threshold just below claimed - margin
        assert verify.accuracy_claim_check(0.878, 0.90, 1000)
        assert not verify.accuracy_claim_check(0.877, 0.90, 1000)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientSamplesError):
            verify.accuracy_claim_check(0.9, 0.9, 100)
