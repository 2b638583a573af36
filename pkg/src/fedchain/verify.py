"""Model-accuracy verification with a KeyGen/Commit/Prove/Verify interface.

This is a transparent hash-commitment scheme: commitments are binding under
SHA-256 collision resistance, and a proof opens the committed model so the
verifier can re-run the predictions. It is NOT zero-knowledge — settlement
reveals the model to the verifier committee. The four-operation surface is
kept so a real zero-knowledge backend can be swapped in behind it.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import fixedpoint
from .data import Dataset
from .errors import (
    EmptyChallengeError,
    InsufficientSamplesError,
    UnsupportedSecurityError,
)
from .fed import Architecture, DenseClassifier

SUPPORTED_SECURITY_BITS = (128, 256)
DOMAIN_TAG = b"fedchain/model-commitment/v1"
MAGIC = b"FCM1"
MIN_CLAIM_SAMPLES = 200
ONE_SIDED_99_Z = 2.326


@dataclass(frozen=True)
class PublicParams:
    security_bits: int
    domain_tag: bytes
    verifier_nonce: bytes


@dataclass(frozen=True)
class ModelCommitment:
    digest: bytes

    @property
    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class VerificationSample:
    x: np.ndarray
    labels: np.ndarray  # held by the verifier, never sent to the prover

    @property
    def count(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class PredictionProof:
    y: np.ndarray
    digest_chain: bytes  # binds (commitment, challenge batch, predictions)
    blinding: bytes  # opened at settlement
    model_opening: bytes  # canonical serialization of the committed model


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    measured_accuracy: float
    reason: str = ""


def keygen(security_bits: int, seed: int = 0) -> PublicParams:
    """Generate public parameters with a seeded verifier nonce."""
    if security_bits not in SUPPORTED_SECURITY_BITS:
        raise UnsupportedSecurityError(f"unsupported security level: {security_bits}")
    rng = np.random.default_rng(seed)
    nonce = rng.bytes(32)
    if not any(nonce):
        nonce = hashlib.sha256(nonce).digest()
    return PublicParams(security_bits=security_bits, domain_tag=DOMAIN_TAG, verifier_nonce=nonce)


def make_blinding(seed: int) -> bytes:
    return np.random.default_rng(seed).bytes(32)


def serialize_model(model: DenseClassifier) -> bytes:
    """Canonical bytes: magic, architecture header, length-prefixed little-endian
    fixed-point weight words. Bit-exact across platforms."""
    arch = model.arch
    header = MAGIC + struct.pack("<IIB", arch.n_features, arch.n_classes, len(arch.hidden))
    for dim in arch.hidden:
        header += struct.pack("<I", dim)
    words = fixedpoint.encode(model.weights)
    body = struct.pack("<Q", words.shape[0]) + words.astype("<i8").tobytes()
    return header + body


def deserialize_model(blob: bytes) -> DenseClassifier:
    if blob[:4] != MAGIC:
        raise ValueError("bad model serialization magic")
    n_features, n_classes, n_hidden = struct.unpack_from("<IIB", blob, 4)
    offset = 4 + 9
    hidden = []
    for _ in range(n_hidden):
        (dim,) = struct.unpack_from("<I", blob, offset)
        hidden.append(dim)
        offset += 4
    (count,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    words = np.frombuffer(blob, dtype="<i8", count=count, offset=offset)
    arch = Architecture(n_features=n_features, n_classes=n_classes, hidden=tuple(hidden))
    return DenseClassifier(arch, weights=fixedpoint.decode(words))


def _digest(pp: PublicParams, payload: bytes) -> bytes:
    full = hashlib.sha256(pp.domain_tag + pp.verifier_nonce + payload).digest()
    return full[: pp.security_bits // 8]


def commit(model: DenseClassifier, pp: PublicParams, blinding: bytes) -> ModelCommitment:
    """Binding digest over the blinded canonical model serialization."""
    return ModelCommitment(digest=_digest(pp, blinding + serialize_model(model)))


def _sample_digest(x_row: np.ndarray) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(x_row, dtype="<f8").tobytes()).digest()


def _chain(com: ModelCommitment, x: np.ndarray, y: np.ndarray) -> bytes:
    link = hashlib.sha256(DOMAIN_TAG + com.digest).digest()
    for row, label in zip(x, y):
        link = hashlib.sha256(link + _sample_digest(row) + struct.pack("<q", int(label))).digest()
    return link


def prove(
    model: DenseClassifier, challenge_x: np.ndarray, pp: PublicParams, blinding: bytes
) -> PredictionProof:
    """Predict the challenge batch and bind the predictions to the commitment."""
    if challenge_x.shape[0] == 0:
        raise EmptyChallengeError("challenge batch is empty")
    y = model.predict(challenge_x)
    com = commit(model, pp, blinding)
    return PredictionProof(
        y=y,
        digest_chain=_chain(com, challenge_x, y),
        blinding=blinding,
        model_opening=serialize_model(model),
    )


def verify(
    com: ModelCommitment,
    sample: VerificationSample,
    y: np.ndarray,
    proof: PredictionProof,
    pp: PublicParams,
) -> VerificationResult:
    """Check the proof against the commitment and measure the claimed predictions.

    Accepts iff the opened model reproduces the commitment, its predictions on
    the challenge equal `y`, and the digest chain matches. The measured
    accuracy is the fraction of `y` agreeing with the verifier's held labels.
    """
    reopened = _digest(pp, proof.blinding + proof.model_opening)
    if reopened != com.digest:
        return VerificationResult(False, 0.0, "commitment mismatch")
    model = deserialize_model(proof.model_opening)
    predicted = model.predict(sample.x)
    if predicted.shape != np.asarray(y).shape or not np.array_equal(predicted, y):
        return VerificationResult(False, 0.0, "predictions do not match claimed labels")
    if _chain(com, sample.x, y) != proof.digest_chain:
        return VerificationResult(False, 0.0, "digest chain mismatch")
    accuracy = float(np.mean(np.asarray(y) == sample.labels))
    return VerificationResult(True, accuracy)


def derive_challenge(held_out: Dataset, com: ModelCommitment, k: int) -> VerificationSample:
    """Draw K held-out samples seeded by the commitment digest.

    Sampling after (and from) the commitment makes the challenge unforgeable:
    the prover cannot have fit to it before committing.
    """
    seed = int.from_bytes(hashlib.sha256(b"challenge" + com.digest).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    k = min(k, len(held_out))
    indices = rng.choice(len(held_out), size=k, replace=False)
    return VerificationSample(x=held_out.x[indices], labels=held_out.y[indices])


def margin(claimed: float, k: int) -> float:
    """One-sided 99% binomial bound on the accuracy shortfall at K samples."""
    return ONE_SIDED_99_Z * float(np.sqrt(claimed * (1.0 - claimed) / k))


def accuracy_claim_check(
    measured: float, claimed: float, k: int, k_min: int = MIN_CLAIM_SAMPLES
) -> bool:
    """Accept a miner's accuracy claim if the measurement is within the
    binomial margin below it."""
    if k < k_min:
        raise InsufficientSamplesError(f"{k} samples < required minimum {k_min}")
    return measured >= claimed - margin(claimed, k)
