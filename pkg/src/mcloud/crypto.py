"""Simulation-grade crypto primitives behind a pluggable suite.

None of this is secure against a real adversary and none of it needs to be:
digests, signatures, and the TU's asymmetric layer exist so the protocols
can be exercised and their accounting verified.  Every primitive is
deterministic, which keeps whole simulation runs bit-reproducible.  Real
implementations can be slotted in through :class:`CryptoSuite`.
"""

from dataclasses import dataclass
from typing import Callable

DIGEST_SIZE = 32

# FNV-1a at 256 bits (parameters from the published FNV reference).
_FNV_PRIME = 2**168 + 2**8 + 0x63
_FNV_OFFSET = 0xDD268DBCAAC550362D98C384C4E576CCC8B1536847B6BBB31023B4C8CAEE0535
_MASK = 2**256 - 1


def fnv256(data: bytes) -> bytes:
    """256-bit FNV-1a digest. Non-cryptographic; adequate for simulation."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h.to_bytes(DIGEST_SIZE, "big")


def _keystream(key: bytes, length: int) -> bytes:
    # digest-in-counter-mode byte stream
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += fnv256(key + counter.to_bytes(8, "big"))
        counter += 1
    return bytes(out[:length])


def stream_xor(key: bytes, data: bytes) -> bytes:
    """Keyed byte-stream XOR; applying it twice with the same key is identity."""
    ks = _keystream(key, len(data))
    return bytes(a ^ b for a, b in zip(data, ks))


def _identity_secret(identity: int) -> bytes:
    # Signing oracle held by the simulator: everyone's "private" key is
    # derivable, so verify() can recompute what sign() produced.
    return fnv256(b"identity-signing-key:" + identity.to_bytes(8, "big"))


def sign(identity: int, data: bytes) -> bytes:
    return fnv256(_identity_secret(identity) + data)


def verify(identity: int, data: bytes, attestation: bytes) -> bool:
    return sign(identity, data) == attestation


# The TU's key pair collapses to one secret in simulation: encrypt-for-TU is
# a keyed stream under a secret only the TU role is allowed to use.
_TU_SECRET = fnv256(b"trusted-unit-private-key")


def asym_encrypt_for_tu(plaintext: bytes) -> bytes:
    return stream_xor(_TU_SECRET, plaintext)


def asym_decrypt_by_tu(ciphertext: bytes) -> bytes:
    return stream_xor(_TU_SECRET, ciphertext)


@dataclass(frozen=True)
class CryptoSuite:
    """Pluggable hooks for every primitive the protocols touch."""

    digest: Callable[[bytes], bytes] = fnv256
    sym_encrypt: Callable[[bytes, bytes], bytes] = stream_xor
    sym_decrypt: Callable[[bytes, bytes], bytes] = stream_xor
    asym_encrypt_for_tu: Callable[[bytes], bytes] = asym_encrypt_for_tu
    asym_decrypt_by_tu: Callable[[bytes], bytes] = asym_decrypt_by_tu
    sign: Callable[[int, bytes], bytes] = sign
    verify: Callable[[int, bytes, bytes], bool] = verify


DEFAULT_SUITE = CryptoSuite()
