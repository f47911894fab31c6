"""One-shot Diffie-Hellman key agreement and cancelling mask schedules.

Clients agree on pairwise common keys once, offline.  For every later
iteration each pair derives an identical mask tensor from its key via a
keyed counter construction (hash of key || iteration || element index), so
no further client-client communication is ever needed.  One endpoint adds
the mask, the other subtracts it, and the pair's contribution vanishes
from any aggregate.  Mask addition happens over exact rationals, which is
what makes the cancellation bit-exact rather than approximate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .exact import to_exact

# 2048-bit MODP group 14 from RFC 3526 (safe prime, generator 2), fixed for
# every simulation so no parameter negotiation is needed.
GROUP_PRIME = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
GROUP_GENERATOR = 2
GROUP_ORDER = (GROUP_PRIME - 1) // 2  # prime order of the quadratic-residue subgroup

#: Half-width of the uniform mask range [-MASK_BOUND, MASK_BOUND].
MASK_BOUND = 1e6

_GROUP_BYTES = (GROUP_PRIME.bit_length() + 7) // 8


@dataclass(frozen=True)
class DhKeyPair:
    """A Diffie-Hellman secret and its public value g^secret mod p."""

    secret: int
    public: int


@dataclass(frozen=True)
class CommonKey:
    """256-bit key material shared by an unordered pair of agents."""

    pair: tuple[str, str]
    key_material: bytes

    def __post_init__(self) -> None:
        if len(self.key_material) != 32:
            raise ValueError("key material must be exactly 32 bytes")


@dataclass
class MaskSchedule:
    """An agent's pairwise common keys, fixed after the offline phase."""

    owner: str
    keys: dict[str, CommonKey]

    def key_for(self, peer: str) -> CommonKey:
        try:
            return self.keys[peer]
        except KeyError:
            raise KeyError(
                f"agent {self.owner!r} holds no common key for peer {peer!r}"
            ) from None


def dh_generate(rng: np.random.Generator) -> DhKeyPair:
    """Generate a key pair with the secret uniform over [2, q-1]."""
    while True:
        candidate = int.from_bytes(rng.bytes(_GROUP_BYTES), "big")
        if 2 <= candidate <= GROUP_ORDER - 1:
            secret = candidate
            break
    return DhKeyPair(secret=secret, public=pow(GROUP_GENERATOR, secret, GROUP_PRIME))


def dh_common_key(
    own: DhKeyPair, other_public: int, pair: tuple[str, str] = ("", "")
) -> CommonKey:
    """Derive the shared 256-bit key from our secret and a peer's public value.

    Symmetric by construction: both endpoints hash the same g^(a*b) mod p.
    """
    if not 1 < other_public < GROUP_PRIME - 1:
        raise ValueError("peer public value outside the valid group range")
    shared = pow(other_public, own.secret, GROUP_PRIME)
    material = hashlib.sha256(shared.to_bytes(_GROUP_BYTES, "big")).digest()
    return CommonKey(pair=tuple(sorted(pair)), key_material=material)


def mask_tensor(key: CommonKey, iteration: int, shape: tuple[int, ...]) -> np.ndarray:
    """Deterministic mask tensor for one pair and one iteration.

    Element ``e`` is derived from SHA-256(key || iteration || e) and mapped
    to a uniform value in [-MASK_BOUND, MASK_BOUND].  Both endpoints of the
    pair compute bit-identical tensors; distinct iterations give fresh,
    statistically independent tensors.
    """
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    count = int(np.prod(shape)) if shape else 1
    prefix = key.key_material + int(iteration).to_bytes(8, "big")
    out = np.empty(count, dtype=np.float64)
    for e in range(count):
        digest = hashlib.sha256(prefix + e.to_bytes(8, "big")).digest()
        u = int.from_bytes(digest[:8], "big") / 2.0**64
        out[e] = (2.0 * u - 1.0) * MASK_BOUND
    return out.reshape(shape)


def apply_masks(
    w: np.ndarray,
    schedule: MaskSchedule,
    active: list[str],
    iteration: int,
) -> np.ndarray:
    """Add the owner's signed pairwise masks for the current active set.

    The sign convention is +1 toward peers that sort after the owner and
    -1 toward peers that sort before it, so each mask appears exactly once
    with each sign across the active set and cancels from the sum.  Only
    current pairs contribute; departed clients leave no residue.  Returns
    an exact-rational matrix.
    """
    w = np.asarray(w)
    if schedule.owner not in active:
        raise ValueError(f"schedule owner {schedule.owner!r} not in the active set")
    masked = to_exact(w)
    for peer in active:
        if peer == schedule.owner:
            continue
        key = schedule.key_for(peer)
        mask = to_exact(mask_tensor(key, iteration, w.shape))
        if schedule.owner < peer:
            masked = masked + mask
        else:
            masked = masked - mask
    return masked
