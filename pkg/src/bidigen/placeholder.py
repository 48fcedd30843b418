"""Training-time placeholder replacement policies.

A policy decides which gold output tokens are hidden behind the placeholder
token before the pair is fed to the encoder.

* ``BERNOULLI``: every position is replaced independently with probability
  ``mu``; the count is Binomial(|y|, mu).
* ``GAUSSIAN``: draw ``P ~ N(mu, sigma^2)``, replace
  ``round_half_even(|y| * P)`` positions (clamped to ``[0, |y|]``) chosen
  uniformly without replacement.
* ``ALL``: replace everything, as at inference.

``sigma`` is a standard deviation.  With ``mu=0.5, sigma=0.6`` the fraction
has variance 0.36, not 0.6.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .tokenizer import PLACEHOLDER


class PolicyKind(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"
    ALL = "all"


@dataclass(frozen=True)
class PlaceholderPolicy:
    kind: PolicyKind = PolicyKind.GAUSSIAN
    mu: float = 0.5
    sigma: float = 0.6
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.BERNOULLI and not 0.0 <= self.mu <= 1.0:
            raise ValueError("Bernoulli mean must lie in [0, 1]")
        if self.kind is PolicyKind.GAUSSIAN and self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def sample_count(policy: PlaceholderPolicy, target_len: int, rng: np.random.Generator) -> Optional[int]:
    """Number of placeholders for the Gaussian policy (None for other kinds)."""
    if policy.kind is not PolicyKind.GAUSSIAN:
        return None
    frac = rng.normal(policy.mu, policy.sigma) if policy.sigma > 0 else policy.mu
    # np.rint rounds half to even
    return int(np.clip(np.rint(target_len * frac), 0, target_len))


def sample_mask(policy: PlaceholderPolicy, target_len: int,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Boolean mask of length ``target_len``; True marks a placeholder."""
    if target_len < 1:
        raise DataError("target length must be at least 1")
    if rng is None:
        rng = policy.generator()
    if policy.kind is PolicyKind.ALL:
        return np.ones(target_len, dtype=bool)
    if policy.kind is PolicyKind.BERNOULLI:
        return rng.random(target_len) < policy.mu
    count = sample_count(policy, target_len, rng)
    mask = np.zeros(target_len, dtype=bool)
    mask[rng.permutation(target_len)[:count]] = True
    return mask


def apply_mask(target_ids, mask) -> np.ndarray:
    target_ids = np.asarray(target_ids)
    mask = np.asarray(mask, dtype=bool)
    if target_ids.shape != mask.shape:
        raise DataError(f"length mismatch: {target_ids.shape} vs {mask.shape}")
    return np.where(mask, PLACEHOLDER, target_ids)
