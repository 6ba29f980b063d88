"""Result records attached to analytic and stochastic evaluations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any


@dataclass(frozen=True)
class SeriesResult:
    """A truncated series or quadrature value with its error estimate."""

    value: float
    error: float
    terms: int
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with standard error and reproducibility metadata."""

    mean: float
    stderr: float
    n_samples: int
    seed: int | None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __float__(self) -> float:
        return self.mean

    def agrees_with(self, other: float, n_sigma: float = 3.0, other_se: float = 0.0,
                    slack: float = 0.0) -> bool:
        tol = max(n_sigma * math.hypot(self.stderr, other_se), slack)
        return abs(self.mean - other) <= tol

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def mc_from_samples(samples, seed: int | None, **meta) -> MCEstimate:
    import numpy as np

    arr = np.asarray(samples, dtype=float)
    n = arr.size
    mean = float(arr.mean()) if n else math.nan
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(mean=mean, stderr=se, n_samples=n, seed=seed, meta=meta)
