"""Convergence diagnostics and highest-density intervals for MCMC draws.

Arrays of draws are shaped ``(chains, draws)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MCSE_MAX = 0.02
RHAT_MAX = 1.01
ESS_MIN = 400


@dataclass(frozen=True)
class Diagnostics:
    mcse: float
    rhat: float
    ess: float

    @property
    def ok(self) -> bool:
        return (
            math.isfinite(self.rhat)
            and self.mcse < MCSE_MAX
            and self.rhat < RHAT_MAX
            and self.ess >= ESS_MIN
        )


@dataclass(frozen=True)
class Hdi:
    low: float
    high: float
    mass: float

    def __contains__(self, value: float) -> bool:
        return self.low <= value <= self.high


def _split(chains: np.ndarray) -> np.ndarray:
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    half = chains.shape[1] // 2
    if half < 2:
        raise ValueError("need at least 4 draws per chain")
    return np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction on split chains; NaN when every chain is constant."""
    x = _split(chains)
    m, n = x.shape
    within = x.var(axis=1, ddof=1).mean()
    between = n * x.mean(axis=1).var(ddof=1)
    if within <= 0:
        return float("nan")
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via zero-padded FFT."""
    n = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, n=size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Multi-chain effective sample size (split chains, Geyer initial monotone sequence).

    Returns 0 for draws without variance.
    """
    x = _split(chains)
    m, n = x.shape
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return 0.0
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # sum of auto-correlation pairs while positive, forced monotone
    tau = -1.0
    prev_pair = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        tau += 2.0 * pair
        prev_pair = pair
        t += 2
    total = m * n
    tau = max(tau, 1.0 / math.log10(total))
    return float(total / tau)


def mcse(chains: np.ndarray, ess_value: float | None = None) -> float:
    """Monte Carlo standard error of the posterior mean: sd / sqrt(ESS)."""
    x = np.asarray(chains, dtype=float)
    e = ess(x) if ess_value is None else ess_value
    sd = float(x.std(ddof=1))
    if e <= 0:
        return math.inf if sd > 0 else 0.0
    return sd / math.sqrt(e)


def diagnose(chains: np.ndarray) -> Diagnostics:
    e = ess(chains)
    return Diagnostics(mcse=mcse(chains, e), rhat=split_rhat(chains), ess=e)


def hdi_count(n: int, mass: float) -> int:
    """Number of samples an interval of probability ``mass`` must hold: ceil(mass * n)."""
    return max(1, math.ceil(Fraction(repr(float(mass))) * n))


def hdi(samples, mass: float = 0.95) -> Hdi:
    """Narrowest interval spanning ``ceil(mass * N)`` consecutive sorted samples.

    Ties are resolved towards the lowest interval.
    """
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    n = s.size
    if n == 0:
        raise ValueError("no samples")
    k = hdi_count(n, mass)
    widths = s[k - 1:] - s[: n - k + 1]
    i = int(np.argmin(widths))
    return Hdi(float(s[i]), float(s[i + k - 1]), mass)
