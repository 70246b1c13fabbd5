"""Log-posterior densities (with gradients) for the single-predictor regressions.

Both models use a linear predictor ``eta = X @ w``. For a continuous predictor
``X = [x, 1]`` and ``w = (alpha, beta)``; for the dormancy flag
``X = [1, dormant, non_dormant]`` and ``w = (beta, delta_dormant, delta_non_dormant)``.

Densities are evaluated for a batch of positions ``q`` of shape (chains, dim)
and return log densities of shape (chains,) and gradients of shape (chains, dim).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Priors:
    coef_sd: float = 10.0
    intercept_sd: float = 10.0
    group_sd: float = 1.0
    sigma_low: float = 1e-3
    sigma_high: float = 10.0


def design(x: Optional[np.ndarray], groups: Optional[np.ndarray], priors: Priors):
    """Design matrix, coefficient names and prior standard deviations."""
    if groups is not None:
        g = np.asarray(groups, dtype=float)
        X = np.column_stack([np.ones_like(g), g, 1.0 - g])
        names = ("beta", "delta_dormant", "delta_non_dormant")
        sds = np.array([priors.intercept_sd, priors.group_sd, priors.group_sd])
    else:
        x = np.asarray(x, dtype=float)
        X = np.column_stack([x, np.ones_like(x)])
        names = ("alpha", "beta")
        sds = np.array([priors.coef_sd, priors.intercept_sd])
    return X, names, sds


class GaussianLogModel:
    """``log(y) ~ Normal(X @ w, sigma)`` with ``sigma ~ Uniform(low, high)``.

    ``sigma`` is sampled through a logit transform ``u``; the Jacobian is included.
    """

    kind = "gaussian"

    def __init__(self, log_y, x=None, groups=None, priors: Priors = Priors()):
        self.ly = np.asarray(log_y, dtype=float)
        self.X, coef_names, self.prior_sd = design(x, groups, priors)
        self.lo, self.hi = priors.sigma_low, priors.sigma_high
        self.coef_names = coef_names
        self.param_names = coef_names + ("sigma",)
        self.dim = len(self.param_names)
        self.n = len(self.ly)

    def _sigma(self, u):
        s = 0.5 * (1.0 + np.tanh(0.5 * u))  # logistic, overflow-free
        return self.lo + (self.hi - self.lo) * s, s

    def logp_grad(self, q: np.ndarray):
        q = np.atleast_2d(q)
        w, u = q[:, :-1], q[:, -1]
        sigma, s = self._sigma(u)
        resid = self.ly[None, :] - w @ self.X.T
        ss = np.einsum("cn,cn->c", resid, resid)
        prec = self.prior_sd ** -2
        lp = (
            -self.n * np.log(sigma)
            - 0.5 * ss / sigma**2
            - 0.5 * (w**2 * prec).sum(axis=1)
            - np.logaddexp(0.0, -u)
            - np.logaddexp(0.0, u)
        )
        grad = np.empty_like(q)
        grad[:, :-1] = (resid @ self.X) / sigma[:, None] ** 2 - w * prec
        dsigma = -self.n / sigma + ss / sigma**3
        grad[:, -1] = dsigma * (self.hi - self.lo) * s * (1.0 - s) + (1.0 - 2.0 * s)
        return lp, grad

    def constrain(self, q: np.ndarray) -> np.ndarray:
        out = np.array(q, dtype=float, copy=True)
        out[..., -1] = self._sigma(q[..., -1])[0]
        return out

    def initial_point(self) -> np.ndarray:
        w, *_ = np.linalg.lstsq(self.X, self.ly, rcond=None)
        resid = self.ly - self.X @ w
        sd = np.sqrt(resid @ resid / max(1, self.n - len(w)))
        sd = float(np.clip(sd, self.lo + 1e-6 * (self.hi - self.lo), self.hi * (1 - 1e-6)))
        frac = (sd - self.lo) / (self.hi - self.lo)
        return np.append(w, np.log(frac / (1.0 - frac)))

    def simulate(self, constrained: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Replicate log-outcomes for each row of constrained draws (draws, dim)."""
        mu = constrained[:, :-1] @ self.X.T
        return mu + constrained[:, -1:] * rng.standard_normal(mu.shape)


class PoissonLogModel:
    """``y ~ Poisson(exp(X @ w))``."""

    kind = "poisson"
    _ETA_MAX = 700.0

    def __init__(self, y, x=None, groups=None, priors: Priors = Priors()):
        self.y = np.asarray(y, dtype=float)
        self.X, coef_names, self.prior_sd = design(x, groups, priors)
        self.coef_names = coef_names
        self.param_names = coef_names
        self.dim = len(self.param_names)
        self.n = len(self.y)

    def logp_grad(self, q: np.ndarray):
        q = np.atleast_2d(q)
        eta = q @ self.X.T
        bad = ~np.all(eta < self._ETA_MAX, axis=1)
        lam = np.exp(np.minimum(eta, self._ETA_MAX))
        prec = self.prior_sd ** -2
        lp = (self.y[None, :] * eta - lam).sum(axis=1) - 0.5 * (q**2 * prec).sum(axis=1)
        grad = (self.y[None, :] - lam) @ self.X - q * prec
        lp[bad] = -np.inf
        return lp, grad

    def constrain(self, q: np.ndarray) -> np.ndarray:
        return np.array(q, dtype=float, copy=True)

    def initial_point(self) -> np.ndarray:
        ly = np.log(self.y + 0.5)
        w, *_ = np.linalg.lstsq(self.X, ly, rcond=None)
        return w

    def simulate(self, constrained: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eta = np.minimum(constrained @ self.X.T, 50.0)
        return rng.poisson(np.exp(eta)).astype(float)
