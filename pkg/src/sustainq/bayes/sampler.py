"""Hamiltonian Monte Carlo with per-chain dense-metric and step-size adaptation.

Chains are advanced together as a batch for speed but are statistically
independent: each has its own generator (seeded from ``(seed, attempt, chain)``),
its own metric and its own step size, so a chain's draws do not depend on how
many other chains run beside it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

logger = logging.getLogger(__name__)

TARGET_ACCEPT = 0.8
MAX_LEAPFROG = 256
DIVERGENCE_ENERGY = 1000.0


@dataclass
class SamplerRun:
    draws: np.ndarray                  # (chains, draws, dim), constrained scale
    step_size: np.ndarray              # (chains,)
    accept_rate: np.ndarray            # (chains,)
    divergences: np.ndarray            # (chains,)
    mode: np.ndarray = field(default=None)


def laplace(model) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mode and inverse negative Hessian on the unconstrained scale."""

    def nlp(q):
        lp, g = model.logp_grad(q[None, :])
        if not np.isfinite(lp[0]):
            return 1e300, np.zeros_like(q)
        return -lp[0], -g[0]

    start = model.initial_point()
    res = optimize.minimize(nlp, start, jac=True, method="L-BFGS-B")
    mode = res.x if np.all(np.isfinite(res.x)) else start

    d = model.dim
    hess = np.empty((d, d))
    for j in range(d):
        h = 1e-5 * max(1.0, abs(mode[j]))
        e = np.zeros(d)
        e[j] = h
        _, gp = model.logp_grad((mode + e)[None, :])
        _, gm = model.logp_grad((mode - e)[None, :])
        hess[:, j] = -(gp[0] - gm[0]) / (2 * h)
    hess = 0.5 * (hess + hess.T)
    vals, vecs = np.linalg.eigh(hess)
    if not np.all(np.isfinite(vals)):
        return mode, np.eye(d)
    vals = np.clip(vals, 1e-8, None)
    cov = (vecs / vals) @ vecs.T
    return mode, cov


def _adaptation_windows(warmup: int) -> list[int]:
    """Iterations (exclusive ends) at which the metric is re-estimated."""
    if warmup < 20:
        return []
    init = max(1, int(0.075 * warmup))
    term = max(1, int(0.05 * warmup))
    ends = []
    size = max(10, (warmup - init - term) // 20)
    start = init
    while start + size < warmup - term:
        nxt = start + size
        if nxt + 2 * size > warmup - term:
            nxt = warmup - term
        ends.append(nxt)
        start = nxt
        size *= 2
    return ends


class _DualAveraging:
    gamma, t0, kappa = 0.05, 10.0, 0.75

    def __init__(self, eps: np.ndarray):
        self.restart(eps)

    def restart(self, eps: np.ndarray):
        self.mu = np.log(10.0 * eps)
        self.hbar = np.zeros_like(eps)
        self.log_eps_bar = np.zeros_like(eps)
        self.t = 0

    def update(self, accept_stat: np.ndarray) -> np.ndarray:
        self.t += 1
        t = self.t
        w = 1.0 / (t + self.t0)
        self.hbar = (1 - w) * self.hbar + w * (TARGET_ACCEPT - accept_stat)
        log_eps = self.mu - math.sqrt(t) / self.gamma * self.hbar
        eta = t ** -self.kappa
        self.log_eps_bar = eta * log_eps + (1 - eta) * self.log_eps_bar
        return np.exp(log_eps)

    def final(self) -> np.ndarray:
        return np.exp(self.log_eps_bar)


def _regularized_cov(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    cov = np.atleast_2d(np.cov(samples, rowvar=False))
    diag = np.diag(np.diag(cov))
    cov = (n * cov + 5.0 * 1e-3 * diag) / (n + 5.0)
    return cov + 1e-12 * np.eye(cov.shape[0])


def _chol(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        vals = np.clip(vals, 1e-12 * max(1.0, vals.max()), None)
        return np.linalg.cholesky((vecs * vals) @ vecs.T)


def sample(model, *, chains: int = 4, draws: int = 3000, warmup: int = 1000,
           seed: int = 0, attempt: int = 0) -> SamplerRun:
    """Draw ``chains x draws`` posterior samples from ``model``."""
    d = model.dim
    rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt, c))) for c in range(chains)]
    mode, cov = laplace(model)
    L0 = _chol(cov)
    L = np.repeat(L0[None, :, :], chains, axis=0)

    q = np.empty((chains, d))
    for c, rng in enumerate(rngs):
        for scale in (1.0, 0.5, 0.1, 0.0):
            cand = mode + scale * (L0 @ rng.standard_normal(d))
            if np.isfinite(model.logp_grad(cand[None, :])[0][0]):
                break
        q[c] = cand
    lp, grad = model.logp_grad(q)

    eps = np.full(chains, 1.0)
    da = _DualAveraging(eps)
    windows = _adaptation_windows(warmup)
    window_start = max(1, int(0.075 * warmup)) if windows else warmup
    warm_store = np.empty((warmup, chains, d)) if warmup else None

    total = warmup + draws
    out = np.empty((chains, draws, d))
    accepted = np.zeros(chains)
    divergences = np.zeros(chains, dtype=int)
    half_pi = 0.5 * math.pi

    for it in range(total):
        z = np.stack([rng.standard_normal(d) for rng in rngs])
        jitter = np.array([rng.uniform(0.5, 1.5) for rng in rngs])
        log_u = np.log(np.array([rng.uniform() for rng in rngs]))
        n_steps = np.clip(np.ceil(half_pi * jitter / eps), 1, MAX_LEAPFROG).astype(int)

        h0 = -lp + 0.5 * np.einsum("cd,cd->c", z, z)
        q1, z1, g1, lp1 = q.copy(), z.copy(), grad.copy(), lp.copy()
        with np.errstate(all="ignore"):
            for step in range(int(n_steps.max())):
                live = step < n_steps
                e = np.where(live, eps, 0.0)[:, None]
                z1 = z1 + 0.5 * e * np.einsum("cji,cj->ci", L, g1)
                q1 = q1 + e * np.einsum("cij,cj->ci", L, z1)
                lp1, g1 = model.logp_grad(q1)
                bad = ~np.isfinite(lp1)
                g1 = np.where(bad[:, None], 0.0, g1)
                z1 = z1 + 0.5 * e * np.einsum("cji,cj->ci", L, g1)
            h1 = -lp1 + 0.5 * np.einsum("cd,cd->c", z1, z1)
            log_alpha = np.where(np.isfinite(h1), h0 - h1, -np.inf)
        divergent = ~(log_alpha > -DIVERGENCE_ENERGY)
        accept = log_u < log_alpha
        q = np.where(accept[:, None], q1, q)
        lp = np.where(accept, lp1, lp)
        grad = np.where(accept[:, None], g1, grad)

        if it < warmup:
            stat = np.minimum(1.0, np.exp(np.minimum(log_alpha, 0.0)))
            eps = da.update(stat)
            warm_store[it] = q
            if it + 1 in windows:
                for c in range(chains):
                    L[c] = _chol(_regularized_cov(warm_store[window_start:it + 1, c]))
                window_start = it + 1
                eps = np.ones(chains)
                da.restart(eps)
            if it + 1 == warmup:
                eps = da.final()
        else:
            k = it - warmup
            out[:, k] = model.constrain(q)
            accepted += accept
            divergences += divergent

    return SamplerRun(
        draws=out,
        step_size=eps,
        accept_rate=accepted / max(1, draws),
        divergences=divergences,
        mode=mode,
    )
