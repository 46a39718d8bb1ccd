"""1D mixture fitting for the Bayes classifier: Gaussians for distances,
von Mises for angular attributes.  Component count (1 or 2) is chosen by BIC.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e, logsumexp

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3       # keeps degenerate (constant) training data finite
KAPPA_CAP = 1e4
EM_TOL = 1e-9
EM_MAX_ITER = 500


@dataclass
class Mixture:
    """Weighted 1D mixture; kind is "gaussian" (params mu, sigma) or
    "von_mises" (params mu, kappa; support in radians)."""

    kind: str
    weights: np.ndarray
    mu: np.ndarray
    scale: np.ndarray        # sigma or kappa per component

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "gaussian":
            z = (x[:, None] - self.mu[None, :]) / self.scale[None, :]
            return -0.5 * z * z - np.log(self.scale[None, :]) - 0.5 * math.log(2 * math.pi)
        # log I0(kappa) = log(i0e(kappa)) + kappa, stable for large kappa
        log_i0 = np.log(i0e(self.scale)) + self.scale
        return (self.scale[None, :] * np.cos(x[:, None] - self.mu[None, :])
                - math.log(2 * math.pi) - log_i0[None, :])

    def logpdf(self, x) -> np.ndarray:
        lp = self.component_logpdf(x) + np.log(self.weights[None, :])
        return logsumexp(lp, axis=1)

    def loglik(self, x) -> float:
        return float(np.sum(self.logpdf(x)))

    @property
    def n_params(self) -> int:
        return 3 * self.n_components - 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(),
                "mu": self.mu.tolist(), "scale": self.scale.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Mixture":
        return Mixture(kind=d["kind"], weights=np.asarray(d["weights"], dtype=float),
                       mu=np.asarray(d["mu"], dtype=float),
                       scale=np.asarray(d["scale"], dtype=float))


def kappa_from_rbar(rbar: float) -> float:
    """Invert A(kappa) = I1/I0 = rbar: piecewise seed plus Newton refinement."""
    r = min(max(float(rbar), 0.0), 1.0 - 1e-12)
    if r < 0.53:
        k = 2 * r + r**3 + 5 * r**5 / 6
    elif r < 0.85:
        k = -0.4 + 1.39 * r + 0.43 / (1 - r)
    else:
        k = 1.0 / (r**3 - 4 * r**2 + 3 * r)
    k = min(max(k, 1e-8), KAPPA_CAP)
    for _ in range(5):
        a = i1e(k) / i0e(k)
        # dA/dk = 1 - A/k - A^2
        da = 1.0 - a / k - a * a
        if abs(da) < 1e-15:
            break
        k = min(max(k - (a - r) / da, 1e-8), KAPPA_CAP)
    return float(k)


def fit_gaussian(x: np.ndarray, w: np.ndarray | None = None) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if w is None:
        mu = float(x.mean())
        sigma = float(x.std())
    else:
        tot = float(w.sum())
        mu = float(np.sum(w * x) / tot)
        sigma = float(math.sqrt(max(np.sum(w * (x - mu) ** 2) / tot, 0.0)))
    return mu, max(sigma, SIGMA_FLOOR)


def fit_von_mises(theta: np.ndarray, w: np.ndarray | None = None) -> tuple[float, float]:
    """Circular mean direction and concentration via A(kappa) inversion."""
    theta = np.asarray(theta, dtype=float)
    if w is None:
        w = np.ones_like(theta)
    tot = float(w.sum())
    c = float(np.sum(w * np.cos(theta)) / tot)
    s = float(np.sum(w * np.sin(theta)) / tot)
    mu = math.atan2(s, c)
    rbar = math.hypot(c, s)
    return mu, kappa_from_rbar(rbar)


def _single(kind: str, x: np.ndarray) -> Mixture:
    if kind == "gaussian":
        mu, sc = fit_gaussian(x)
    else:
        mu, sc = fit_von_mises(x)
    return Mixture(kind=kind, weights=np.array([1.0]), mu=np.array([mu]),
                   scale=np.array([sc]))


def _em(kind: str, x: np.ndarray, init: Mixture) -> tuple[Mixture, bool]:
    mix = init
    prev = -np.inf
    for _ in range(EM_MAX_ITER):
        lp = mix.component_logpdf(x) + np.log(mix.weights[None, :])
        norm = logsumexp(lp, axis=1)
        resp = np.exp(lp - norm[:, None])
        ll = float(norm.sum())
        nk = resp.sum(axis=0)
        weights = np.maximum(nk / len(x), 1e-9)
        weights = weights / weights.sum()
        mus, scales = [], []
        for k in range(mix.n_components):
            if kind == "gaussian":
                mu, sc = fit_gaussian(x, resp[:, k] + 1e-300)
            else:
                mu, sc = fit_von_mises(x, resp[:, k] + 1e-300)
            mus.append(mu)
            scales.append(sc)
        mix = Mixture(kind=kind, weights=weights, mu=np.array(mus), scale=np.array(scales))
        if abs(ll - prev) < EM_TOL * (1.0 + abs(ll)):
            return mix, True
        prev = ll
    return mix, False


def fit_mixture(x, kind: str, rng: np.random.Generator, *,
                max_components: int = 2, restarts: int = 5) -> Mixture:
    """Fit 1- and 2-component mixtures and keep the lower-BIC model.

    Needs at least 10 samples to try two components.  EM that fails to
    converge contributes its best-so-far fit (logged).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    best = _single(kind, x)
    if max_components < 2 or n < 10:
        return best
    best_bic = -2.0 * best.loglik(x) + best.n_params * math.log(n)

    lo, hi = np.quantile(x, 0.25), np.quantile(x, 0.75)
    cand = None
    cand_ll = -np.inf
    for _ in range(max(1, restarts)):
        jit = rng.normal(0.0, 0.1 * (abs(hi - lo) + 1e-6), size=2)
        if kind == "gaussian":
            sc = max(float(x.std()) / 2.0, SIGMA_FLOOR)
        else:
            _, k1 = fit_von_mises(x)
            sc = max(k1, 0.5)
        init = Mixture(kind=kind, weights=np.array([0.5, 0.5]),
                       mu=np.array([lo + jit[0], hi + jit[1]]),
                       scale=np.array([sc, sc]))
        mix, converged = _em(kind, x, init)
        if not converged:
            logger.warning("EM (%s, k=2) did not converge in %d iterations; keeping best fit",
                           kind, EM_MAX_ITER)
        ll = mix.loglik(x)
        if ll > cand_ll:
            cand, cand_ll = mix, ll
    if cand is not None:
        bic2 = -2.0 * cand_ll + cand.n_params * math.log(n)
        if bic2 < best_bic:
            best = cand
    return best
