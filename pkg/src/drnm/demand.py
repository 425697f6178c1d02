"""Demand models, the robust single-location order quantity, parametric
samplers, and the explicit worst-case moment-matching distribution.

The worst-case construction places 3m+1 atoms (m = |S|) on a standardized
space x (mean 0, covariance I) and maps them through d = mu + sigma * x:

    p0 = 1 / (2 (1 + lam^2))                v0 = (lam eps sqrt(2) / s) sig
    pi = lam^2 / (2 (1 + lam^2)) (sig_i/s)^2
         vi = (eps sqrt(2 (1+lam^2)) / lam) (s / sig_i) e_i
              - (sqrt(2) (1 + sqrt(1+lam^2)) / lam) (eps / s) sig
    qi = 1 / (2 m (1 + m eta^2))            wi = m eta sqrt(2 (1-eps^2)) e_i
    ri = eta^2 / (2 (1 + m eta^2))          ti = -(sqrt(2 (1-eps^2)) / eta) e_i

with s = sqrt(sum sig_i^2), eps = min(1/sqrt(2), lam / (sqrt(2) (1 +
sqrt(1+lam^2)) nu)) and eta = nu sqrt(2 (1 - eps^2)), nu the largest
coefficient of variation.  All atoms are componentwise nonnegative exactly
when the stated mean lower bounds hold, and the atom at v0 exceeds
mu + (alpha/s) sig^2 once lam eps sqrt(2) >= alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .metric import CostParams

ATOM_CLAMP = 1e-12  # square-root roundoff allowance before declaring negativity


class DemandError(ValueError):
    pass


@dataclass(frozen=True)
class DemandModel:
    """Positive per-location means and standard deviations (diagonal
    covariance)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise DemandError("mu and sigma must be 1-d arrays of equal length")
        if not (mu > 0).all():
            raise DemandError("all means must be positive")
        if not (sigma > 0).all():
            raise DemandError("all standard deviations must be positive")
        mu = mu.copy()
        sigma = sigma.copy()
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def nu(self) -> float:
        """Largest coefficient of variation max_i sigma_i / mu_i."""
        return float((self.sigma / self.mu).max())

    def sigma_subset(self, S) -> float:
        """sqrt(sum_{i in S} sigma_i^2)."""
        idx = np.asarray(sorted(S), dtype=int)
        return float(np.sqrt((self.sigma[idx] ** 2).sum()))

    def inflate(self, delta: float) -> "DemandModel":
        return DemandModel((1.0 + delta) * self.mu, (1.0 + delta) * self.sigma)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution with exact rational probabilities."""

    probs: tuple  # Fractions, sum exactly 1
    atoms: tuple  # demand vectors (np.ndarray), componentwise >= 0

    def __post_init__(self):
        if sum(self.probs, Fraction(0)) != 1:
            raise DemandError("probabilities must sum to exactly 1")
        if any(p <= 0 for p in self.probs):
            raise DemandError("all probabilities must be positive")
        for a in self.atoms:
            if (np.asarray(a) < 0).any():
                raise DemandError("atoms must be componentwise nonnegative")

    def mean(self) -> np.ndarray:
        return sum(float(p) * np.asarray(a, dtype=float) for p, a in zip(self.probs, self.atoms))

    def cov(self) -> np.ndarray:
        m = self.mean()
        out = np.zeros((len(m), len(m)))
        for p, a in zip(self.probs, self.atoms):
            v = np.asarray(a, dtype=float) - m
            out += float(p) * np.outer(v, v)
        return out

    def event_mass(self, predicate) -> Fraction:
        """Exact probability of {atom : predicate(atom)}."""
        total = Fraction(0)
        for p, a in zip(self.probs, self.atoms):
            if predicate(np.asarray(a, dtype=float)):
                total += p
        return total

    def sample(self, m: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        p = np.array([float(x) for x in self.probs])
        p /= p.sum()
        idx = rng.choice(len(self.atoms), size=m, p=p)
        stacked = np.stack([np.asarray(a, dtype=float) for a in self.atoms])
        return stacked[idx]


def scarf_quantity(mu: float, sigma: float, p: CostParams):
    """Robust order quantity for one location.

    Returns (q, worst-case expected cost).  The interior candidate is
    mu + (sigma/2)(sqrt(b/h) - sqrt(h/b)); it is compared with q = 0 under
    the worst-case cost

        W(q) = h (q - mu) + ((b+h)/2) (sqrt(sigma^2 + (q-mu)^2) - (q - mu))

    and the cheaper one is returned.
    """
    if mu <= 0 or sigma <= 0:
        raise DemandError("scarf_quantity needs mu > 0 and sigma > 0")
    b, h = p.b, p.h

    def W(q):
        u = q - mu
        return h * u + 0.5 * (b + h) * (math.sqrt(sigma**2 + u * u) - u)

    q1 = mu + 0.5 * sigma * (math.sqrt(b / h) - math.sqrt(h / b))
    w1 = W(q1)
    w0 = W(0.0)
    return (q1, w1) if w1 <= w0 else (0.0, w0)


def scarf_worst_case_cost(mu: float, sigma: float, p: CostParams, q: float) -> float:
    """W(q) as above, usable as a standalone scoring function."""
    u = q - mu
    return p.h * u + 0.5 * (p.b + p.h) * (math.sqrt(sigma**2 + u * u) - u)


def _epsilon(lam: float, nu: float) -> float:
    return min(1.0 / math.sqrt(2.0), lam / (math.sqrt(2.0) * (1.0 + math.sqrt(1.0 + lam * lam)) * nu))


def table1_preconditions(model: DemandModel, S, lam: float, eps=None, eta=None) -> list:
    """Locations of S violating the nonnegativity lower bounds on the mean.

    With the default eps and eta (derived from the coefficient of variation)
    the bounds hold by construction; overriding them is for diagnostics.
    """
    S = sorted(S)
    nu = model.nu
    if eps is None:
        eps = _epsilon(lam, nu)
    if eta is None:
        eta = nu * math.sqrt(2.0 * (1.0 - eps * eps))
    sig_S = model.sigma_subset(S)
    bad = []
    c1 = math.sqrt(2.0) * (1.0 + math.sqrt(1.0 + lam * lam)) / lam * eps / sig_S
    c2 = math.sqrt(2.0 * (1.0 - eps * eps)) / eta
    for i in S:
        if model.mu[i] < c1 * model.sigma[i] ** 2 - 1e-12 or model.mu[i] < c2 * model.sigma[i] - 1e-12:
            bad.append(i)
    return bad


def worst_case_table1(model: DemandModel, S, lam: float, eps=None, eta=None) -> DiscreteDistribution:
    """Worst-case distribution on subset S with the exact target moments."""
    if lam < 1:
        raise DemandError(f"lam must be >= 1, got {lam}")
    S = sorted(S)
    if not S:
        raise DemandError("S must be nonempty")
    bad = table1_preconditions(model, S, lam, eps=eps, eta=eta)
    if bad:
        raise DemandError(
            f"nonnegativity preconditions fail at locations {bad}: means too small "
            f"relative to their variances for lam={lam}"
        )
    m = len(S)
    nu = model.nu
    if eps is None:
        eps = _epsilon(lam, nu)
    if eta is None:
        eta = nu * math.sqrt(2.0 * (1.0 - eps * eps))
    mu = model.mu[S]
    sig = model.sigma[S]
    sig_S = model.sigma_subset(S)

    # exact probabilities: ratios (sigma_i / sigma_S)^2 sum to exactly 1
    lam2 = Fraction(lam) ** 2
    eta2 = Fraction(eta) ** 2
    s2 = [Fraction(float(x)) ** 2 for x in sig]
    S2 = sum(s2, Fraction(0))
    p0 = 1 / (2 * (1 + lam2))
    pi = [lam2 / (2 * (1 + lam2)) * (w / S2) for w in s2]
    qi = [Fraction(1, 2 * m) / (1 + m * eta2)] * m
    ri = [eta2 / (2 * (1 + m * eta2))] * m

    def to_d(x):
        d = mu + sig * x
        if (d < -ATOM_CLAMP).any():
            raise DemandError(f"atom negativity beyond roundoff: {d.min()}")
        return np.maximum(d, 0.0)

    atoms = [to_d(lam * eps * math.sqrt(2.0) / sig_S * sig)]
    probs = [p0]
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        v = (eps * math.sqrt(2.0 * (1.0 + lam * lam)) / lam) * (sig_S / sig[k]) * e
        v -= (math.sqrt(2.0) * (1.0 + math.sqrt(1.0 + lam * lam)) / lam) * (eps / sig_S) * sig
        atoms.append(to_d(v))
        probs.append(pi[k])
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        atoms.append(to_d(m * eta * math.sqrt(2.0 * (1.0 - eps * eps)) * e))
        probs.append(qi[k])
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        atoms.append(to_d(-(math.sqrt(2.0 * (1.0 - eps * eps)) / eta) * e))
        probs.append(ri[k])

    return DiscreteDistribution(probs=tuple(probs), atoms=tuple(atoms))


def lambda_for_alpha(alpha: float, nu: float) -> float:
    """Smallest lam >= 1 with lam * sqrt(2) * eps(lam) = alpha.

    The left side is nondecreasing and unbounded in lam, so bisection
    applies; values of alpha below the lam = 1 level simply return 1.
    """
    if alpha <= 0:
        raise DemandError("alpha must be positive")

    def f(lam):
        return lam * math.sqrt(2.0) * _epsilon(lam, nu)

    lo = 1.0
    if f(lo) >= alpha:
        return lo
    hi = 2.0
    while f(hi) < alpha:
        hi *= 2.0
        if hi > 1e12:
            raise DemandError("no lam matches alpha (nu too large)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return hi


def chebyshev_probability_check(dist: DiscreteDistribution, model: DemandModel, S, alpha: float):
    """Exact atom mass of the tail event {d >= mu_S + (alpha/sigma_S) sigma_S^2}.

    Returns (mass, threshold vector).  When the distribution was built with
    lam = lambda_for_alpha(alpha, nu), the atom above the mean guarantees
    mass at least p0 = 1 / (2 (1 + lam^2)).
    """
    S = sorted(S)
    mu = model.mu[S]
    sig2 = model.sigma[S] ** 2
    sig_S = model.sigma_subset(S)
    threshold = mu + (alpha / sig_S) * sig2
    mass = dist.event_mass(lambda d: bool((d >= threshold - 1e-12).all()))
    return mass, threshold


def sample_parametric(model: DemandModel, family: str, m: int, seed) -> np.ndarray:
    """m independent demand vectors moment-matched to (mu, sigma).

    normal draws are clipped at zero (the model requires nonnegative
    demand); lognormal uses s^2 = ln(1 + sigma^2/mu^2), location
    ln(mu) - s^2/2; gamma uses shape (mu/sigma)^2 and scale sigma^2/mu.
    """
    if m < 1:
        raise DemandError("need at least one sample")
    rng = np.random.default_rng(seed)
    mu, sigma = model.mu, model.sigma
    if family == "normal":
        out = rng.normal(mu, sigma, size=(m, model.n))
        return np.maximum(out, 0.0)
    if family == "lognormal":
        s2 = np.log1p((sigma / mu) ** 2)
        loc = np.log(mu) - s2 / 2.0
        return rng.lognormal(mean=loc, sigma=np.sqrt(s2), size=(m, model.n))
    if family == "gamma":
        shape = (mu / sigma) ** 2
        scale = sigma**2 / mu
        return rng.gamma(shape=shape, scale=scale, size=(m, model.n))
    raise DemandError(f"unknown family {family!r}")


def normal_clip_report(model: DemandModel, m: int, seed) -> dict:
    """Moment bias induced by clipping normal samples at zero."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(model.mu, model.sigma, size=(m, model.n))
    clipped = np.maximum(raw, 0.0)
    return {
        "clip_fraction": float((raw < 0).mean()),
        "mean_shift_rel": float(
            np.abs(clipped.mean(axis=0) - raw.mean(axis=0)).max() / model.mu.max()
        ),
    }


def model_to_json(model: DemandModel) -> dict:
    return {"mu": model.mu.tolist(), "sigma": model.sigma.tolist()}


def load_model(path) -> DemandModel:
    import json

    with open(path) as fh:
        doc = json.load(fh)
    return DemandModel(np.asarray(doc["mu"], dtype=float), np.asarray(doc["sigma"], dtype=float))
