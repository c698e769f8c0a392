"""Model-agnostic European option pricing under zero rates.

Two Monte Carlo estimators share the simulation engine: the mixing
estimator averages per-path Black-Scholes-style terms built from the
conditional moments of ln X_t (low variance), and the raw-payoff estimator
averages payoffs of exactly sampled terminal prices (the independent
cross-check).  Constant volatility collapses both to the Black-Scholes
formula.

Prices are arbitrage prices only while the asset is a true martingale,
which for the shipped models means ``rho <= 0`` (constant volatility is
unconditional).  Positive correlation makes the asset a strict local
martingale, so pricing refuses unless explicitly overridden for research
use, in which case the raw expectation is reported with a warning.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, RngSpec, _iter_moments, default_steps
from .numerics import norm_cdf

__all__ = [
    "MartingaleViolation",
    "OptionSpec",
    "PriceQuote",
    "black_scholes_price",
    "is_martingale_regime",
    "price_mixing_mc",
    "payoff_mc_price",
    "martingale_check",
]


class MartingaleViolation(RuntimeError):
    """Pricing requested outside the martingale regime (rho > 0)."""


@dataclass(frozen=True)
class OptionSpec:
    """European vanilla option: strike, maturity and call/put kind."""

    strike: float
    maturity: float
    kind: str = "call"

    def __post_init__(self):
        if not self.strike > 0.0:
            raise ValueError("strike must be positive")
        if not self.maturity > 0.0:
            raise ValueError("maturity must be positive")
        if self.kind not in ("call", "put"):
            raise ValueError("kind must be 'call' or 'put'")


@dataclass(frozen=True)
class PriceQuote:
    """Price with its standard error (zero for closed forms) and provenance."""

    value: float
    stderr: float
    method: str
    n_paths: int


def black_scholes_price(x0, strike, sigma, t, kind="call") -> float:
    """Black-Scholes value under zero rates."""
    if min(x0, strike, sigma, t) <= 0.0:
        raise ValueError("x0, strike, sigma, t must be positive")
    st = sigma * math.sqrt(t)
    d1 = (math.log(x0 / strike) + 0.5 * st * st) / st
    d2 = d1 - st
    if kind == "call":
        return float(x0 * norm_cdf(d1) - strike * norm_cdf(d2))
    if kind == "put":
        return float(strike * norm_cdf(-d2) - x0 * norm_cdf(-d1))
    raise ValueError("kind must be 'call' or 'put'")


def is_martingale_regime(model: ModelSpec) -> bool:
    """True when the asset is a true martingale: constant volatility, or
    log-normal / BES(3) volatility with rho <= 0."""
    if model.vol.kind == "constant":
        return True
    return model.rho <= 0.0


def _guard_martingale(model, allow_local_martingale):
    if is_martingale_regime(model):
        return
    if allow_local_martingale:
        warnings.warn(
            "rho > 0: the asset price loses the martingale property; the "
            "reported number is E[(payoff)] under the given dynamics, not an "
            "arbitrage price",
            RuntimeWarning,
            stacklevel=3,
        )
        return
    raise MartingaleViolation(
        f"rho={model.rho} > 0: the asset is a strict local martingale and the "
        f"expectation is not an arbitrage price (override with "
        f"allow_local_martingale to compute it anyway)"
    )


def _accumulate(values_iter, n_paths):
    s1 = 0.0
    s2 = 0.0
    for block in values_iter:
        s1 += float(block.sum())
        s2 += float((block * block).sum())
    mean = s1 / n_paths
    var = max(s2 / n_paths - mean * mean, 0.0)
    return mean, math.sqrt(var / n_paths)


def price_mixing_mc(model: ModelSpec, opt: OptionSpec, n_paths: int,
                    n_steps: int | None = None, rng: RngSpec = RngSpec(0),
                    allow_local_martingale: bool = False,
                    threads: int = 1) -> PriceQuote:
    """Mixing Monte Carlo price: per-path Black-Scholes terms averaged over
    volatility paths.

    For a call each path contributes
    ``X0 exp(mu_z + sigma_z^2/2) Phi(d1) - K Phi(d2)`` with
    ``d1 = (ln(X0/K) + mu_z + sigma_z^2)/sigma_z`` and
    ``d2 = (ln(X0/K) + mu_z)/sigma_z``; puts use the reflected form.
    Conditioning on the volatility path removes all payoff noise from the
    independent Brownian factor, so this runs well below the raw-payoff
    estimator's variance.
    """
    _guard_martingale(model, allow_local_martingale)
    n_steps = n_steps or default_steps(opt.maturity)
    lk = math.log(model.x0 / opt.strike)

    def blocks():
        for mu, s2, _ in _iter_moments(model, opt.maturity, n_steps, rng,
                                       n_paths, False, threads):
            if not np.all(s2 > 0.0):
                raise RuntimeError("degenerate path with zero integrated variance")
            s = np.sqrt(s2)
            d2 = (lk + mu) / s
            d1 = d2 + s
            fwd = model.x0 * np.exp(mu + 0.5 * s2)
            if opt.kind == "call":
                yield fwd * norm_cdf(d1) - opt.strike * norm_cdf(d2)
            else:
                yield opt.strike * norm_cdf(-d2) - fwd * norm_cdf(-d1)

    mean, stderr = _accumulate(blocks(), n_paths)
    return PriceQuote(mean, stderr, "mixing_mc", n_paths)


def payoff_mc_price(model: ModelSpec, opt: OptionSpec, n_paths: int,
                    n_steps: int | None = None, rng: RngSpec = RngSpec(0),
                    allow_local_martingale: bool = False,
                    threads: int = 1) -> PriceQuote:
    """Raw-payoff Monte Carlo price from exactly sampled terminal values.

    Strictly higher variance than :func:`price_mixing_mc` at equal path
    count; kept as an independent check on the mixing representation.
    """
    _guard_martingale(model, allow_local_martingale)
    n_steps = n_steps or default_steps(opt.maturity)

    def blocks():
        for _, _, x in _iter_moments(model, opt.maturity, n_steps, rng,
                                     n_paths, True, threads):
            if opt.kind == "call":
                yield np.maximum(x - opt.strike, 0.0)
            else:
                yield np.maximum(opt.strike - x, 0.0)

    mean, stderr = _accumulate(blocks(), n_paths)
    return PriceQuote(mean, stderr, "payoff_mc", n_paths)


def martingale_check(model: ModelSpec, t: float, n_paths: int,
                     n_steps: int | None = None, rng: RngSpec = RngSpec(0),
                     threads: int = 1):
    """Estimate E[X_t]/X0 and classify the martingale property.

    Uses the conditional expectation ``exp(mu_z + sigma_z^2/2)`` per path
    (same mean as X_t/X0, smaller variance).  Returns
    ``(mean, stderr, verdict)`` with verdict ``martingale_consistent`` iff
    the estimate is within three standard errors of one.
    """
    n_steps = n_steps or default_steps(t)

    def blocks():
        for mu, s2, _ in _iter_moments(model, t, n_steps, rng, n_paths,
                                       False, threads):
            yield np.exp(mu + 0.5 * s2)

    mean, stderr = _accumulate(blocks(), n_paths)
    verdict = (
        "martingale_consistent"
        if abs(mean - 1.0) <= 3.0 * stderr
        else "supermartingale_suspect"
    )
    return mean, stderr, verdict
