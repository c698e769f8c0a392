"""svolkit: exact densities and European option prices in linear stochastic
volatility models (dX = Y X dW), validated against a Monte Carlo mixing
oracle.

Submodules
----------
numerics   quadrature, oscillatory integrals, inverse Laplace, normal helpers
model      model specification, path simulation, mixing Monte Carlo
lognormal  closed forms for geometric-Brownian volatility (SABR beta=1)
bessel3    BES(3)-volatility transforms, joint Brownian-functional density
pricing    mixing / raw-payoff Monte Carlo pricers, Black-Scholes
cli        command-line front end (densities, prices, validation, tables)
"""

from .model import (
    ModelSpec,
    RngSpec,
    VolKind,
    asset_terminal_mc,
    density_mc,
    mixing_moments,
    simulate_vol_path,
)
from .numerics import (
    LaplaceInversionSpec,
    NonConvergence,
    NonFiniteIntegrand,
    QuadratureSpec,
    UnstableInversion,
    integrate_1d,
    invert_laplace,
    norm_cdf,
    norm_pdf,
    oscillatory_integrate,
)
from .pricing import (
    MartingaleViolation,
    OptionSpec,
    PriceQuote,
    black_scholes_price,
    martingale_check,
    payoff_mc_price,
    price_mixing_mc,
)

__version__ = "0.1.0"

__all__ = [
    "ModelSpec",
    "RngSpec",
    "VolKind",
    "simulate_vol_path",
    "mixing_moments",
    "density_mc",
    "asset_terminal_mc",
    "QuadratureSpec",
    "LaplaceInversionSpec",
    "integrate_1d",
    "oscillatory_integrate",
    "invert_laplace",
    "norm_cdf",
    "norm_pdf",
    "NonConvergence",
    "NonFiniteIntegrand",
    "UnstableInversion",
    "MartingaleViolation",
    "OptionSpec",
    "PriceQuote",
    "black_scholes_price",
    "price_mixing_mc",
    "payoff_mc_price",
    "martingale_check",
    "__version__",
]
