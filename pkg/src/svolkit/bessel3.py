"""BES(3)-volatility machinery.

Closed-form kernels for Brownian quadratic functionals (the unconditional
transform ``eq_a1`` and its bridge-conditional version ``eq_a2``), the
Laplace transform of the BES(3) mixing functionals, the joint density of a
Brownian endpoint and its integrated square recovered by numerical Laplace
inversion, and the asset density under BES(3) volatility evaluated by
sampling triples of independent Brownian functionals.

The Laplace-transform integrand uses the killed-at-zero kernel in image
form: each of the two image sources carries its own bridge factor,
``N(y-1) K(1, y) - N(y+1) K(1, -y)``.  Collapsing both images onto a single
bridge factor (as if the kernel were symmetric in the endpoint) is wrong by
several percent and is rejected by the Monte Carlo oracle; the tests pin
the image form against simulation and against the product identity for the
squared-norm decomposition.
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, RngSpec, default_steps
from .numerics import (
    LaplaceInversionSpec,
    QuadratureSpec,
    integrate_1d,
    invert_laplace,
    log_sinh,
    tanh_half,
)

__all__ = [
    "AppendixKernelParams",
    "Bes3LaplacePoint",
    "JointBMDensity",
    "eq_a1",
    "eq_a2",
    "hstar",
    "bes3_laplace",
    "joint_bm_density",
    "bes3_asset_density",
    "simulate_bm_quad_functionals",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class AppendixKernelParams:
    """Arguments of the quadratic-functional kernels (rate b, Laplace variable c,
    horizon t, Brownian start x, conditioning endpoint y)."""

    b: float
    c: float
    t: float
    x: float
    y: float = 0.0


@dataclass(frozen=True)
class Bes3LaplacePoint:
    """Evaluation point of the BES(3) two-functional Laplace transform."""

    lam: float
    b: float
    t: float

    def __post_init__(self):
        if not (self.lam > 0.0 and self.b > 0.0 and self.t > 0.0):
            raise ValueError("lam, b, t must be strictly positive")


@dataclass(frozen=True)
class JointBMDensity:
    """Point (endpoint z, integrated square y, horizon t) of the joint law."""

    z: float
    y: float
    t: float


def _as_float_or_array(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def eq_a1(b, c, t, x):
    """E[exp(-c B_t^2 - (b^2/2) * int_0^t B_u^2 du)] for Brownian motion from x.

    Requires b, t > 0 and c >= 0.  Evaluated through tanh so large ``b*t``
    cannot overflow.
    """
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0.0):
        raise ValueError("b must be positive")
    bt = b * t
    th = np.tanh(bt)
    # log(cosh(bt) + (2c/b) sinh(bt)) = log_cosh(bt) + log1p((2c/b) tanh(bt))
    log_d = (bt + np.log1p(np.exp(-2.0 * bt)) - math.log(2.0)) + np.log1p(
        (2.0 * c / b) * th
    )
    expo = -(x * x) * b * (b * th + 2.0 * c) / (2.0 * (b + 2.0 * c * th))
    return _as_float_or_array(np.exp(-0.5 * log_d + expo))


def eq_a2(b, t, x, y):
    """E[exp(-(b^2/2) * int_0^t B_u^2 du) | B_t = y] for Brownian motion from x.

    Symmetric in (x, y) and valued in (0, 1], with limit 1 as b*t -> 0.
    """
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0.0) or t <= 0.0:
        raise ValueError("b and t must be positive")
    bt = b * t
    k_minus_1 = bt / np.tanh(bt) - 1.0
    bracket = k_minus_1 * (np.asarray(y) - x) ** 2 + 2.0 * bt * x * np.asarray(y) * tanh_half(bt)
    log_pref = 0.5 * (np.log(bt) - log_sinh(bt))
    return _as_float_or_array(np.exp(log_pref - bracket / (2.0 * t)))


def hstar(t, c, z):
    """Laplace transform in y of the joint density of (B_t, int B^2 du) at
    endpoint z: ``H*(t, c, z)``.

    Accepts complex ``c`` (needed by the Talbot inversion contour); the
    branch is the analytic continuation from c > 0, kept continuous via
    ``log sinh w = w - log 2 + log(1 - exp(-2w))`` which holds for Re w > 0.
    """
    logb = 0.5 * cmath.log(2.0 * c)
    b = cmath.exp(logb)
    w = t * b
    e2 = cmath.exp(-2.0 * w)
    log_sh = w - math.log(2.0) + cmath.log(1.0 - e2)
    cth = (1.0 + e2) / (1.0 - e2)
    out = cmath.exp(-0.5 * _LOG_2PI + 0.5 * (logb - log_sh) - 0.5 * z * z * b * cth)
    return out if isinstance(c, complex) else out.real


def _gauss(u, t):
    return np.exp(-u * u / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def bes3_laplace(point: Bes3LaplacePoint, spec: QuadratureSpec | None = None) -> float:
    """E[exp(-lam * int Y dZ - (b^2/2) * int Y^2 du)] for BES(3) Y with Y_0 = 1.

    The pathwise identity ``int Y dZ = (Y_t^2 - 1 - 3t)/2`` turns the
    expectation into a 1-D integral of the terminal value against the
    killed-at-zero quadratic-functional kernel in image form:

        int_0^inf y exp(-lam (y^2 - 1 - 3t)/2)
                  [N_t(y-1) K(1, y) - N_t(y+1) K(1, -y)] dy

    with ``K(x, y) = eq_a2(b, t, x, y)`` and ``N_t`` the centered Gaussian
    density of variance t.
    """
    lam, b, t = point.lam, point.b, point.t
    spec = spec or QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10)

    def integrand(y):
        kern = _gauss(y - 1.0, t) * eq_a2(b, t, 1.0, y) - _gauss(y + 1.0, t) * eq_a2(
            b, t, 1.0, -y
        )
        return y * math.exp(-lam * (y * y - 1.0 - 3.0 * t) / 2.0) * kern

    value, _ = integrate_1d(integrand, 0.0, math.inf, spec)
    return value


def joint_bm_density(z, y, t, inv_spec: LaplaceInversionSpec | None = None) -> float:
    """Joint density of (B_t, int_0^t B_u^2 du) at (z, y) for standard B.

    Obtained by numerically inverting ``c -> hstar(t, c, z)`` at y.
    """
    if y <= 0.0 or t <= 0.0:
        raise ValueError("y and t must be positive")
    inv_spec = inv_spec or LaplaceInversionSpec()
    return invert_laplace(lambda c: hstar(t, c, z), y, inv_spec)


# ---------------------------------------------------------------------------
# Brownian quadratic functionals and the triple sampler
# ---------------------------------------------------------------------------

def simulate_bm_quad_functionals(t, n_paths, n_steps, rng: RngSpec, start=0.0):
    """Sample (B_t, int_0^t B_u^2 du) for Brownian motion started at ``start``.

    The time integral is a Richardson-extrapolated trapezoid (combining the
    full grid with its half-resolution subsample), which removes the leading
    O(dt) bias of the plain trapezoid on this functional.  Returns two
    arrays of length ``n_paths``.
    """
    n_steps = int(n_steps)
    if n_steps % 2:
        n_steps += 1
    dt = t / n_steps
    ends, quads = [], []
    batch = 16384
    n_batches = (n_paths + batch - 1) // batch
    for i in range(n_batches):
        size = min(batch, n_paths - i * batch)
        gen = rng.generator(i)
        dw = gen.standard_normal((size, n_steps)) * math.sqrt(dt)
        w = start + np.cumsum(dw, axis=1)
        del dw
        b2 = np.empty((size, n_steps + 1))
        b2[:, 0] = start * start
        np.square(w, out=b2[:, 1:])
        ends.append(w[:, -1].copy())
        del w
        fine = (0.5 * (b2[:, 0] + b2[:, -1]) + b2[:, 1:-1].sum(axis=1)) * dt
        b2c = b2[:, ::2]
        coarse = (0.5 * (b2c[:, 0] + b2c[:, -1]) + b2c[:, 1:-1].sum(axis=1)) * (2 * dt)
        quads.append(2.0 * fine - coarse)
    return np.concatenate(ends), np.concatenate(quads)


def _triple_batch(gen, size, t, n_steps):
    """One batch of (Y_t^2, int Y^2 du) from three independent Brownian paths.

    The squared BES(3) norm from 1 decomposes as W^2 + B2^2 + B3^2 with W a
    Brownian motion from 1 and B2, B3 from 0; the integrated square is the
    sum of the three integrated squares.
    """
    dt = t / n_steps
    dw = gen.standard_normal((size, 3, n_steps)) * math.sqrt(dt)
    w = np.cumsum(dw, axis=2)
    del dw
    w[:, 0, :] += 1.0
    yt2 = (w[:, :, -1] ** 2).sum(axis=1)
    b2 = w * w
    del w
    fine = (b2[:, :, :-1].sum(axis=2) + 0.5 * b2[:, :, -1]) * dt
    fine[:, 0] += 0.5 * dt  # node-0 value is 1 for the shifted coordinate
    b2c = b2[:, :, 1::2]
    coarse = (b2c[:, :, :-1].sum(axis=2) + 0.5 * b2c[:, :, -1]) * (2 * dt)
    coarse[:, 0] += 0.5 * (2 * dt)
    del b2, b2c
    int_y2 = (2.0 * fine - coarse).sum(axis=1)
    return yt2, int_y2


def bes3_asset_density(model: ModelSpec, t, r, n_triples=200_000, n_steps=None,
                       rng: RngSpec | None = None):
    """Density of X_t under BES(3) volatility by triple-functional sampling.

    Each draw is a triple of independent Brownian paths whose squared
    endpoints and integrated squares reassemble ``(Y_t^2, int Y^2 du)``; the
    mixing kernel is then averaged over draws.  ``r`` may be a scalar or an
    array; returns ``(density, stderr)`` with matching shape.
    """
    if model.vol.kind != "bessel3":
        raise ValueError("bes3_asset_density requires a bessel3 model")
    if not 0.0 < t <= model.horizon:
        raise ValueError(f"t={t} outside (0, {model.horizon}]")
    rng = rng or RngSpec(seed=0, stream_id=911)
    n_steps = n_steps or default_steps(t)
    if n_steps % 2:
        n_steps += 1
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= 0.0):
        raise ValueError("r must be positive")
    lx = np.log(r_arr / model.x0)
    rho = model.rho

    s1 = np.zeros(r_arr.size)
    s2 = np.zeros(r_arr.size)
    batch = 16384
    n_batches = (n_triples + batch - 1) // batch
    for i in range(n_batches):
        size = min(batch, n_triples - i * batch)
        yt2, iy2 = _triple_batch(rng.generator(i), size, t, n_steps)
        mu = 0.5 * rho * (yt2 - 1.0 - 3.0 * t) - 0.5 * iy2
        sz = np.sqrt((1.0 - rho * rho) * iy2)
        a = (lx[:, None] - mu[None, :]) / sz[None, :]
        k = np.exp(-0.5 * a * a) / (
            math.sqrt(2.0 * math.pi) * r_arr[:, None] * sz[None, :]
        )
        s1 += k.sum(axis=1)
        s2 += (k * k).sum(axis=1)
    mean = s1 / n_triples
    var = np.maximum(s2 / n_triples - mean * mean, 0.0)
    stderr = np.sqrt(var / n_triples)
    if np.isscalar(r) or np.asarray(r).ndim == 0:
        return float(mean[0]), float(stderr[0])
    return mean, stderr
