"""Linear stochastic volatility model: dX = Y X dW, dY = mu dt + sigma dZ with
d<W,Z> = rho dt.

Three volatility kinds ship: constant (Black-Scholes), geometric Brownian
motion (log-normal / SABR beta=1) and the 3-dimensional Bessel process
started from 1.  Conditionally on the volatility path, ln X_t is Gaussian
with per-path mean ``mu_z`` and variance ``sigma_z2``; the Monte Carlo
routines here average that conditional Gaussian structure directly, so the
asset itself carries no discretization error.  This mixing estimator is the
validation oracle for every closed form in the package.

Path generation is reproducible by construction: paths are produced in
fixed-size batches, batch ``i`` of an :class:`RngSpec` always derives the
same child stream, and reductions run in batch order regardless of the
worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidHorizon",
    "NonPositiveVol",
    "VolKind",
    "ModelSpec",
    "RngSpec",
    "PathBundle",
    "MixingMoments",
    "simulate_vol_path",
    "mixing_moments",
    "density_mc",
    "asset_terminal_mc",
    "mass_in_band",
    "default_steps",
    "BATCH_SIZE",
]

#: paths per reproducibility batch; fixed so results do not depend on how the
#: work is split across threads
BATCH_SIZE = 16384


class InvalidHorizon(ValueError):
    """Requested time is outside (0, horizon]."""


class NonPositiveVol(RuntimeError):
    """A simulated volatility value underflowed to zero or below."""


@dataclass(frozen=True)
class VolKind:
    """Volatility process selector: ``constant``, ``lognormal`` or ``bessel3``.

    ``sigma`` is the constant level for ``constant`` and the vol-of-vol for
    ``lognormal``; the BES(3) process has no free coefficient.
    """

    kind: str
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "lognormal", "bessel3"):
            raise ValueError(f"unknown volatility kind {self.kind!r}")
        if self.kind in ("constant", "lognormal"):
            if self.sigma is None or not self.sigma > 0.0:
                raise ValueError(f"{self.kind} volatility requires sigma > 0")
        elif self.sigma is not None:
            raise ValueError("bessel3 volatility takes no sigma")

    @classmethod
    def constant(cls, sigma: float):
        return cls("constant", float(sigma))

    @classmethod
    def lognormal(cls, sigma: float):
        return cls("lognormal", float(sigma))

    @classmethod
    def bessel3(cls):
        return cls("bessel3")


@dataclass(frozen=True)
class ModelSpec:
    """Model parameters: X0, Y0, correlation, horizon and volatility kind."""

    x0: float
    y0: float
    rho: float
    horizon: float
    vol: VolKind

    def __post_init__(self):
        if not self.x0 > 0.0:
            raise ValueError("x0 must be positive")
        if not self.y0 > 0.0:
            raise ValueError("y0 must be positive")
        if not abs(self.rho) < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.vol.kind == "bessel3" and self.y0 != 1.0:
            raise ValueError("bessel3 volatility requires y0 = 1")
        if self.vol.kind == "constant" and self.y0 != self.vol.sigma:
            raise ValueError("constant volatility requires y0 == sigma")

    @classmethod
    def constant(cls, sigma, x0=1.0, rho=0.0, horizon=1.0):
        return cls(x0, float(sigma), rho, horizon, VolKind.constant(sigma))

    @classmethod
    def lognormal(cls, sigma, y0, x0=1.0, rho=0.0, horizon=1.0):
        return cls(x0, y0, rho, horizon, VolKind.lognormal(sigma))

    @classmethod
    def bessel3(cls, x0=1.0, rho=0.0, horizon=1.0):
        return cls(x0, 1.0, rho, horizon, VolKind.bessel3())

    def to_json(self) -> dict:
        vol = {"kind": self.vol.kind}
        if self.vol.sigma is not None:
            vol["sigma"] = self.vol.sigma
        return {
            "x0": self.x0,
            "y0": self.y0,
            "rho": self.rho,
            "horizon": self.horizon,
            "vol": vol,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelSpec":
        vol = data["vol"]
        kind = VolKind(vol["kind"], vol.get("sigma"))
        return cls(
            float(data["x0"]),
            float(data["y0"]),
            float(data["rho"]),
            float(data["horizon"]),
            kind,
        )


@dataclass(frozen=True)
class RngSpec:
    """Deterministic stream root: (seed, stream_id) fixes every path."""

    seed: int
    stream_id: int = 0

    def generator(self, batch_index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, batch_index)
        )
        return np.random.Generator(np.random.PCG64(ss))


@dataclass
class PathBundle:
    """Volatility paths with their running mixing functionals.

    All arrays are laid out (n_paths, n_steps + 1) except ``z_increments``
    which is (n_paths, n_steps).  ``int_y_dz`` is the left-point Ito sum of
    the running integral of Y dZ; ``int_y2_du`` is the running trapezoid of
    the integral of Y^2 du.
    """

    times: np.ndarray
    y: np.ndarray
    z_increments: np.ndarray
    int_y_dz: np.ndarray
    int_y2_du: np.ndarray


@dataclass
class MixingMoments:
    """Per-path conditional mean and variance of ln(X_t / X_0)."""

    mu_z: np.ndarray
    sigma_z2: np.ndarray


def default_steps(t: float) -> int:
    """Default time resolution: 512 steps per unit of time, at least 64."""
    return max(64, int(round(512 * t)))


def _prepend_zero(a):
    return np.concatenate([np.zeros((a.shape[0], 1)), a], axis=1)


def _running_trapezoid(y, dt):
    return _prepend_zero(np.cumsum(0.5 * (y[:, :-1] + y[:, 1:]) * dt, axis=1))


def simulate_vol_path(model: ModelSpec, t: float, n_steps: int, rng: RngSpec,
                      n_paths: int = 1) -> PathBundle:
    """Simulate volatility paths on a uniform grid of ``n_steps`` steps to ``t``.

    The log-normal path is exact in law at grid nodes (exponential of the
    Brownian increments); the BES(3) path is the Euclidean norm of a 3-D
    Brownian motion started at (1, 0, 0), exact in law at the nodes, with
    the driving increments recovered from its SDE as
    ``dZ_i = dY_i - dt / Y_i``.

    This materializes full paths; use the Monte Carlo routines for large
    path counts.
    """
    if not 0.0 < t <= model.horizon:
        raise InvalidHorizon(f"t={t} outside (0, {model.horizon}]")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    gen = rng.generator(0)
    dt = t / n_steps
    times = np.linspace(0.0, t, n_steps + 1)

    if model.vol.kind == "constant":
        sigma = model.vol.sigma
        dz = gen.standard_normal((n_paths, n_steps)) * math.sqrt(dt)
        y = np.full((n_paths, n_steps + 1), sigma)
        int_y_dz = _prepend_zero(sigma * np.cumsum(dz, axis=1))
        int_y2 = np.broadcast_to(sigma * sigma * times, y.shape).copy()
        return PathBundle(times, y, dz, int_y_dz, int_y2)

    if model.vol.kind == "lognormal":
        sigma = model.vol.sigma
        dz = gen.standard_normal((n_paths, n_steps)) * math.sqrt(dt)
        z = _prepend_zero(np.cumsum(dz, axis=1))
        y = model.y0 * np.exp(sigma * z - 0.5 * sigma * sigma * times)
        if not np.all(y > 0.0):
            raise NonPositiveVol("log-normal volatility underflowed to zero")
        int_y_dz = _prepend_zero(np.cumsum(y[:, :-1] * dz, axis=1))
        return PathBundle(times, y, dz, int_y_dz, _running_trapezoid(y * y, dt))

    # bessel3
    dw = gen.standard_normal((n_paths, 3, n_steps)) * math.sqrt(dt)
    w = np.cumsum(dw, axis=2)
    y = np.empty((n_paths, n_steps + 1))
    y[:, 0] = 1.0
    y[:, 1:] = np.sqrt((1.0 + w[:, 0, :]) ** 2 + w[:, 1, :] ** 2 + w[:, 2, :] ** 2)
    if not np.all(y > 0.0):
        raise NonPositiveVol("BES(3) path hit zero numerically")
    dz = np.diff(y, axis=1) - dt / y[:, :-1]
    int_y_dz = _prepend_zero(np.cumsum(y[:, :-1] * dz, axis=1))
    return PathBundle(times, y, dz, int_y_dz, _running_trapezoid(y * y, dt))


def mixing_moments(path: PathBundle, rho: float) -> MixingMoments:
    """Mixing moments at the path horizon:
    ``mu_z = rho * int Y dZ - int Y^2 du / 2``, ``sigma_z2 = (1 - rho^2) * int Y^2 du``.
    """
    iydz = path.int_y_dz[:, -1]
    iy2 = path.int_y2_du[:, -1]
    return MixingMoments(rho * iydz - 0.5 * iy2, (1.0 - rho * rho) * iy2)


# ---------------------------------------------------------------------------
# batched Monte Carlo
# ---------------------------------------------------------------------------

def _batch_moments(model, t, n_steps, rng, batch_index, batch_size, draw_asset):
    """Terminal (mu_z, sigma_z2[, X_t]) for one reproducibility batch."""
    gen = rng.generator(batch_index)
    dt = t / n_steps
    sq = math.sqrt(dt)
    rho = model.rho

    if model.vol.kind == "constant":
        sigma = model.vol.sigma
        dz = gen.standard_normal((batch_size, n_steps)) * sq
        iydz = sigma * dz.sum(axis=1)
        iy2 = np.full(batch_size, sigma * sigma * t)
    elif model.vol.kind == "lognormal":
        sigma = model.vol.sigma
        dz = gen.standard_normal((batch_size, n_steps)) * sq
        z = np.cumsum(dz, axis=1)
        times = np.linspace(dt, t, n_steps)
        y = model.y0 * np.exp(sigma * z - 0.5 * sigma * sigma * times)
        y_prev = np.concatenate([np.full((batch_size, 1), model.y0), y[:, :-1]], axis=1)
        iydz = (y_prev * dz).sum(axis=1)
        y2 = y * y
        iy2 = (
            0.5 * (model.y0 ** 2 + y2[:, -1]) + y2[:, :-1].sum(axis=1)
        ) * dt
        del z, y, y_prev, y2
    else:  # bessel3
        dw = gen.standard_normal((batch_size, 3, n_steps)) * sq
        w = np.cumsum(dw, axis=2)
        del dw
        y = np.empty((batch_size, n_steps + 1))
        y[:, 0] = 1.0
        y[:, 1:] = np.sqrt((1.0 + w[:, 0, :]) ** 2 + w[:, 1, :] ** 2 + w[:, 2, :] ** 2)
        del w
        dz = np.diff(y, axis=1) - dt / y[:, :-1]
        iydz = (y[:, :-1] * dz).sum(axis=1)
        y2 = y * y
        iy2 = (0.5 * (y2[:, 0] + y2[:, -1]) + y2[:, 1:-1].sum(axis=1)) * dt
        del y, dz, y2

    mu = rho * iydz - 0.5 * iy2
    s2 = (1.0 - rho * rho) * iy2
    if draw_asset:
        g = gen.standard_normal(batch_size)
        return mu, s2, model.x0 * np.exp(mu + np.sqrt(s2) * g)
    return mu, s2, None


def _batches(n_paths):
    full, rem = divmod(n_paths, BATCH_SIZE)
    sizes = [BATCH_SIZE] * full + ([rem] if rem else [])
    return list(enumerate(sizes))


def _iter_moments(model, t, n_steps, rng, n_paths, draw_asset=False, threads=1):
    """Yield per-batch terminal moments in deterministic batch order."""
    if not 0.0 < t <= model.horizon:
        raise InvalidHorizon(f"t={t} outside (0, {model.horizon}]")
    work = _batches(n_paths)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(
                lambda iw: _batch_moments(model, t, n_steps, rng, iw[0], iw[1], draw_asset),
                work,
            )
    else:
        for i, size in work:
            yield _batch_moments(model, t, n_steps, rng, i, size, draw_asset)


def density_mc(model: ModelSpec, t: float, r_grid, n_paths: int, n_steps: int,
               rng: RngSpec, threads: int = 1):
    """Monte Carlo density of X_t on ``r_grid`` via the mixing representation.

    Each volatility path contributes ``phi((ln(r/X0) - mu_z)/sigma_z) /
    (r sigma_z)``; the sample mean over paths estimates the density and the
    sample standard error is reported per grid point.  Returns a list of
    ``(density, stderr)`` pairs.
    """
    r = np.asarray(r_grid, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("density grid points must be positive")
    lx = np.log(r / model.x0)
    s1 = np.zeros(r.size)
    s2 = np.zeros(r.size)
    for mu, sz2, _ in _iter_moments(model, t, n_steps, rng, n_paths, False, threads):
        sz = np.sqrt(sz2)
        a = (lx[:, None] - mu[None, :]) / sz[None, :]
        k = np.exp(-0.5 * a * a) / (math.sqrt(2.0 * math.pi) * r[:, None] * sz[None, :])
        s1 += k.sum(axis=1)
        s2 += (k * k).sum(axis=1)
    mean = s1 / n_paths
    var = np.maximum(s2 / n_paths - mean * mean, 0.0)
    stderr = np.sqrt(var / n_paths)
    return list(zip(mean.tolist(), stderr.tolist()))


def mass_in_band(model: ModelSpec, t: float, r_min: float, r_max: float,
                 n_paths: int, n_steps: int, rng: RngSpec, threads: int = 1):
    """Monte Carlo probability that X_t lands in [r_min, r_max].

    Each path contributes its exact conditional coverage
    ``Phi(b) - Phi(a)``, so this is the integral of the mixing density over
    the band with a rigorous per-path standard error (the pointwise density
    errors are correlated across r; integrating per path avoids guessing
    that correlation).  Returns ``(mean, stderr)``.
    """
    if not 0.0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    from scipy.special import ndtr

    lo = math.log(r_min / model.x0)
    hi = math.log(r_max / model.x0)
    s1 = 0.0
    s2 = 0.0
    for mu, sz2, _ in _iter_moments(model, t, n_steps, rng, n_paths, False, threads):
        sz = np.sqrt(sz2)
        cov = ndtr((hi - mu) / sz) - ndtr((lo - mu) / sz)
        s1 += float(cov.sum())
        s2 += float((cov * cov).sum())
    mean = s1 / n_paths
    var = max(s2 / n_paths - mean * mean, 0.0)
    return mean, math.sqrt(var / n_paths)


def asset_terminal_mc(model: ModelSpec, t: float, n_paths: int, n_steps: int,
                      rng: RngSpec, threads: int = 1) -> np.ndarray:
    """Sample X_t by conditional-Gaussian (mixing) sampling.

    The asset log is drawn exactly from N(mu_z, sigma_z2) given each
    volatility path, so the only discretization error lives in the
    volatility functionals.
    """
    out = [
        x for _, _, x in _iter_moments(model, t, n_steps, rng, n_paths, True, threads)
    ]
    return np.concatenate(out)
