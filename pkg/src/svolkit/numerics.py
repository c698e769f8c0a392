"""Shared numerical kernels: quadrature, oscillatory integrals, numerical
inverse Laplace transforms and standard-normal helpers.

Everything in this module is a pure function of its inputs and safe to call
concurrently.  Hyperbolic expressions that would overflow ``cosh``/``sinh``
(argument above ~710) are provided in log-space form here so the model
modules never exponentiate large arguments directly.
"""

import math
import cmath
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

__all__ = [
    "NonConvergence",
    "NonFiniteIntegrand",
    "UnstableInversion",
    "TruncationPolicy",
    "QuadratureSpec",
    "LaplaceInversionSpec",
    "norm_cdf",
    "norm_pdf",
    "log_cosh",
    "log_sinh",
    "coth",
    "tanh_half",
    "integrate_1d",
    "oscillatory_integrate",
    "invert_laplace",
]

_LN2 = math.log(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# float64 ulp; used for cancellation-error estimates of lobe sums
_EPS = np.finfo(float).eps


class NonConvergence(RuntimeError):
    """Quadrature or series acceleration failed to reach the error target."""


class NonFiniteIntegrand(ValueError):
    """The integrand returned NaN or infinity at an evaluation node."""


class UnstableInversion(RuntimeError):
    """Inverse Laplace terms cancel beyond the supported dynamic range."""


# ---------------------------------------------------------------------------
# hyperbolic helpers (log-space above the overflow threshold)
# ---------------------------------------------------------------------------

def log_cosh(x):
    """log(cosh(x)), overflow-free for any real x."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - _LN2


def log_sinh(x):
    """log(sinh(x)) for x > 0, overflow-free."""
    x = np.asarray(x, dtype=float)
    return x + np.log1p(-np.exp(-2.0 * x)) - _LN2


def coth(x):
    """Hyperbolic cotangent, stable for large |x|."""
    return 1.0 / np.tanh(x)


def tanh_half(x):
    """tanh(x/2), the stable form of (cosh(x) - 1)/sinh(x)."""
    return np.tanh(0.5 * np.asarray(x, dtype=float))


def norm_cdf(x):
    """Standard normal CDF, machine accurate on |x| <= 8."""
    return ndtr(x)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationPolicy:
    """How an infinite upper limit is handled.

    ``tail_estimate`` maps the tail through QUADPACK's semi-infinite
    transformation; ``fixed_upper_bound`` truncates at ``upper``.
    """

    kind: str = "tail_estimate"
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in ("tail_estimate", "fixed_upper_bound"):
            raise ValueError(f"unknown truncation policy {self.kind!r}")
        if self.kind == "fixed_upper_bound" and not math.isfinite(self.upper):
            raise ValueError("fixed_upper_bound requires a finite bound")

    @classmethod
    def tail_estimate(cls):
        return cls("tail_estimate")

    @classmethod
    def fixed_upper_bound(cls, upper: float):
        return cls("fixed_upper_bound", float(upper))


@dataclass(frozen=True)
class QuadratureSpec:
    """Error targets and work limits for 1-D quadrature."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)

    def __post_init__(self):
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValueError("tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")

    def target(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass(frozen=True)
class LaplaceInversionSpec:
    """Method and resolution for numerical inverse Laplace transforms.

    ``scale_shift`` supports transforms defined on a shifted domain: the
    transform is sampled at ``c + scale_shift`` and the inverse is
    multiplied back by ``exp(scale_shift * y)``.
    """

    method: str = "talbot"
    n_terms: int = 32
    scale_shift: float = 0.0

    def __post_init__(self):
        if self.method == "talbot":
            if self.n_terms < 8:
                raise ValueError("talbot needs n_terms >= 8")
        elif self.method == "gaver_stehfest":
            if self.n_terms < 4 or self.n_terms % 2:
                raise ValueError("gaver_stehfest needs even n_terms >= 4")
        else:
            raise ValueError(f"unknown inversion method {self.method!r}")


def _checked(f):
    """Wrap a scalar integrand so NaN/inf evaluations raise immediately."""

    def wrapped(x):
        y = f(x)
        if not np.isfinite(y):
            raise NonFiniteIntegrand(f"integrand returned {y!r} at x={x!r}")
        return y

    return wrapped


def integrate_1d(f, lower, upper, spec: QuadratureSpec | None = None):
    """Adaptive Gauss-Kronrod integral of ``f`` on [lower, upper].

    ``upper`` may be ``inf``; the spec's truncation policy decides whether
    the tail is transformed or cut at a fixed bound.  Returns
    ``(value, err_est)`` and raises :class:`NonConvergence` when the
    subdivision limit is hit with the error estimate above target.
    """
    spec = spec or QuadratureSpec()
    g = _checked(f)
    hi = upper
    if upper == math.inf and spec.truncation.kind == "fixed_upper_bound":
        hi = spec.truncation.upper
    out = integrate.quad(
        g,
        lower,
        hi,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=spec.max_subdivisions,
        full_output=1,
    )
    value, err = out[0], out[1]
    if len(out) > 3 and err > spec.target(value):
        raise NonConvergence(
            f"quadrature stalled: err_est={err:.3e} > target={spec.target(value):.3e} "
            f"({out[3].strip().splitlines()[0]})"
        )
    return value, err


def _eval_nodes(f, nodes):
    """Evaluate f at an array of nodes, vectorized when f supports it."""
    try:
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape == nodes.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.fromiter((f(x) for x in nodes), dtype=float, count=nodes.size)


_GL24_X, _GL24_W = np.polynomial.legendre.leggauss(24)
_GL12_X, _GL12_W = np.polynomial.legendre.leggauss(12)


def _euler_transform(partials):
    """Euler acceleration of a sequence of alternating-series partial sums.

    Repeatedly averages adjacent partial sums, tracking the end of each row
    (the most-averaged combination of the latest terms) and stopping once
    the improvement stalls.  Returns (limit_estimate, residual_estimate).
    """
    row = np.asarray(partials, dtype=float)
    best = row[-1]
    resid = abs(row[-1] - row[-2]) if row.size > 1 else 0.0
    while row.size > 1:
        row = 0.5 * (row[1:] + row[:-1])
        step = abs(row[-1] - best)
        if step > resid and resid > 0.0:
            break
        best = row[-1]
        resid = step
    return best, resid


def oscillatory_integrate(f, frequency_hint, lower, spec: QuadratureSpec | None = None):
    """Integral on [lower, inf) of an integrand carrying a sin(frequency_hint * x) factor.

    The axis is partitioned at the sine zeros x_k = k*pi/frequency_hint, each
    lobe is integrated by fixed Gauss-Legendre (24-point, 12-point reference
    for the error estimate) and the alternating lobe series is summed with
    Euler acceleration.  Returns ``(value, err_est)``; the error estimate
    includes the cancellation noise floor of the lobe sum.
    """
    spec = spec or QuadratureSpec()
    if frequency_hint <= 0.0:
        raise ValueError("frequency_hint must be positive")
    period = math.pi / frequency_hint
    max_lobes = max(spec.max_subdivisions, 16)

    lobes = []
    errs = []
    peak = 0.0
    a = lower
    k = math.floor(lower / period + 1e-12)
    while len(lobes) < max_lobes:
        k += 1
        b = k * period
        if b <= a + 1e-300:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid + half * _GL24_X
        vals = _eval_nodes(f, nodes)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrand(f"integrand not finite on lobe [{a}, {b}]")
        i24 = half * float(vals @ _GL24_W)
        i12 = half * float(_eval_nodes(f, mid + half * _GL12_X) @ _GL12_W)
        lobes.append(i24)
        errs.append(abs(i24 - i12))
        peak = max(peak, abs(i24))
        # stop once the envelope has died relative to both the peak and the target
        if len(lobes) >= 4 and abs(i24) < max(spec.abs_tol * 1e-3, peak * 1e-17):
            break
        a = b
    else:
        # lobe cap reached with the envelope still alive: accelerate the
        # alternating partial-sum series
        cancel = peak * _EPS * math.sqrt(len(lobes))
        est, resid = _euler_transform(np.cumsum(lobes))
        err = resid + cancel + math.fsum(errs)
        if err > spec.target(est):
            raise NonConvergence(
                f"oscillatory series stalled after {len(lobes)} lobes "
                f"(residual {resid:.3e})"
            )
        return est, err

    total = math.fsum(lobes)
    cancel = peak * _EPS * math.sqrt(max(len(lobes), 1))
    # alternating-series truncation is bounded by the first omitted lobe
    err = math.fsum(errs) + cancel + abs(lobes[-1])
    return total, err


# ---------------------------------------------------------------------------
# inverse Laplace transforms
# ---------------------------------------------------------------------------

def _talbot(F, y, m):
    """Fixed-Talbot inversion (Abate-Valko) with compensated accumulation."""
    r = 2.0 * m / (5.0 * y)
    terms = [0.5 * complex(F(complex(r, 0.0))).real * math.exp(r * y)]
    for k in range(1, m):
        th = k * math.pi / m
        ct = 1.0 / math.tan(th)
        s = r * th * complex(ct, 1.0)
        gamma = complex(1.0, th * (1.0 + ct * ct) - ct)
        val = cmath.exp(s * y) * complex(F(s)) * gamma
        terms.append(val.real)
    if not all(math.isfinite(t) for t in terms):
        raise UnstableInversion("non-finite Talbot term (transform overflow?)")
    # no dynamic-range raise here: when the true value sits below the term
    # noise floor (peak * eps) the sum is an honest zero-within-noise
    return math.fsum(terms) * 2.0 / (5.0 * y)


def _stehfest_weights(n):
    half = n // 2
    w = []
    for k in range(1, n + 1):
        acc = 0.0
        for j in range((k + 1) // 2, min(k, half) + 1):
            acc += (
                j ** half
                * math.factorial(2 * j)
                / (
                    math.factorial(half - j)
                    * math.factorial(j)
                    * math.factorial(j - 1)
                    * math.factorial(k - j)
                    * math.factorial(2 * j - k)
                )
            )
        w.append((-1.0) ** (half + k) * acc)
    return np.asarray(w)


def _gaver_stehfest(F, y, n):
    ln2y = _LN2 / y
    w = _stehfest_weights(n)
    vals = np.array([complex(F(complex(k * ln2y, 0.0))).real for k in range(1, n + 1)])
    terms = w * vals
    total = math.fsum(terms)
    peak = float(np.max(np.abs(terms)))
    if not math.isfinite(total) or peak > 1e12 * max(abs(total), 1e-300):
        raise UnstableInversion(
            f"Gaver-Stehfest cancellation beyond 1e12 dynamic range (n={n})"
        )
    return total * ln2y


def invert_laplace(Lf, y, spec: LaplaceInversionSpec | None = None) -> float:
    """Numerically invert the Laplace transform ``Lf`` at ``y > 0``.

    ``Lf`` must accept complex arguments for the Talbot method (the contour
    leaves the real axis); Gaver-Stehfest samples the real axis only.
    """
    spec = spec or LaplaceInversionSpec()
    if y <= 0.0:
        raise ValueError("inversion point y must be positive")
    shift = spec.scale_shift
    F = Lf if shift == 0.0 else (lambda s: Lf(s + shift))
    if spec.method == "talbot":
        out = _talbot(F, y, spec.n_terms)
    else:
        out = _gaver_stehfest(F, y, spec.n_terms)
    return out * math.exp(shift * y) if shift != 0.0 else out
