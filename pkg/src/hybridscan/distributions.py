"""Random-variate generation and density evaluation for the conditional laws.

Everything takes an explicit :class:`RngStream`, so all sampling is pure
given the stream and safe for concurrent use with distinct streams.
Inverse-gamma convention throughout the package: IG(a, b) is the law of
1/G for G ~ Gamma(a, rate=b), with mean b / (a - 1).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import special

from .errors import NumericalDegeneracyError, ParameterDomainError

_U64_MAX = 2**64 - 1


@dataclass
class RngStream:
    """A named, reproducible random stream.

    The same (seed, stream_id) pair always yields the bit-identical variate
    sequence; distinct stream_ids never share state.
    """

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not (0 <= int(value) <= _U64_MAX):
                raise ParameterDomainError(f"{name} must be a 64-bit unsigned integer, got {value}")
        self.gen = np.random.default_rng(np.random.SeedSequence([int(self.seed), int(self.stream_id)]))

    def substream(self, stream_id):
        """Independent stream sharing this stream's seed."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class GigParams:
    """Parameters (zeta, xi, psi) of the generalized inverse Gaussian law.

    Density proportional to v^(zeta-1) * exp(-(xi*v + psi/v)/2) on v > 0.
    """

    zeta: float
    xi: float
    psi: float

    def __post_init__(self):
        if not (self.xi > 0 and self.psi > 0):
            raise ParameterDomainError(f"GIG requires xi > 0 and psi > 0, got xi={self.xi}, psi={self.psi}")

    @property
    def omega(self):
        return math.sqrt(self.xi * self.psi)

    def mean(self):
        """E[V] = sqrt(psi/xi) * K_{zeta+1}(omega) / K_zeta(omega)."""
        w = self.omega
        log_ratio = log_bessel_k(self.zeta + 1.0, w) - log_bessel_k(self.zeta, w)
        return math.sqrt(self.psi / self.xi) * math.exp(log_ratio)


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def bessel_k(order, x):
    """Modified Bessel function of the second kind, K_order(x), x > 0."""
    xarr = np.asarray(x, dtype=float)
    if np.any(xarr <= 0) or not np.all(np.isfinite(xarr)):
        raise ParameterDomainError(f"bessel_k requires x > 0, got {x}")
    out = special.kv(order, xarr)
    return float(out) if np.isscalar(x) else out


def log_bessel_k(order, x):
    """log K_order(x), stable for small x and large |order|.

    Uses the exponentially scaled kve where it is representable and falls
    back to the small-argument form K_v(x) ~ Gamma(|v|)/2 * (2/x)^|v|.
    """
    xarr = np.asarray(x, dtype=float)
    if np.any(xarr <= 0) or not np.all(np.isfinite(xarr)):
        raise ParameterDomainError(f"log_bessel_k requires x > 0, got {x}")
    order_arr = np.broadcast_to(np.asarray(order, dtype=float), xarr.shape)
    with np.errstate(over="ignore", divide="ignore"):
        out = np.log(special.kve(order_arr, xarr)) - xarr
    bad = ~np.isfinite(out)
    if np.any(bad):
        v = np.abs(order_arr[bad])
        if np.any(v == 0):
            raise NumericalDegeneracyError("log_bessel_k failed for order 0")
        out = np.array(out, dtype=float)
        out[bad] = special.gammaln(v) - math.log(2.0) + v * (math.log(2.0) - np.log(xarr[bad]))
    return float(out) if np.isscalar(x) and np.isscalar(order) else out


def gig_logpdf(v, params):
    """Log density of GIG(zeta, xi, psi) at v (vectorized), -inf off support."""
    p = params
    varr = np.asarray(v, dtype=float)
    log_norm = 0.5 * p.zeta * (math.log(p.xi) - math.log(p.psi)) - math.log(2.0) - log_bessel_k(p.zeta, p.omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            varr > 0,
            log_norm + (p.zeta - 1.0) * np.log(varr) - 0.5 * (p.xi * varr + p.psi / varr),
            -np.inf,
        )
    return float(out) if np.isscalar(v) else out


# ---------------------------------------------------------------------------
# Scalar-family samplers
# ---------------------------------------------------------------------------


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draw(s) with mean shape/rate."""
    shape_a = np.asarray(shape, dtype=float)
    rate_a = np.asarray(rate, dtype=float)
    if np.any(shape_a <= 0) or np.any(rate_a <= 0):
        raise ParameterDomainError(f"gamma requires shape > 0 and rate > 0, got {shape}, {rate}")
    return rng.gen.gamma(shape_a, 1.0 / rate_a, size=size)


def sample_inverse_gamma(shape, scale, rng, size=None):
    """IG(shape, scale) draw(s): reciprocal of Gamma(shape, rate=scale)."""
    return 1.0 / sample_gamma(shape, scale, rng, size=size)


def sample_f(nu1, nu2, rng, size=None):
    """F(nu1, nu2) draw(s)."""
    if not (nu1 > 0 and nu2 > 0):
        raise ParameterDomainError(f"F requires positive degrees of freedom, got ({nu1}, {nu2})")
    return rng.gen.f(nu1, nu2, size=size)


# ---------------------------------------------------------------------------
# Generalized inverse Gaussian sampler
# ---------------------------------------------------------------------------
#
# Ratio-of-uniforms with mode shift, run on the log scale: with Y = log V and
# omega = sqrt(xi*psi), the standardized variate has density proportional to
# exp(zeta*y - omega*cosh(y)), which is log-concave for every zeta, so a single
# method covers all orders and arbitrarily small omega.


_LN2 = math.log(2.0)


def _log_sinh_abs(t):
    # log|sinh t| at |t|; t = 0 gives -inf
    with np.errstate(divide="ignore"):
        return t + np.log1p(-np.exp(-2.0 * t)) - _LN2


def _log_cosh(t):
    t = np.abs(t)
    return t + np.log1p(np.exp(-2.0 * t)) - _LN2


def _gig_log_h(delta, y_star, zeta, log_omega):
    """log h(y* + delta) - log h(y*) for h(y) = exp(zeta*y - omega*cosh(y)).

    Slow, fully stable path: omega*(cosh y - cosh y*) is evaluated as
    2*omega*sinh((y+y*)/2)*sinh((y-y*)/2) in log magnitude so subnormal
    omega (|y*| approaching 700) stays finite; a positive overflow is a
    certain rejection and is capped.
    """
    s1 = y_star + 0.5 * delta
    s2 = 0.5 * delta
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_mag = _LN2 + log_omega + _log_sinh_abs(np.abs(s1)) + _log_sinh_abs(np.abs(s2))
        sign = np.where((s1 > 0) == (s2 > 0), 1.0, -1.0)
        drop = sign * np.exp(np.minimum(log_mag, 745.0))
    return zeta * delta - np.where(np.isnan(drop), 0.0, drop)


def _gig_log_h_direct(delta, y_star, zeta, omega, kappa0):
    # kappa0 = omega*cosh(y_star) = hypot(omega, zeta); overflow of cosh at
    # extreme |delta| lands on -inf, a correct certain-rejection value
    with np.errstate(over="ignore", invalid="ignore"):
        return zeta * delta - (omega * np.cosh(y_star + delta) - kappa0)


_GIG_DELTA_MIN = 1.0e-9
_GIG_DELTA_MAX = 1.0e13
# direct cosh/sinh evaluation is exact-enough and overflow-free inside these
_GIG_FAST_OMEGA = 1.0e-290
_GIG_FAST_KAPPA = 1.0e6


def _gig_rou_edges(y_star, zeta, log_omega, omega, kappa0, fast):
    """Mode-shifted ratio-of-uniforms box for the standardized log-scale density.

    The v-bound is 1 (the density is normalized to 1 at its mode); the
    returned (u_lo, u_hi) cover [inf, sup] of (y - y*) * sqrt(h(y)/h(y*)).
    Each exact edge solves delta * |(log h)'| = 2; we bisect in log-delta on
    the monotone phi(delta) = delta * |zeta - omega*sinh(y* +- delta)|, then
    take the tangent-line bound of the concave log density at the bracket
    foot. The bound contains the exact edge for any tangent point, so a
    coarse bracket costs only acceptance rate, never correctness. Both sides
    are solved in one stacked pass.
    """
    n = y_star.shape[0]
    side = np.concatenate([np.full(n, -1.0), np.full(n, 1.0)])
    ys2 = np.concatenate([y_star, y_star])

    if fast:
        om2 = np.concatenate([omega, omega])

        def log_phi(log_delta):
            delta = np.exp(log_delta)
            with np.errstate(over="ignore", invalid="ignore"):
                phi = side * delta * (om2 * np.sinh(ys2 + side * delta) - zeta)
                return np.where(np.isnan(phi), np.inf, np.log(phi))
    else:
        lw2 = np.concatenate([log_omega, log_omega])

        def log_phi(log_delta):
            delta = np.exp(log_delta)
            return log_delta + _LN2 + lw2 + _log_cosh(ys2 + side * 0.5 * delta) + _log_sinh_abs(0.5 * delta)

    lo = np.full(2 * n, math.log(_GIG_DELTA_MIN))
    hi = np.full(2 * n, math.log(_GIG_DELTA_MAX))
    for _ in range(11):
        mid = 0.5 * (lo + hi)
        above = log_phi(mid) > _LN2
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    t = np.exp(lo)
    lphi = log_phi(lo)
    if fast:
        lh = _gig_log_h_direct(side * t, ys2, zeta, om2, np.concatenate([kappa0, kappa0]))
    else:
        lh = _gig_log_h(side * t, ys2, zeta, lw2)
    # tangent bound: sup over delta of delta*sqrt(h) <= (2t/phi) * exp((l + phi - 2)/2)
    phi = np.exp(np.minimum(lphi, 700.0))
    edge = np.exp(_LN2 + lo - lphi + 0.5 * (lh + phi - 2.0))
    # root below the bracket (extremely peaked density): delta_min itself is safe
    # because delta*sqrt(h) <= delta there and h is decreasing past the root
    edge = np.where(lphi > _LN2, t, edge)
    return -edge[:n], edge[n:]


def _gig_setup(zeta, log_omega):
    with np.errstate(over="ignore"):
        omega = np.exp(log_omega)
    kappa0 = np.hypot(omega, zeta)  # = omega*cosh(y_star)
    # mode of the log-scale density solves zeta = omega * sinh(y*)
    with np.errstate(over="ignore"):
        y_star = np.arcsinh(zeta * np.exp(-log_omega))
    fast = bool(np.all(omega > _GIG_FAST_OMEGA)) and bool(np.all(kappa0 < _GIG_FAST_KAPPA))
    return y_star, omega, kappa0, fast


def _gig_standard_draws(y_star, zeta, log_omega, omega, kappa0, fast, rng, max_rounds=1000):
    """Log-scale draws from exp(zeta*y - omega*cosh y) for per-element params."""
    u_lo, u_hi = _gig_rou_edges(y_star, zeta, log_omega, omega, kappa0, fast)
    n = y_star.shape[0]
    y = np.empty(n)
    todo = np.arange(n)
    for _ in range(max_rounds):
        m = todo.size
        u = u_lo[todo] + (u_hi[todo] - u_lo[todo]) * rng.gen.random(m)
        v = rng.gen.random(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = u / v
        # |delta| beyond 1e14 is a certain rejection
        delta = np.where(np.abs(delta) < 1.0e14, delta, np.inf)
        if fast:
            logh = _gig_log_h_direct(delta, y_star[todo], zeta, omega[todo], kappa0[todo])
        else:
            logh = _gig_log_h(delta, y_star[todo], zeta, log_omega[todo])
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = 2.0 * np.log(v) <= logh
        hit = todo[accept]
        y[hit] = y_star[hit] + delta[accept]
        todo = todo[~accept]
        if todo.size == 0:
            return y
    raise NumericalDegeneracyError("GIG ratio-of-uniforms failed to accept; parameters degenerate")


def sample_gig(params, rng, size=None):
    """Draw(s) from GIG(zeta, xi, psi) via mode-shifted ratio of uniforms.

    ``params`` is a :class:`GigParams`; ``size=None`` returns a scalar.
    For heterogeneous psi use :func:`sample_gig_vector`.
    """
    n = 1 if size is None else int(size)
    zeta = float(params.zeta)
    log_omega = np.array([0.5 * (math.log(params.xi) + math.log(params.psi))])
    y_star, omega, kappa0, fast = _gig_setup(zeta, log_omega)
    u_lo, u_hi = _gig_rou_edges(y_star, zeta, log_omega, omega, kappa0, fast)
    u_lo, u_hi = float(u_lo[0]), float(u_hi[0])
    ys, om, k0, lw = float(y_star[0]), float(omega[0]), float(kappa0[0]), float(log_omega[0])

    shift = 0.5 * (math.log(params.psi) - math.log(params.xi))
    out = np.empty(n)
    filled = 0
    for _ in range(1000):
        m = int(1.5 * (n - filled)) + 16
        u = u_lo + (u_hi - u_lo) * rng.gen.random(m)
        v = rng.gen.random(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = u / v
        delta = np.where(np.abs(delta) < 1.0e14, delta, np.inf)
        logh = _gig_log_h_direct(delta, ys, zeta, om, k0) if fast else _gig_log_h(delta, ys, zeta, lw)
        with np.errstate(divide="ignore", invalid="ignore"):
            acc = 2.0 * np.log(v) <= logh
        take = delta[acc][: n - filled]
        out[filled : filled + take.size] = np.exp(ys + take + shift)
        filled += take.size
        if filled == n:
            return float(out[0]) if size is None else out
    raise NumericalDegeneracyError("GIG ratio-of-uniforms failed to accept; parameters degenerate")


def sample_gig_vector(zeta, xi, psi, rng):
    """Vector of GIG(zeta, xi_j, psi_j) draws; zeta scalar, xi/psi broadcast.

    This is the shape of the latent updates: one draw per coefficient or
    observation, common order, heterogeneous scale parameters.
    """
    xi, psi = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(psi, dtype=float))
    if np.any(xi <= 0) or np.any(psi <= 0) or not (np.all(np.isfinite(psi)) and np.all(np.isfinite(xi))):
        raise ParameterDomainError(f"GIG requires xi > 0 and psi > 0, got xi={xi}, psi={psi}")
    zeta = float(zeta)
    log_omega = 0.5 * (np.log(xi) + np.log(psi))
    y_star, omega, kappa0, fast = _gig_setup(zeta, log_omega)
    y = _gig_standard_draws(y_star, zeta, log_omega, omega, kappa0, fast, rng)
    return np.exp(y + 0.5 * (np.log(psi) - np.log(xi)))


# ---------------------------------------------------------------------------
# Multivariate normal
# ---------------------------------------------------------------------------


def cholesky_with_jitter(matrix):
    """Lower Cholesky factor, escalating diagonal jitter from 1e-12 to 1e-6
    of the mean diagonal before giving up."""
    base = float(np.mean(np.diag(matrix)))
    try:
        return np.linalg.cholesky(matrix), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(matrix.shape[0])
    jitter = 1.0e-12
    while jitter <= 1.0e-6 * (1.0 + 1e-9):
        try:
            return np.linalg.cholesky(matrix + jitter * base * eye), jitter * base
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalDegeneracyError("matrix not factorizable within the jitter policy")


def sample_mvn(mean, covariance, rng):
    """Multivariate normal draw with the given mean and covariance."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise ParameterDomainError(f"covariance shape {cov.shape} incompatible with mean of length {mean.size}")
    if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
        raise ParameterDomainError("covariance must be symmetric")
    chol, _ = cholesky_with_jitter(cov)
    return mean + chol @ rng.gen.standard_normal(mean.size)


def sample_mvn_precision(shift, precision, rng):
    """Draw from N(P^{-1} shift, P^{-1}) given the precision matrix P.

    Returns (draw, mean); both are needed by callers that track moments.
    """
    shift = np.asarray(shift, dtype=float)
    chol, _ = cholesky_with_jitter(np.asarray(precision, dtype=float))
    mean = sla.cho_solve((chol, True), shift)
    noise = sla.solve_triangular(chol, rng.gen.standard_normal(shift.size), lower=True, trans="T")
    return mean + noise, mean


def mvn_moments_from_precision(shift, precision):
    """(mean, covariance) of N(P^{-1} shift, P^{-1})."""
    chol, _ = cholesky_with_jitter(np.asarray(precision, dtype=float))
    mean = sla.cho_solve((chol, True), np.asarray(shift, dtype=float))
    cov = sla.cho_solve((chol, True), np.eye(len(mean)))
    return mean, cov


# ---------------------------------------------------------------------------
# Conditional-law descriptors
# ---------------------------------------------------------------------------
#
# Small frozen records produced by the model modules. They carry the
# parameters of a conditional law so tests can evaluate log densities while
# the chain kernels sample from the same parameterization.


@dataclass(frozen=True)
class GammaLaw:
    shape: object
    rate: object

    def sample(self, rng, size=None):
        return sample_gamma(self.shape, self.rate, rng, size=size)

    def logpdf(self, x):
        a, b = np.asarray(self.shape, float), np.asarray(self.rate, float)
        x = np.asarray(x, float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, a * np.log(b) - special.gammaln(a) + (a - 1) * np.log(x) - b * x, -np.inf)

    def mean(self):
        return np.asarray(self.shape, float) / np.asarray(self.rate, float)


@dataclass(frozen=True)
class InvGammaLaw:
    shape: object
    scale: object

    def sample(self, rng, size=None):
        return sample_inverse_gamma(self.shape, self.scale, rng, size=size)

    def logpdf(self, x):
        a, b = np.asarray(self.shape, float), np.asarray(self.scale, float)
        x = np.asarray(x, float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(x) - b / x, -np.inf)


@dataclass(frozen=True)
class NormalLaw:
    mean: object
    var: object

    def sample(self, rng, size=None):
        return self.mean + np.sqrt(self.var) * rng.gen.standard_normal() if size is None else rng.gen.normal(self.mean, np.sqrt(self.var), size=size)

    def logpdf(self, x):
        return -0.5 * np.log(2.0 * np.pi * self.var) - 0.5 * (np.asarray(x, float) - self.mean) ** 2 / self.var


@dataclass(frozen=True)
class MvnPrecisionLaw:
    """N(P^{-1} shift, P^{-1}) in precision form."""

    shift: np.ndarray
    precision: np.ndarray

    def sample(self, rng):
        draw, _ = sample_mvn_precision(self.shift, self.precision, rng)
        return draw

    def moments(self):
        return mvn_moments_from_precision(self.shift, self.precision)


@dataclass(frozen=True)
class GigLaw:
    """Independent GIG(zeta, xi_j, psi_j) components with a shared order."""

    zeta: float
    xi: object
    psi: object

    def sample(self, rng):
        return sample_gig_vector(self.zeta, self.xi, self.psi, rng)

    def logpdf(self, v):
        v = np.asarray(v, float)
        xi, psi = np.broadcast_arrays(np.asarray(self.xi, float), np.asarray(self.psi, float))
        return np.array([gig_logpdf(vj, GigParams(self.zeta, xj, pj)) for vj, xj, pj in zip(v, xi, psi)])

    def mean(self):
        xi, psi = np.broadcast_arrays(np.asarray(self.xi, float), np.asarray(self.psi, float))
        return np.array([GigParams(self.zeta, xj, pj).mean() for xj, pj in zip(xi, psi)])
