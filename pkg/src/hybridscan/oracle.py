"""Desk-scale brute-force ground truth.

Grid quadrature of the low-dimensional posteriors, tensor quadrature of the
latent integrals behind the never-reject identity, kernel-symmetry tables,
and moment oracles for the samplers. Everything here is deliberately
independent of the sampling code paths it checks: inverses instead of
Cholesky solves, direct grids instead of closed forms.

All quadrature results pass a grid-doubling stability check before use and
carry the grid they were computed on.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import models as md
from .distributions import gig_logpdf
from .errors import GridError, ParameterDomainError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GridAxis:
    lower: float
    upper: float
    points: int
    log_scale: bool = False

    def __post_init__(self):
        if self.points < 32:
            raise GridError("grid axes need at least 32 points")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper) and self.upper > self.lower):
            raise GridError(f"grid bounds must be finite and ordered, got ({self.lower}, {self.upper})")

    def nodes(self):
        return np.linspace(self.lower, self.upper, self.points)


@dataclass(frozen=True)
class GridSpec:
    axes: tuple

    def __iter__(self):
        return iter(self.axes)


# ---------------------------------------------------------------------------
# Toy Student's t posterior
# ---------------------------------------------------------------------------


def _t_log_posterior_grid(model, mu, s):
    """Log posterior density over (mu, log sigma2) including the Jacobian."""
    sigma2 = np.exp(s)
    lf = -0.5 * model.m * s[None, :] - 0.5 * (model.nu + 1.0) * np.sum(
        np.log1p((model.w[:, None, None] - mu[:, None]) ** 2 / (model.nu * sigma2[None, :])), axis=0
    )
    if not model.flat_prior:
        lf = lf - 0.5 * (mu[:, None] - model.mu_prior_mean) ** 2
    return lf


@dataclass(frozen=True)
class ToyTOracle:
    """Quadrature summary of the bivariate (mu, sigma2) posterior with
    inverse-CDF tables for exact-draw initialization."""

    grid: GridSpec
    mean_mu: float
    var_mu: float
    mean_sigma2: float
    var_sigma2: float
    boundary_leak: float
    richardson_rel_change: float
    _mu_nodes: np.ndarray
    _s_nodes: np.ndarray
    _density: np.ndarray  # normalized cell density over (mu, s)
    _mu_cdf: np.ndarray
    _cond_s_cdf: np.ndarray  # per-mu-column CDF over s

    def draw(self, rng, size):
        """Approximate exact posterior draws via the marginal inverse CDF of
        mu and the conditional grid CDF of sigma2; the approximation error
        is bounded by the grid resolution."""
        u = rng.gen.random(size)
        mu = np.interp(u, self._mu_cdf, self._mu_nodes)
        cols = np.clip(np.searchsorted(self._mu_nodes, mu), 0, self._mu_nodes.size - 1)
        v = rng.gen.random(size)
        s = np.empty(size)
        for i, (col, vi) in enumerate(zip(cols, v)):
            s[i] = np.interp(vi, self._cond_s_cdf[col], self._s_nodes)
        return mu, np.exp(s)

    def mu_marginal(self):
        """(nodes, normalized marginal pdf of mu)."""
        ws = _trap_weights(self._s_nodes)
        pdf = self._density @ ws
        return self._mu_nodes, pdf / np.trapezoid(pdf, self._mu_nodes)


def _trap_weights(x):
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


def _t_grid_pass(model, mu_axis, s_axis):
    mu = mu_axis.nodes()
    s = s_axis.nodes()
    lf = _t_log_posterior_grid(model, mu, s)
    lf -= lf.max()
    dens = np.exp(lf)
    wmu, ws = _trap_weights(mu), _trap_weights(s)
    mass = float(wmu @ dens @ ws)
    dens /= mass
    # boundary leakage: mass in the outermost two rows/columns
    edge = np.zeros_like(dens, dtype=bool)
    edge[:2, :] = edge[-2:, :] = True
    edge[:, :2] = edge[:, -2:] = True
    leak = float(wmu @ (dens * edge) @ ws)
    mean_mu = float(wmu @ (mu[:, None] * dens) @ ws)
    var_mu = float(wmu @ ((mu[:, None] - mean_mu) ** 2 * dens) @ ws)
    sig = np.exp(s)[None, :]
    mean_s2 = float(wmu @ (sig * dens) @ ws)
    var_s2 = float(wmu @ ((sig - mean_s2) ** 2 * dens) @ ws)
    return dens, (mean_mu, var_mu, mean_s2, var_s2), leak


def quadrature_toy_t(model, points=257, leak_tol=1e-8, richardson_tol=1e-6, max_refits=12):
    """Normalized posterior moments and inverse-CDF tables for the toy t
    model, with iterative window widening and a grid-doubling check."""
    if model.m > 10:
        raise GridError("quadrature oracle is desk-scale only (m <= 10)")
    center = float(np.median(model.w))
    spread = float(np.std(model.w)) or 1.0
    mu_lo, mu_hi = center - 10 * spread, center + 10 * spread
    s_mid = math.log(spread**2)
    s_lo, s_hi = s_mid - 8.0, s_mid + 8.0
    mult = 12.0  # the mu tail is power-law, so the window multiplier must grow

    for _ in range(max_refits):
        mu_axis = GridAxis(mu_lo, mu_hi, points)
        s_axis = GridAxis(s_lo, s_hi, points, log_scale=True)
        dens, moments, leak = _t_grid_pass(model, mu_axis, s_axis)
        mean_mu, var_mu, mean_s2, var_s2 = moments
        mu_nodes, s_nodes = mu_axis.nodes(), s_axis.nodes()
        # require >= 8 posterior standard deviations of coverage per dimension
        sd_mu = math.sqrt(var_mu)
        ws = _trap_weights(s_nodes)
        wmu = _trap_weights(mu_nodes)
        s_marg = wmu @ dens
        mean_s = float(s_marg @ (s_nodes * ws))
        sd_s = math.sqrt(max(float(s_marg @ ((s_nodes - mean_s) ** 2 * ws)), 1e-12))
        wide_enough = (
            mu_lo < mean_mu - 8 * sd_mu
            and mu_hi > mean_mu + 8 * sd_mu
            and s_lo < mean_s - 8 * sd_s
            and s_hi > mean_s + 8 * sd_s
        )
        if leak < leak_tol and wide_enough:
            break
        mult *= 1.45
        mu_lo, mu_hi = mean_mu - mult * sd_mu, mean_mu + mult * sd_mu
        s_lo, s_hi = mean_s - 0.95 * mult * sd_s, mean_s + 0.95 * mult * sd_s
    else:
        raise GridError("toy-t quadrature window failed to stabilize")

    # Richardson stability: double the resolution, compare E[sigma2]
    fine_mu = GridAxis(mu_lo, mu_hi, 2 * points - 1)
    fine_s = GridAxis(s_lo, s_hi, 2 * points - 1, log_scale=True)
    dens_f, moments_f, _ = _t_grid_pass(model, fine_mu, fine_s)
    rel = abs(moments_f[2] - mean_s2) / abs(moments_f[2])
    if rel > richardson_tol:
        raise GridError(f"grid-doubling check failed: relative change {rel:.3g}")

    mu_nodes, s_nodes = fine_mu.nodes(), fine_s.nodes()
    wmu, ws = _trap_weights(mu_nodes), _trap_weights(s_nodes)
    mu_pdf = dens_f @ ws
    mu_cdf = np.concatenate([[0.0], np.cumsum(0.5 * (mu_pdf[1:] + mu_pdf[:-1]) * np.diff(mu_nodes))])
    mu_cdf /= mu_cdf[-1]
    cond = np.cumsum(0.5 * (dens_f[:, 1:] + dens_f[:, :-1]) * np.diff(s_nodes)[None, :], axis=1)
    cond = np.concatenate([np.zeros((dens_f.shape[0], 1)), cond], axis=1)
    cond /= cond[:, -1:]
    return ToyTOracle(
        grid=GridSpec((fine_mu, fine_s)),
        mean_mu=moments_f[0],
        var_mu=moments_f[1],
        mean_sigma2=moments_f[2],
        var_sigma2=moments_f[3],
        boundary_leak=leak,
        richardson_rel_change=rel,
        _mu_nodes=mu_nodes,
        _s_nodes=s_nodes,
        _density=dens_f,
        _mu_cdf=mu_cdf,
        _cond_s_cdf=cond,
    )


# ---------------------------------------------------------------------------
# Toy Laplace target
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyLaplaceOracle:
    mean_u: float
    mean_u2: float
    symmetry_max_abs: float
    grid: GridSpec  # the (z, z') quadrature grid
    u_nodes: np.ndarray  # reporting grid of the symmetry table


def toy_laplace_half_integrals(u):
    """Closed-form A+(u) = int_0^inf exp(-(u-z)^2/2 - z) dz and the mirror
    A-(u); their sum is sqrt(8 pi) f_U(u)."""
    u = np.asarray(u, dtype=float)
    a_plus = _SQRT_2PI * np.exp(0.5 - u) * special.ndtr(u - 1.0)
    a_minus = _SQRT_2PI * np.exp(0.5 + u) * special.ndtr(-u - 1.0)
    return a_plus, a_minus


def quadrature_toy_laplace(u_grid_half_width=6.0, n_u=15, n_z_half=160, z_half_width=30.0):
    """Moments of U by 2-D quadrature of the joint density plus the
    sandwich-kernel symmetry table.

    The z integrand has a kink at zero, so the z rule is Gauss-Legendre on
    each half-line separately. k_S(u'|u) f_U(u) is computed by a full 2-D
    (z, z') tensor quadrature of the sandwich kernel; its antisymmetric
    residual measures real numerical error of the pipeline (the kernel is
    symmetric in law).
    """
    nodes, weights = np.polynomial.legendre.leggauss(n_z_half)
    zp = 0.5 * z_half_width * (nodes + 1.0)
    wp = 0.5 * z_half_width * weights
    z = np.concatenate([-zp[::-1], zp])
    wz = np.concatenate([wp[::-1], wp])
    n_z = z.size
    # moments of U over a wide (u, z) grid; the u integrand is smooth, so a
    # plain wide trapezoid rule is spectrally accurate there
    ug = np.linspace(-z_half_width - 8, z_half_width + 8, 2001)
    wu = _trap_weights(ug)
    log_joint = -0.5 * (ug[:, None] - z[None, :]) ** 2 - np.abs(z)[None, :]
    joint = np.exp(log_joint) / math.sqrt(8.0 * math.pi)
    mass = float(wu @ joint @ wz)
    mean_u = float(wu @ (ug[:, None] * joint) @ wz) / mass
    mean_u2 = float(wu @ (ug[:, None] ** 2 * joint) @ wz) / mass

    # symmetry table on a coarse u-grid; the latent conditional is normalized
    # by quadrature while the u-marginal uses the closed-form half-line
    # integrals, so the two sides of the table follow different routes and
    # the residual measures genuine numerical error
    u = np.linspace(-u_grid_half_width, u_grid_half_width, n_u)
    cond = np.exp(-0.5 * (u[:, None] - z[None, :]) ** 2 - np.abs(z)[None, :])  # f_{Z|U} unnormalized
    norm = cond @ wz
    f_zu = cond / norm[:, None]  # rows: density of z given u
    a_plus, a_minus = toy_laplace_half_integrals(u)
    f_u = (a_plus + a_minus) / math.sqrt(8.0 * math.pi)
    same_sign = (z[:, None] > 0) == (z[None, :] > 0)
    move = same_sign * np.exp(-np.abs(z))[None, :] * wz[None, :]  # R(z, dz') weights
    emit = np.exp(-0.5 * (z[:, None] - u[None, :]) ** 2) / _SQRT_2PI  # f_{U|Z}(u'|z')
    k_s = (f_zu * wz[None, :]) @ move @ emit  # rows u, columns u'
    table = k_s * f_u[:, None]
    sym_err = float(np.max(np.abs(table - table.T)))
    zaxis = GridAxis(float(z[0]), float(z[-1]), n_z)
    return ToyLaplaceOracle(mean_u=mean_u, mean_u2=mean_u2, symmetry_max_abs=sym_err, grid=GridSpec((zaxis, zaxis)), u_nodes=u)


# ---------------------------------------------------------------------------
# Never-reject identity for the hybrid scan viewed as Metropolis-Hastings
# ---------------------------------------------------------------------------


def _t_log_target_unnorm(model, mu, sigma2):
    out = -0.5 * (model.m + 2.0) * math.log(sigma2) - 0.5 * (model.nu + 1.0) * float(
        np.sum(np.log1p((model.w - mu) ** 2 / (model.nu * sigma2)))
    )
    if not model.flat_prior:
        out += -0.5 * (mu - model.mu_prior_mean) ** 2
    return out


def _latent_tensor(model, mu, sigma2, n_nodes):
    """Generalized Gauss-Laguerre tensor for E over z ~ prod Gamma(a, b_i):
    returns (z grid of shape (m, nodes^m), log-weights of shape (nodes^m,))."""
    a = 0.5 * (model.nu + 1.0)
    rates = 0.5 * ((model.w - mu) ** 2 / sigma2 + model.nu)
    nodes, weights = special.roots_genlaguerre(n_nodes, a - 1.0)
    grids = np.meshgrid(*[nodes / b for b in rates], indexing="ij")
    z = np.stack([g.ravel() for g in grids])  # (m, n^m)
    lw = np.meshgrid(*[np.log(weights)] * model.m, indexing="ij")
    log_w = sum(g.ravel() for g in lw) - model.m * math.lgamma(a)
    return z, log_w


def _t_move_density_mu(model, mu_to, mu_from, sigma2, n_nodes):
    """c(mu_to | mu_from; sigma2): the one-sweep move density of the
    mu-update branch, by tensor quadrature over the latent vector."""
    z, log_w = _latent_tensor(model, mu_from, sigma2, n_nodes)
    z_dot = z.sum(axis=0)
    zw_sum = (z * model.w[:, None]).sum(axis=0)
    if model.flat_prior:
        mean, var = zw_sum / z_dot, sigma2 / z_dot
    else:
        prec = z_dot / sigma2 + 1.0
        mean, var = (zw_sum / sigma2 + model.mu_prior_mean) / prec, 1.0 / prec
    log_pdf = -0.5 * np.log(2.0 * math.pi * var) - 0.5 * (mu_to - mean) ** 2 / var
    return float(special.logsumexp(log_w + log_pdf))


def _t_move_density_sigma2(model, s2_to, s2_from, mu, n_nodes):
    z, log_w = _latent_tensor(model, mu, s2_from, n_nodes)
    shape = 0.5 * model.m
    scale = 0.5 * ((model.w - mu) ** 2)[:, None]
    ig_scale = (z * scale).sum(axis=0)
    log_pdf = shape * np.log(ig_scale) - math.lgamma(shape) - (shape + 1.0) * math.log(s2_to) - ig_scale / s2_to
    return float(special.logsumexp(log_w + log_pdf))


def hastings_ratio_check(model, pairs=None, n_nodes=40):
    """max |r(x, x') - 1| over state pairs, where r is the Hastings ratio of
    the one-branch move against the conditional target.

    The four ingredients (two unnormalized target evaluations, two move
    densities by tensor quadrature) follow independent numerical routes, so
    a unit ratio is a genuine consistency check of the conditional laws.
    """
    if model.m > 5:
        raise GridError("latent tensor quadrature is desk-scale only (m <= 5)")
    if pairs is None:
        pairs = default_hastings_pairs(model)
    worst = 0.0
    for kind, x_from, x_to, fixed in pairs:
        if kind == "mu":
            log_r = (
                _t_log_target_unnorm(model, x_to, fixed)
                + _t_move_density_mu(model, x_from, x_to, fixed, n_nodes)
                - _t_log_target_unnorm(model, x_from, fixed)
                - _t_move_density_mu(model, x_to, x_from, fixed, n_nodes)
            )
        elif kind == "sigma2":
            if x_from <= 0 or x_to <= 0:
                raise ParameterDomainError("sigma2 pairs must be positive")
            log_r = (
                _t_log_target_unnorm(model, fixed, x_to)
                + _t_move_density_sigma2(model, x_from, x_to, fixed, n_nodes)
                - _t_log_target_unnorm(model, fixed, x_from)
                - _t_move_density_sigma2(model, x_to, x_from, fixed, n_nodes)
            )
        else:
            raise ParameterDomainError(f"unknown pair kind {kind!r}")
        worst = max(worst, abs(math.exp(log_r) - 1.0))
    return worst


def default_hastings_pairs(model, n_each=25):
    """25 (mu, mu') pairs on a grid slice at sigma2 = 1 plus 25 (sigma2,
    sigma2') pairs at mu fixed to the data median."""
    center = float(np.median(model.w))
    spread = float(np.std(model.w)) or 1.0
    side = int(math.isqrt(n_each))
    mu_pts = np.linspace(center - 1.5 * spread, center + 1.5 * spread, side + 1)
    pairs = []
    for i in range(side):
        for j in range(side):
            pairs.append(("mu", float(mu_pts[i]), float(mu_pts[j + 1]), 1.0))
    s2_pts = np.exp(np.linspace(math.log(0.3 * spread**2), math.log(3.0 * spread**2), side + 1))
    for i in range(side):
        for j in range(side):
            pairs.append(("sigma2", float(s2_pts[i]), float(s2_pts[j + 1]), center))
    return pairs[: 2 * n_each]


# ---------------------------------------------------------------------------
# Scalar moment oracles
# ---------------------------------------------------------------------------


def gig_moment_numeric(params, order, rel_tol=1e-9):
    """E[V^order] under GIG(zeta, xi, psi) by adaptive quadrature on the log
    scale (the integrand has heavy right tails in the raw variable)."""
    if order < 0 or int(order) != order:
        raise ParameterDomainError(f"order must be a nonnegative integer, got {order}")

    def integrand(t):
        return math.exp(order * t + gig_logpdf(math.exp(t), params) + t)

    mode = math.log(max(params.psi / max(1.0, abs(params.zeta)), 1e-280)) if params.zeta < 0 else 0.0
    lo = min(-50.0, mode - 80.0)
    value, abserr = integrate.quad(integrand, lo, 60.0, limit=400)
    if value <= 0 or abserr > max(rel_tol * abs(value), 1e-13):
        raise GridError(f"gig moment quadrature did not converge (value={value}, abserr={abserr})")
    return value


# ---------------------------------------------------------------------------
# Mixed-model Gaussian conditional via the explicit block formulas
# ---------------------------------------------------------------------------


def glmm_block_moments(model, lam, tau):
    """(Theta, Sigma) of theta | lambda, tau, y from the explicit
    T/M/Q block expressions, as an independent cross-check of the
    precision-form computation."""
    X, Z, y = model.X, model.Z, model.y
    lam0 = lam[0]
    D_tau_inv = np.diag(1.0 / np.asarray(tau, dtype=float))
    D_inv = np.diag(np.repeat(np.asarray(lam[1:], dtype=float), model.q_blocks))
    T = lam0 * (X.T @ X + D_tau_inv)
    T_inv = np.linalg.inv(T)
    M = np.eye(model.N) - lam0 * X @ T_inv @ X.T
    Q = lam0 * Z.T @ M @ Z + D_inv
    Q_inv = np.linalg.inv(Q)
    top = lam0 * T_inv @ X.T @ y - lam0**2 * T_inv @ X.T @ Z @ Q_inv @ Z.T @ M @ y
    bottom = lam0 * Q_inv @ Z.T @ M @ y
    theta_mean = np.concatenate([top, bottom])
    upper_left = T_inv + lam0**2 * T_inv @ X.T @ Z @ Q_inv @ Z.T @ X @ T_inv
    upper_right = -lam0 * T_inv @ X.T @ Z @ Q_inv
    sigma = np.block([[upper_left, upper_right], [upper_right.T, Q_inv]])
    return theta_mean, sigma
