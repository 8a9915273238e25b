"""Model definitions, full-conditional laws, latent expectations, and
bottom-up data simulation.

Four targets are supported:

* a location-scale model for heavy-tailed (Student's t) observations with
  either a flat or a normal-location prior,
* a general linear mixed model with a normal-gamma shrinkage prior on the
  regression coefficients,
* a linear regression model whose errors are scale mixtures of normals,
* a toy Laplace-mixture target used to demonstrate sandwich moves.

Model objects are immutable after construction and all conditional-law
computation is pure, so they are safe for concurrent read access.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    GammaLaw,
    GigLaw,
    InvGammaLaw,
    MvnPrecisionLaw,
    NormalLaw,
    log_bessel_k,
)
from .errors import (
    ConfigurationError,
    ParameterDomainError,
    RejectionCapError,
    UnsupportedOperationError,
)

# psi/xi values below this are clamped (and counted) rather than rejected;
# the event has probability zero under the chain but can occur at
# user-supplied initial states with exactly-zero coefficients
GIG_PAR_FLOOR = 1.0e-300

REJECTION_CAP = 10**6


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _hash_arrays(*parts):
    h = hashlib.sha1()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(p.tobytes())
        else:
            h.update(repr(p).encode())
    return h.hexdigest()[:12]


# ---------------------------------------------------------------------------
# Student's t location-scale model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudentTModel:
    """Observations w from a location-scale t distribution with known
    degrees of freedom.

    ``mu_prior_mean=None`` selects the flat prior 1/sigma^2 on (mu, sigma^2);
    a float selects the proper prior N(mu_prior_mean, 1) on mu (still 1/sigma^2
    on the scale).
    """

    w: np.ndarray
    nu: float
    mu_prior_mean: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "w", _readonly(self.w))
        if self.w.ndim != 1 or self.w.size < 2:
            raise ConfigurationError("need at least two observations for a proper posterior")
        if not self.nu > 0:
            raise ParameterDomainError(f"degrees of freedom must be positive, got {self.nu}")

    @property
    def m(self):
        return self.w.size

    @property
    def flat_prior(self):
        return self.mu_prior_mean is None

    @property
    def model_id(self):
        return "studentt-" + _hash_arrays(self.w, self.nu, self.mu_prior_mean)

    @property
    def param_names(self):
        return ["mu", "sigma2"]


@dataclass(frozen=True)
class TLatentStats:
    """Latent summary (z., theta(z,w), v(z,w)) for the t model."""

    z: np.ndarray
    z_dot: float
    theta_zw: float
    v_zw: float

    @classmethod
    def from_latents(cls, z, w):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ParameterDomainError("latents must be strictly positive")
        z_dot = float(np.sum(z))
        theta = float(np.sum(z * w) / z_dot)
        v = float(np.sum(z * (w - theta) ** 2) / z_dot)
        return cls(z=z, z_dot=z_dot, theta_zw=theta, v_zw=max(v, 0.0))


@dataclass(frozen=True)
class TConditionals:
    latent: GammaLaw
    mu: NormalLaw | None = None
    sigma2: InvGammaLaw | None = None
    sigma2_marginal: InvGammaLaw | None = None


def t_latent_law(model, mu, sigma2):
    """z_i | mu, sigma2: independent Gamma((nu+1)/2, ((w_i-mu)^2/sigma2 + nu)/2)."""
    if not sigma2 > 0:
        raise ParameterDomainError(f"sigma2 must be positive, got {sigma2}")
    rates = 0.5 * ((model.w - mu) ** 2 / sigma2 + model.nu)
    return GammaLaw(shape=0.5 * (model.nu + 1.0), rate=rates)


def t_mu_law(model, sigma2, stats):
    """mu | sigma2, z under either prior."""
    if not sigma2 > 0:
        raise ParameterDomainError(f"sigma2 must be positive, got {sigma2}")
    if model.flat_prior:
        return NormalLaw(mean=stats.theta_zw, var=sigma2 / stats.z_dot)
    prec = stats.z_dot / sigma2 + 1.0
    mean = (stats.z_dot * stats.theta_zw / sigma2 + model.mu_prior_mean) / prec
    return NormalLaw(mean=mean, var=1.0 / prec)


def t_sigma2_law(model, mu, stats):
    """sigma2 | mu, z ~ IG(m/2, sum z_i (w_i - mu)^2 / 2); same under both priors."""
    scale = 0.5 * float(np.sum(stats.z * (model.w - mu) ** 2))
    return InvGammaLaw(shape=0.5 * model.m, scale=scale)


def t_sigma2_marginal_law(model, stats):
    """sigma2 | z with mu integrated out; the first half of the two-block
    joint draw, so only defined under the flat prior."""
    if not model.flat_prior:
        raise ConfigurationError("joint (mu, sigma2) | z draw is only available under the flat prior")
    return InvGammaLaw(shape=0.5 * (model.m - 1.0), scale=0.5 * stats.z_dot * stats.v_zw)


def t_conditionals(model, mu, sigma2, z=None):
    """Conditional-law descriptors at (mu, sigma2), plus the parameter
    conditionals when the latent vector is supplied."""
    latent = t_latent_law(model, mu, sigma2)
    if z is None:
        return TConditionals(latent=latent)
    stats = TLatentStats.from_latents(z, model.w)
    return TConditionals(
        latent=latent,
        mu=t_mu_law(model, sigma2, stats),
        sigma2=t_sigma2_law(model, mu, stats),
        sigma2_marginal=t_sigma2_marginal_law(model, stats) if model.flat_prior else None,
    )


def t_initial_state(model, rng):
    # the scale prior is improper, so the default start is data-driven
    mu = float(np.mean(model.w))
    sigma2 = float(np.var(model.w)) or 1.0
    return mu, sigma2


# ---------------------------------------------------------------------------
# General linear mixed model with a normal-gamma shrinkage prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlmmHyper:
    a0: float
    b0: float
    a: np.ndarray  # shape (m,), gammas for the random-factor precisions
    b: np.ndarray
    c: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "a", _readonly(np.atleast_1d(self.a)))
        object.__setattr__(self, "b", _readonly(np.atleast_1d(self.b)))
        vals = [self.a0, self.b0, self.c, self.d, *self.a, *self.b]
        if not all(v > 0 for v in vals):
            raise ParameterDomainError("all hyperparameters must be strictly positive")
        if self.a.shape != self.b.shape:
            raise ConfigurationError("a and b must have one entry per random factor")


@dataclass(frozen=True)
class GlmmModel:
    """y = X beta + Z u + e with gamma priors on the precisions and the
    normal-gamma shrinkage prior on beta. ``y=None`` is a design-only
    skeleton awaiting simulation."""

    X: np.ndarray
    Z_blocks: tuple
    hyper: GlmmHyper
    y: np.ndarray | None = None
    Z: np.ndarray = field(init=False, repr=False, compare=False)
    W: np.ndarray = field(init=False, repr=False, compare=False)
    WtW: np.ndarray = field(init=False, repr=False, compare=False)
    Wty: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "X", _readonly(self.X))
        object.__setattr__(self, "Z_blocks", tuple(_readonly(zb) for zb in self.Z_blocks))
        if self.X.ndim != 2 or not self.Z_blocks:
            raise ConfigurationError("X must be a matrix and at least one random-factor block is required")
        N = self.X.shape[0]
        if any(zb.ndim != 2 or zb.shape[0] != N for zb in self.Z_blocks):
            raise ConfigurationError("every Z block must have the same number of rows as X")
        if len(self.Z_blocks) != self.hyper.a.size:
            raise ConfigurationError("number of Z blocks must match the number of (a_i, b_i) pairs")
        Z = np.hstack(self.Z_blocks)
        W = np.hstack([self.X, Z])
        object.__setattr__(self, "Z", _readonly(Z))
        object.__setattr__(self, "W", _readonly(W))
        object.__setattr__(self, "WtW", _readonly(W.T @ W))
        if self.y is not None:
            object.__setattr__(self, "y", _readonly(self.y))
            if self.y.shape != (N,):
                raise ConfigurationError(f"y must have length {N}")
            object.__setattr__(self, "Wty", _readonly(W.T @ self.y))
        else:
            object.__setattr__(self, "Wty", None)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q_blocks(self):
        return tuple(zb.shape[1] for zb in self.Z_blocks)

    @property
    def q(self):
        return sum(self.q_blocks)

    @property
    def n_factors(self):
        return len(self.Z_blocks)

    @property
    def model_id(self):
        return "glmm-" + _hash_arrays(
            self.X,
            *self.Z_blocks,
            self.y if self.y is not None else "skeleton",
            self.hyper.a0,
            self.hyper.b0,
            self.hyper.a,
            self.hyper.b,
            self.hyper.c,
            self.hyper.d,
        )

    @property
    def param_names(self):
        return (
            [f"beta_{j+1}" for j in range(self.p)]
            + [f"u_{k+1}" for k in range(self.q)]
            + [f"lambda_{i}" for i in range(self.n_factors + 1)]
        )

    def with_data(self, y):
        return GlmmModel(X=self.X, Z_blocks=self.Z_blocks, hyper=self.hyper, y=y)

    def rank_x(self):
        """Numerical rank of X by singular-value thresholding."""
        s = np.linalg.svd(self.X, compute_uv=False)
        if s.size == 0:
            return 0
        tol = max(self.X.shape) * s[0] * 2.0**-52
        return int(np.sum(s > tol))


@dataclass(frozen=True)
class GlmmState:
    theta: np.ndarray  # (beta^T u^T)^T, length p + q
    lam: np.ndarray  # precisions (lambda_0 .. lambda_m)
    tau: np.ndarray  # local shrinkage scales, length p

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        if np.any(self.lam <= 0) or np.any(self.tau <= 0):
            raise ParameterDomainError("precision and scale components must be strictly positive")


@dataclass(frozen=True)
class GlmmConditionals:
    tau: GigLaw
    lam: GammaLaw
    theta: MvnPrecisionLaw
    n_psi_clamped: int


def glmm_tau_law(model, state):
    """tau_j | theta, lambda, y: independent GIG(c - 1/2, 2d, lambda_0 beta_j^2)."""
    beta = state.theta[: model.p]
    psi = state.lam[0] * beta**2
    n_clamped = int(np.sum(psi < GIG_PAR_FLOOR))
    psi = np.maximum(psi, GIG_PAR_FLOOR)
    return GigLaw(zeta=model.hyper.c - 0.5, xi=2.0 * model.hyper.d, psi=psi), n_clamped


def glmm_lambda_law(model, state):
    """lambda | theta, tau, y: independent gammas (error precision first)."""
    h = model.hyper
    beta = state.theta[: model.p]
    resid2 = float(np.sum((model.y - model.W @ state.theta) ** 2))
    btb = float(np.sum(beta**2 / state.tau))
    shapes = np.concatenate([[0.5 * (model.N + model.p + 2.0 * h.a0)], 0.5 * (np.array(model.q_blocks, dtype=float) + 2.0 * h.a)])
    u = state.theta[model.p :]
    u_ss = [float(np.sum(u[s : s + qi] ** 2)) for s, qi in zip(np.cumsum((0,) + model.q_blocks[:-1]), model.q_blocks)]
    rates = np.concatenate([[0.5 * resid2 + 0.5 * btb + h.b0], 0.5 * np.array(u_ss) + h.b])
    return GammaLaw(shape=shapes, rate=rates)


def glmm_theta_law(model, state):
    """theta | lambda, tau, y in precision form:
    P = lambda_0 W^T W + blockdiag(lambda_0/tau, repeated lambda_i)."""
    lam0 = state.lam[0]
    P = lam0 * model.WtW
    idx = np.arange(model.p)
    P[idx, idx] += lam0 / state.tau
    lam_rep = np.repeat(state.lam[1:], model.q_blocks)
    idx_u = np.arange(model.p, model.p + model.q)
    P[idx_u, idx_u] += lam_rep
    return MvnPrecisionLaw(shift=lam0 * model.Wty, precision=P)


def glmm_conditionals(model, state):
    if model.y is None:
        raise ConfigurationError("model has no data; simulate or attach y first")
    tau_law, n_clamped = glmm_tau_law(model, state)
    return GlmmConditionals(
        tau=tau_law,
        lam=glmm_lambda_law(model, state),
        theta=glmm_theta_law(model, state),
        n_psi_clamped=n_clamped,
    )


def glmm_initial_state(model, rng):
    """Prior draw of (theta, lambda, tau)."""
    h = model.hyper
    tau = rng.gen.gamma(h.c, 1.0 / h.d, size=model.p)
    lam = np.concatenate([[rng.gen.gamma(h.a0, 1.0 / h.b0)], rng.gen.gamma(h.a, 1.0 / h.b)])
    beta = rng.gen.standard_normal(model.p) * np.sqrt(tau / lam[0])
    u = rng.gen.standard_normal(model.q) * np.sqrt(1.0 / np.repeat(lam[1:], model.q_blocks))
    return GlmmState(theta=np.concatenate([beta, u]), lam=lam, tau=np.maximum(tau, GIG_PAR_FLOOR))


def simulate_glmm_bottom_up(model, rng):
    """Draw every level of the hierarchy from its prior down to y.

    Returns (model-with-data, truth) where truth records the generating
    draws. The design matrices of ``model`` are kept as-is.
    """
    h = model.hyper
    tau = rng.gen.gamma(h.c, 1.0 / h.d, size=model.p)
    lam = np.concatenate([[rng.gen.gamma(h.a0, 1.0 / h.b0)], rng.gen.gamma(h.a, 1.0 / h.b)])
    beta = rng.gen.standard_normal(model.p) * np.sqrt(tau / lam[0])
    u = rng.gen.standard_normal(model.q) * np.sqrt(1.0 / np.repeat(lam[1:], model.q_blocks))
    noise = rng.gen.standard_normal(model.N) / math.sqrt(lam[0])
    y = model.X @ beta + model.Z @ u + noise
    truth = {"tau": tau, "lambda": lam, "beta": beta, "u": u}
    return model.with_data(y), truth


def make_cell_means_z(n_rows, n_levels):
    """0/1 indicator matrix partitioning the rows into levels as evenly as
    possible (cell-means coding for one random factor)."""
    if n_levels < 1 or n_rows < n_levels:
        raise ConfigurationError(f"cannot split {n_rows} rows into {n_levels} levels")
    sizes = [n_rows // n_levels + (1 if i < n_rows % n_levels else 0) for i in range(n_levels)]
    z = np.zeros((n_rows, n_levels))
    start = 0
    for j, s in enumerate(sizes):
        z[start : start + s, j] = 1.0
        start += s
    return z


TABLE1_SETTINGS = {
    1: dict(N=100, p=10, q=5, a0=1.0, b0=1.0),
    2: dict(N=100, p=100, q=5, a0=77.0, b0=77.0),
    3: dict(N=100, p=200, q=5, a0=152.0, b0=152.0),
}


def table1_model(setting, rng):
    """Design-only mixed model for one of the three benchmark settings
    (one random factor with five levels; X entries iid standard normal)."""
    if setting not in TABLE1_SETTINGS:
        raise ConfigurationError(f"unknown setting {setting!r}; choose one of {sorted(TABLE1_SETTINGS)}")
    cfg = TABLE1_SETTINGS[setting]
    X = rng.gen.standard_normal((cfg["N"], cfg["p"]))
    Z = make_cell_means_z(cfg["N"], cfg["q"])
    hyper = GlmmHyper(a0=cfg["a0"], b0=cfg["b0"], a=np.array([1.5]), b=np.array([1.0]), c=0.25, d=1.0)
    return GlmmModel(X=X, Z_blocks=(Z,), hyper=hyper)


def glmm_test_function(model):
    """The scalar summary ||y - W theta||^2 + lambda_0 + lambda_1 evaluated
    over a chain's sample matrix; it involves both parameter blocks."""

    def fn(samples, names):
        d = model.p + model.q
        theta = samples[:, :d]
        lam0 = samples[:, d]
        lam1 = samples[:, d + 1]
        resid = model.y[None, :] - theta @ model.W.T
        return np.sum(resid**2, axis=1) + lam0 + lam1

    return fn


# ---------------------------------------------------------------------------
# Scale-mixture-of-normals regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudentTMixing:
    """Gamma(nu/2, nu/2) mixing: t errors with nu degrees of freedom."""

    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ParameterDomainError(f"mixing degrees of freedom must be positive, got {self.nu}")

    tag = "student_t"


@dataclass(frozen=True)
class InvGammaMixing:
    """IG(alpha, 1) mixing: generalized hyperbolic errors."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterDomainError(f"mixing alpha must be positive, got {self.alpha}")

    tag = "inv_gamma"


@dataclass(frozen=True)
class CustomMixing:
    """Arbitrary mixing density h given by a sampler and a log density.

    The latent conditional is drawn by rejection with candidate h, so the
    only requirement is that ``sampler(rng, size)`` yields h draws.
    """

    log_density: object
    sampler: object

    tag = "custom"


MixingDensity = StudentTMixing | InvGammaMixing | CustomMixing


@dataclass(frozen=True)
class SmnModel:
    y: np.ndarray
    X: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    alpha: float
    gamma: float
    mixing: object
    prior_prec: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y))
        object.__setattr__(self, "X", _readonly(self.X))
        object.__setattr__(self, "prior_mean", _readonly(self.prior_mean))
        object.__setattr__(self, "prior_cov", _readonly(self.prior_cov))
        m, p = self.X.shape
        if m < max(2, p):
            raise ConfigurationError(f"need at least max(2, p) = {max(2, p)} observations, got {m}")
        if self.y.shape != (m,) or self.prior_mean.shape != (p,) or self.prior_cov.shape != (p, p):
            raise ConfigurationError("inconsistent dimensions between y, X, and the prior")
        if not (self.alpha > 0 and self.gamma > 0):
            raise ParameterDomainError("the scale prior requires alpha > 0 and gamma > 0")
        try:
            object.__setattr__(self, "prior_prec", _readonly(np.linalg.inv(np.linalg.cholesky(self.prior_cov))))
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("prior covariance must be symmetric positive definite") from exc
        # store the actual precision, not the factor
        L_inv = self.prior_prec
        object.__setattr__(self, "prior_prec", _readonly(L_inv.T @ L_inv))

    @property
    def m(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def model_id(self):
        return "smn-" + _hash_arrays(self.y, self.X, self.prior_mean, self.prior_cov, self.alpha, self.gamma, getattr(self.mixing, "tag", "?"), getattr(self.mixing, "nu", getattr(self.mixing, "alpha", 0.0)))

    @property
    def param_names(self):
        return [f"beta_{j+1}" for j in range(self.p)] + ["sigma2"]

    def residuals(self, beta):
        return self.y - self.X @ beta


@dataclass(frozen=True)
class CustomLatentLaw:
    """Latent conditional for custom mixing, drawn by rejection from h with
    acceptance sqrt(z) * exp(-z*c_i) normalized at the mode 1/(2*c_i)."""

    mixing: CustomMixing
    half_resid2_over_s2: np.ndarray
    cap: int = REJECTION_CAP

    def sample(self, rng):
        c = self.half_resid2_over_s2
        if np.any(c <= 0):
            raise ParameterDomainError("custom-mixing latent update requires nonzero residuals")
        out = np.empty(c.size)
        log_peak = 0.5 * (-np.log(2.0 * c) - 1.0)  # log of sqrt(z)e^{-zc} at its mode
        todo = np.arange(c.size)
        trials = 0
        while todo.size:
            if trials > self.cap:
                raise RejectionCapError("custom-mixing latent rejection sampler exceeded its cap", trials=trials)
            z = np.asarray(self.mixing.sampler(rng, todo.size), dtype=float)
            log_ratio = 0.5 * np.log(z) - z * c[todo] - log_peak[todo]
            acc = np.log(rng.gen.random(todo.size)) <= log_ratio
            out[todo[acc]] = z[acc]
            todo = todo[~acc]
            trials += int(z.size)
        return out


@dataclass(frozen=True)
class SmnConditionals:
    latent: object
    sigma2: InvGammaLaw | None = None
    beta: MvnPrecisionLaw | None = None


def smn_latent_law(model, beta, sigma2):
    """z_i | beta, sigma2, y with density prop. to sqrt(z) exp(-z r_i^2 / (2 sigma2)) h(z)."""
    if not sigma2 > 0:
        raise ParameterDomainError(f"sigma2 must be positive, got {sigma2}")
    r2 = model.residuals(beta) ** 2
    mix = model.mixing
    if isinstance(mix, StudentTMixing):
        return GammaLaw(shape=0.5 * (mix.nu + 1.0), rate=(r2 + mix.nu * sigma2) / (2.0 * sigma2))
    if isinstance(mix, InvGammaMixing):
        xi = np.maximum(r2 / sigma2, GIG_PAR_FLOOR)
        return GigLaw(zeta=0.5 - mix.alpha, xi=xi, psi=2.0)
    if isinstance(mix, CustomMixing):
        return CustomLatentLaw(mixing=mix, half_resid2_over_s2=r2 / (2.0 * sigma2))
    raise ConfigurationError(f"unknown mixing density {mix!r}")


def smn_sigma2_law(model, beta, z):
    r2 = model.residuals(beta) ** 2
    return InvGammaLaw(shape=0.5 * model.m + model.alpha, scale=0.5 * (float(np.sum(z * r2)) + 2.0 * model.gamma))


def smn_beta_law(model, sigma2, z):
    Xw = model.X * z[:, None]
    prec = (model.X.T @ Xw) / sigma2 + model.prior_prec
    shift = (Xw.T @ model.y) / sigma2 + model.prior_prec @ model.prior_mean
    return MvnPrecisionLaw(shift=shift, precision=prec)


def smn_conditionals(model, beta, sigma2, z=None):
    latent = smn_latent_law(model, beta, sigma2)
    if z is None:
        return SmnConditionals(latent=latent)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ParameterDomainError("latents must be strictly positive")
    return SmnConditionals(latent=latent, sigma2=smn_sigma2_law(model, beta, z), beta=smn_beta_law(model, sigma2, z))


def expected_latent(model, beta, sigma2):
    """Closed-form E[z_i | beta, sigma2, y] per mixing family."""
    if not sigma2 > 0:
        raise ParameterDomainError(f"sigma2 must be positive, got {sigma2}")
    r2 = model.residuals(beta) ** 2
    mix = model.mixing
    if isinstance(mix, StudentTMixing):
        return sigma2 * (mix.nu + 1.0) / (r2 + mix.nu * sigma2)
    if isinstance(mix, InvGammaMixing):
        out = np.empty(r2.size)
        small = r2 / sigma2 < 1.0e-280
        if np.any(small):
            # xi -> 0 limit of the GIG mean: IG(alpha - 1/2, 1), mean 1/(alpha - 3/2)
            out[small] = 1.0 / (mix.alpha - 1.5) if mix.alpha > 1.5 else np.inf
        big = ~small
        if np.any(big):
            x = np.sqrt(2.0 * r2[big] / sigma2)
            log_ratio = log_bessel_k(1.5 - mix.alpha, x) - log_bessel_k(0.5 - mix.alpha, x)
            out[big] = np.sqrt(2.0 * sigma2 / r2[big]) * np.exp(log_ratio)
        return out
    raise UnsupportedOperationError("no closed-form latent expectation for custom mixing")


def smn_initial_state(model, rng):
    """Prior draw of (beta, sigma2)."""
    chol = np.linalg.cholesky(model.prior_cov)
    beta = model.prior_mean + chol @ rng.gen.standard_normal(model.p)
    sigma2 = model.gamma / rng.gen.gamma(model.alpha, 1.0)
    return beta, float(sigma2)


def smn_log_joint(model, beta, sigma2, z):
    """Log complete-data posterior density (unnormalized), the
    proportionality reference for every conditional."""
    r2 = model.residuals(beta) ** 2
    z = np.asarray(z, dtype=float)
    mix = model.mixing
    if isinstance(mix, StudentTMixing):
        a = 0.5 * mix.nu
        log_h = (a - 1.0) * np.log(z) - a * z + a * math.log(a) - math.lgamma(a)
    elif isinstance(mix, InvGammaMixing):
        log_h = -(mix.alpha + 1.0) * np.log(z) - 1.0 / z - math.lgamma(mix.alpha)
    elif isinstance(mix, CustomMixing):
        log_h = np.asarray(mix.log_density(z), dtype=float)
    else:
        raise ConfigurationError(f"unknown mixing density {mix!r}")
    dev = beta - model.prior_mean
    return float(
        np.sum(0.5 * np.log(z) - 0.5 * np.log(2.0 * math.pi * sigma2) - 0.5 * z * r2 / sigma2 + log_h)
        - (model.alpha + 1.0) * math.log(sigma2)
        - model.gamma / sigma2
        - 0.5 * float(dev @ model.prior_prec @ dev)
    )


# ---------------------------------------------------------------------------
# Toy Laplace-mixture target
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyLaplaceModel:
    """Fixed target f(u, z) = exp(-(u-z)^2/2 - |z|) / sqrt(8 pi); the
    z-marginal is standard Laplace and U | Z ~ N(z, 1)."""

    @property
    def model_id(self):
        return "toylaplace"

    @property
    def param_names(self):
        return ["u"]


def toy_laplace_u_law(z):
    return NormalLaw(mean=z, var=1.0)


def toy_laplace_z_logpdf_unnorm(z, u):
    z = np.asarray(z, dtype=float)
    return -0.5 * (u - z) ** 2 - np.abs(z)


def sample_toy_laplace_z(u, rng, cap=REJECTION_CAP):
    """z | u by rejection with a standard Laplace candidate.

    The candidate-to-target ratio is exp(-(u-z)^2/2), already the tightest
    envelope for this candidate (it attains 1 at z = u). Returns (z, trials).
    """
    gen = rng.gen
    for trials in range(1, cap + 1):
        z = gen.laplace()
        d = u - z
        if gen.random() <= math.exp(-0.5 * d * d):
            return z, trials
    raise RejectionCapError("toy Laplace latent rejection sampler exceeded its cap", trials=cap)


def laplace_initial_state(rng):
    """Exact draw from the target: z ~ Laplace, then u | z ~ N(z, 1)."""
    z = rng.gen.laplace()
    return float(z + rng.gen.standard_normal())


# ---------------------------------------------------------------------------
# Joint densities used by the proportionality oracles
# ---------------------------------------------------------------------------


def t_log_joint(model, mu, sigma2, z):
    """Log f(mu, sigma2, z) (unnormalized) for the t model under its prior."""
    z = np.asarray(z, dtype=float)
    half_nu = 0.5 * model.nu
    out = float(
        np.sum(
            0.5 * np.log(z)
            - 0.5 * z * (model.w - mu) ** 2 / sigma2
            + (half_nu - 1.0) * np.log(z)
            - half_nu * z
        )
    )
    out += -0.5 * model.m * math.log(sigma2) - math.log(sigma2)
    if not model.flat_prior:
        out += -0.5 * (mu - model.mu_prior_mean) ** 2
    return out


def glmm_log_joint(model, state):
    """Log posterior density (unnormalized) of (theta, tau, lambda)."""
    h = model.hyper
    beta = state.theta[: model.p]
    u = state.theta[model.p :]
    lam0 = state.lam[0]
    resid2 = float(np.sum((model.y - model.W @ state.theta) ** 2))
    lam_rep = np.repeat(state.lam[1:], model.q_blocks)
    out = 0.5 * model.N * math.log(lam0) - 0.5 * lam0 * resid2
    out += 0.5 * model.p * math.log(lam0) - 0.5 * float(np.sum(np.log(state.tau))) - 0.5 * lam0 * float(np.sum(beta**2 / state.tau))
    out += 0.5 * float(np.sum(np.array(model.q_blocks) * np.log(state.lam[1:]))) - 0.5 * float(np.sum(lam_rep * u**2))
    out += float(np.sum((h.c - 1.0) * np.log(state.tau) - h.d * state.tau))
    shapes = np.concatenate([[h.a0], h.a])
    rates = np.concatenate([[h.b0], h.b])
    out += float(np.sum((shapes - 1.0) * np.log(state.lam) - rates * state.lam))
    return out
