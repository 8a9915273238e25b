"""Chain engine: one-step transition kernels for the five scan kinds, chain
execution, and the lag-normalization rule for cross-scan comparisons.

Scan kinds
----------
``da``   alternate the latent draw with the joint parameter draw (two-block);
``ss``   latent draw, then the scale block, then the location block;
``rs``   exactly one of the three full conditionals per iteration, chosen at
         random (the latent vector persists inside the sampler state);
``hs``   latent draw, then one randomly selected parameter block;
``hss``  hs plus a group move on the latents before the selected block.

Latent variables are never part of the stored chain: every scan that redraws
them each iteration discards them, and the random-scan sampler keeps them
internal only.
"""

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import models as md
from . import sandwich as sw
from .distributions import RngStream
from .errors import ChainAbortedError, ConfigurationError, UnsupportedOperationError

SCAN_KINDS = ("da", "ss", "rs", "hs", "hss")

_UPDATES_PER_ITERATION = {"da": 2, "ss": 3, "rs": 1, "hs": 2, "hss": 2}


@dataclass(frozen=True)
class ScanSpec:
    """Which scan to run, with its selection probabilities and move flags.

    ``r`` is the probability of the scale-block branch for hs/hss;
    ``rs_probs`` are the (latent, scale, location) selection probabilities
    for rs. ``use_r1``/``use_r2`` enable the group move on the scale- and
    location-update branches of hss; ``None`` means the model default.
    ``tune_s`` switches the mixed-model move to state-tuned s selection.
    """

    kind: str
    r: float = 0.5
    rs_probs: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    use_r1: bool | None = None
    use_r2: bool | None = None
    tune_s: bool = False

    def __post_init__(self):
        if self.kind not in SCAN_KINDS:
            raise ConfigurationError(f"unknown scan kind {self.kind!r}; choose one of {SCAN_KINDS}")
        if self.kind in ("hs", "hss") and not (0.0 < self.r < 1.0):
            raise ConfigurationError(f"selection probability must lie strictly in (0, 1), got r={self.r}")
        if self.kind == "rs":
            probs = tuple(float(p) for p in self.rs_probs)
            if len(probs) != 3 or any(not (0.0 < p < 1.0) for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise ConfigurationError(f"rs needs three selection probabilities in (0,1) summing to 1, got {self.rs_probs}")
            object.__setattr__(self, "rs_probs", probs)

    @property
    def updates_per_iteration(self):
        return _UPDATES_PER_ITERATION[self.kind]

    def label(self):
        return self.kind.upper()

    def to_dict(self):
        return {
            "kind": self.kind,
            "r": self.r,
            "rs_probs": list(self.rs_probs),
            "use_r1": self.use_r1,
            "use_r2": self.use_r2,
            "tune_s": self.tune_s,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            r=d.get("r", 0.5),
            rs_probs=tuple(d.get("rs_probs", (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0))),
            use_r1=d.get("use_r1"),
            use_r2=d.get("use_r2"),
            tune_s=d.get("tune_s", False),
        )


def lag_normalize(k, kind):
    """Comparable lag for abscissa k: ss -> 2k, hs/hss -> 3k, rs -> 6k,
    equalizing the number of conditional updates represented by one lag."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ConfigurationError(f"k must be a positive integer, got {k}")
    factors = {"ss": 2, "hs": 3, "hss": 3, "rs": 6}
    if kind not in factors:
        raise UnsupportedOperationError(f"lag normalization is not defined for scan kind {kind!r}")
    return factors[kind] * int(k)


@dataclass
class ChainMeta:
    model_id: str
    scan: ScanSpec
    seed: int
    stream_id: int
    n_iterations: int
    burn_in: int
    updates_per_iteration: int
    counters: dict
    wall_time_s: float = 0.0
    aborted: bool = False
    error: str | None = None


@dataclass
class Chain:
    """Stored samples (one row per iteration) plus run metadata."""

    samples: np.ndarray
    param_names: list
    meta: ChainMeta

    @property
    def n_iterations(self):
        return self.samples.shape[0]

    @property
    def post_burn_in(self):
        return self.samples[self.meta.burn_in :]

    def series(self, name):
        return self.samples[:, self.param_names.index(name)]

    def post_burn_in_series(self, name):
        return self.post_burn_in[:, self.param_names.index(name)]


def _new_counters():
    return {
        "conditional_draws": 0,
        "group_moves": 0,
        "group_move_trials": 0,
        "latent_rejection_trials": 0,
        "psi_clamped": 0,
        "min_tau": None,
    }


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


class _TKernel:
    """Student's t location-scale model; state is (mu, sigma2).

    The step body is written against raw generator calls (one vector
    standard-gamma for the latents, scalars elsewhere); the law constructors
    in the models module stay the tested reference parameterization.
    """

    def __init__(self, model, scan):
        self.model = model
        self.scan = scan
        self.use_r1 = True if scan.use_r1 is None else scan.use_r1
        self.use_r2 = True if scan.use_r2 is None else scan.use_r2
        if scan.kind == "da" and not model.flat_prior:
            raise ConfigurationError("da needs the joint (mu, sigma2) | z draw, which only the flat prior admits")
        if scan.kind == "hss" and not model.flat_prior:
            raise ConfigurationError("the t-model group moves are derived under the flat prior")
        self.z = None  # persistent latents for rs only
        self._w = np.array(model.w)
        self._nu = float(model.nu)
        self._m = model.m

    def initial_state(self, rng):
        return md.t_initial_state(self.model, rng)

    def validate_state(self, state):
        mu, sigma2 = state
        if not sigma2 > 0:
            raise ConfigurationError(f"initial sigma2 must be positive, got {sigma2}")
        return float(mu), float(sigma2)

    def init_latent(self, state, rng):
        if self.scan.kind == "rs":
            mu, sigma2 = state
            self.z = self._draw_latents(mu, sigma2, rng)

    def record_into(self, state, out, i):
        out[i, 0] = state[0]
        out[i, 1] = state[1]

    def _draw_latents(self, mu, sigma2, rng):
        r2 = self._w - mu
        r2 *= r2
        z = rng.gen.standard_gamma(0.5 * (self._nu + 1.0), self._m)
        z *= 2.0 * sigma2
        z /= r2 + self._nu * sigma2
        return z

    def _draw_mu_flat(self, sigma2, z_dot, theta, rng):
        return theta + math.sqrt(sigma2 / z_dot) * rng.gen.standard_normal()

    def _draw_mu(self, sigma2, z_dot, theta, rng):
        if self.model.flat_prior:
            return self._draw_mu_flat(sigma2, z_dot, theta, rng)
        prec = z_dot / sigma2 + 1.0
        mean = (z_dot * theta / sigma2 + self.model.mu_prior_mean) / prec
        return mean + rng.gen.standard_normal() / math.sqrt(prec)

    def step(self, state, rng, counters):
        mu, sigma2 = state
        gen = rng.gen
        w, nu, m = self._w, self._nu, self._m
        kind = self.scan.kind
        if kind == "rs":
            pick = gen.random()
            counters["conditional_draws"] += 1
            r1, r2p, _ = self.scan.rs_probs
            if pick <= r1:
                self.z = self._draw_latents(mu, sigma2, rng)
            elif pick <= r1 + r2p:
                z = self.z
                scale = 0.5 * float((z * (w - mu) ** 2).sum())
                sigma2 = scale / gen.standard_gamma(0.5 * m)
            else:
                z = self.z
                z_dot = float(z.sum())
                theta = float((z * w).sum()) / z_dot
                mu = self._draw_mu(sigma2, z_dot, theta, rng)
            return mu, sigma2

        z = self._draw_latents(mu, sigma2, rng)
        counters["conditional_draws"] += 1
        r2 = w - mu
        r2 *= r2
        if kind == "da":
            z_dot = float(z.sum())
            theta = float((z * w).sum()) / z_dot
            v = float((z * (w - theta) ** 2).sum()) / z_dot
            # joint draw: sigma2 | z with mu integrated out, then mu | sigma2, z
            sigma2 = 0.5 * z_dot * v / gen.standard_gamma(0.5 * (m - 1.0))
            mu = theta + math.sqrt(sigma2 / z_dot) * gen.standard_normal()
            counters["conditional_draws"] += 1
            return mu, sigma2
        if kind == "ss":
            sigma2 = 0.5 * float((z * r2).sum()) / gen.standard_gamma(0.5 * m)
            z_dot = float(z.sum())
            theta = float((z * w).sum()) / z_dot
            mu = self._draw_mu(sigma2, z_dot, theta, rng)
            counters["conditional_draws"] += 2
            return mu, sigma2
        # hs / hss
        if gen.random() <= self.scan.r:
            scale = 0.5 * float((z * r2).sum())
            if kind == "hss" and self.use_r1:
                z_dot = float(z.sum())
                g = gen.standard_gamma(0.5 * m * nu) * 2.0 / (nu * z_dot)
                scale *= g
                counters["group_moves"] += 1
            sigma2 = scale / gen.standard_gamma(0.5 * m)
        else:
            z_dot = float(z.sum())
            theta = float((z * w).sum()) / z_dot
            if kind == "hss" and self.use_r2:
                v = float((z * (w - theta) ** 2).sum()) / z_dot
                rate = z_dot * (v / (2.0 * sigma2) + 0.5 * nu)
                g = gen.standard_gamma(0.5 * (m * (nu + 1.0) - 1.0)) / rate
                # theta and v are scale invariant under z -> g z; only z. moves
                z_dot *= g
                counters["group_moves"] += 1
            mu = self._draw_mu(sigma2, z_dot, theta, rng)
        counters["conditional_draws"] += 1
        return mu, sigma2


class _GlmmKernel:
    """Mixed model; state is GlmmState(theta, lam, tau)."""

    def __init__(self, model, scan):
        if model.y is None:
            raise ConfigurationError("mixed model has no data; simulate or attach y first")
        self.model = model
        self.scan = scan
        self.use_r1 = True if scan.use_r1 is None else scan.use_r1
        if scan.use_r2:
            raise ConfigurationError("the mixed model has no location-branch group move; use_r2 must stay off")
        if scan.kind == "da":
            raise ConfigurationError("the joint (theta, lambda) | tau draw is unavailable; da does not apply")

    def initial_state(self, rng):
        return md.glmm_initial_state(self.model, rng)

    def validate_state(self, state):
        if not isinstance(state, md.GlmmState):
            raise ConfigurationError("initial state must be a GlmmState")
        expected = (self.model.p + self.model.q, self.model.n_factors + 1, self.model.p)
        got = (state.theta.size, state.lam.size, state.tau.size)
        if expected != got:
            raise ConfigurationError(f"state dimensions {got} do not match the model {expected}")
        return state

    def init_latent(self, state, rng):
        pass  # tau sits inside GlmmState already

    def record_into(self, state, out, i):
        d = state.theta.size
        out[i, :d] = state.theta
        out[i, d:] = state.lam

    def _draw_tau(self, state, rng, counters):
        law, n_clamped = md.glmm_tau_law(self.model, state)
        counters["psi_clamped"] += n_clamped
        tau = np.maximum(law.sample(rng), md.GIG_PAR_FLOOR)
        low = float(tau.min())
        if counters["min_tau"] is None or low < counters["min_tau"]:
            counters["min_tau"] = low
        return tau

    def _draw_lam(self, state, rng):
        law = md.glmm_lambda_law(self.model, state)
        return law.sample(rng)

    def _draw_theta(self, state, rng):
        return md.glmm_theta_law(self.model, state).sample(rng)

    def step(self, state, rng, counters):
        scan = self.scan
        kind = scan.kind
        if kind == "rs":
            pick = rng.gen.random()
            counters["conditional_draws"] += 1
            r1, r2, _ = scan.rs_probs
            if pick <= r1:
                tau = self._draw_tau(state, rng, counters)
                return replace(state, tau=tau)
            if pick <= r1 + r2:
                lam = self._draw_lam(state, rng)
                return replace(state, lam=lam)
            theta = self._draw_theta(state, rng)
            return replace(state, theta=theta)

        tau = self._draw_tau(state, rng, counters)
        state = replace(state, tau=tau)
        counters["conditional_draws"] += 1
        if kind == "ss":
            state = replace(state, lam=self._draw_lam(state, rng))
            state = replace(state, theta=self._draw_theta(state, rng))
            counters["conditional_draws"] += 2
            return state
        # hs / hss
        if rng.gen.random() <= scan.r:
            if kind == "hss" and self.use_r1:
                params = sw.glmm_sandwich_params(self.model, state.theta, state.tau, tune=scan.tune_s)
                g, trials = sw.glmm_group_move(params, rng)
                state = replace(state, tau=g * state.tau)
                counters["group_moves"] += 1
                counters["group_move_trials"] += trials
            state = replace(state, lam=self._draw_lam(state, rng))
        else:
            state = replace(state, theta=self._draw_theta(state, rng))
        counters["conditional_draws"] += 1
        return state


class _SmnKernel:
    """Scale-mixture regression; state is (beta, sigma2)."""

    def __init__(self, model, scan):
        self.model = model
        self.scan = scan
        if scan.kind == "da":
            raise ConfigurationError("the joint (beta, sigma2) | z draw is unavailable under this prior; da does not apply")
        if scan.kind == "hss":
            raise ConfigurationError("no group move is defined for the scale-mixture regression model")
        self.z = None

    def initial_state(self, rng):
        return md.smn_initial_state(self.model, rng)

    def validate_state(self, state):
        beta, sigma2 = state
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.model.p,) or not sigma2 > 0:
            raise ConfigurationError("initial state must be (beta of length p, sigma2 > 0)")
        return beta, float(sigma2)

    def init_latent(self, state, rng):
        if self.scan.kind == "rs":
            beta, sigma2 = state
            self.z = self._draw_latents(beta, sigma2, rng, _new_counters())

    def record_into(self, state, out, i):
        beta, sigma2 = state
        out[i, :-1] = beta
        out[i, -1] = sigma2

    def _draw_latents(self, beta, sigma2, rng, counters):
        law = md.smn_latent_law(self.model, beta, sigma2)
        if isinstance(law, md.CustomLatentLaw):
            z = law.sample(rng)
        else:
            z = law.sample(rng)
        return np.asarray(z, dtype=float)

    def _draw_sigma2(self, beta, z, rng):
        law = md.smn_sigma2_law(self.model, beta, z)
        return float(law.sample(rng))

    def _draw_beta(self, sigma2, z, rng):
        return md.smn_beta_law(self.model, sigma2, z).sample(rng)

    def step(self, state, rng, counters):
        beta, sigma2 = state
        kind = self.scan.kind
        if kind == "rs":
            pick = rng.gen.random()
            counters["conditional_draws"] += 1
            r1, r2, _ = self.scan.rs_probs
            if pick <= r1:
                self.z = self._draw_latents(beta, sigma2, rng, counters)
            elif pick <= r1 + r2:
                sigma2 = self._draw_sigma2(beta, self.z, rng)
            else:
                beta = self._draw_beta(sigma2, self.z, rng)
            return beta, sigma2

        z = self._draw_latents(beta, sigma2, rng, counters)
        counters["conditional_draws"] += 1
        if kind == "ss":
            sigma2 = self._draw_sigma2(beta, z, rng)
            beta = self._draw_beta(sigma2, z, rng)
            counters["conditional_draws"] += 2
            return beta, sigma2
        # hs
        if rng.gen.random() <= self.scan.r:
            sigma2 = self._draw_sigma2(beta, z, rng)
        else:
            beta = self._draw_beta(sigma2, z, rng)
        counters["conditional_draws"] += 1
        return beta, sigma2


class _LaplaceKernel:
    """Toy Laplace target; state is the scalar u. Supported scans: da and
    hss (the sandwich algorithm; with the move disabled it is exactly da)."""

    def __init__(self, model, scan):
        self.model = model
        self.scan = scan
        if scan.kind not in ("da", "hss"):
            raise ConfigurationError("the toy Laplace target has a single parameter block; only da and hss apply")
        self.use_move = True if scan.use_r1 is None else scan.use_r1
        if scan.kind == "da":
            self.use_move = False

    def initial_state(self, rng):
        return md.laplace_initial_state(rng)

    def validate_state(self, state):
        return float(state)

    def init_latent(self, state, rng):
        pass

    def record_into(self, state, out, i):
        out[i, 0] = state

    def step(self, state, rng, counters):
        z, trials = md.sample_toy_laplace_z(state, rng)
        counters["latent_rejection_trials"] += trials
        counters["conditional_draws"] += 1
        if self.use_move:
            z = sw.toy_laplace_sandwich_move(z, rng)
            counters["group_moves"] += 1
        u = z + rng.gen.standard_normal()
        counters["conditional_draws"] += 1
        return u


_KERNELS = {
    md.StudentTModel: _TKernel,
    md.GlmmModel: _GlmmKernel,
    md.SmnModel: _SmnKernel,
    md.ToyLaplaceModel: _LaplaceKernel,
}


def make_kernel(model, scan):
    for cls, kernel_cls in _KERNELS.items():
        if isinstance(model, cls):
            return kernel_cls(model, scan)
    raise ConfigurationError(f"no sampler is defined for model type {type(model).__name__}")


def step(model, state, scan, rng, counters=None):
    """Apply exactly one scan step and return the new state.

    For rs chains, which carry persistent latents, prefer run_chain or reuse
    one kernel via make_kernel; this convenience wrapper redraws the latents
    each call.
    """
    kernel = make_kernel(model, scan)
    kernel.init_latent(kernel.validate_state(state), rng)
    if counters is None:
        counters = _new_counters()
    return kernel.step(kernel.validate_state(state), rng, counters)


def run_chain(model, scan, n_iterations, init=None, seed=0, stream_id=0, burn_in=None):
    """Run one chain and return it with metadata.

    ``init=None`` starts from the model's default initial state (prior draws
    for the proper-prior models). ``burn_in=None`` marks the first half for
    discarding. Step-level failures abort with the iteration index and the
    partial chain attached.
    """
    if not (isinstance(n_iterations, (int, np.integer)) and n_iterations >= 1):
        raise ConfigurationError(f"n_iterations must be a positive integer, got {n_iterations}")
    kernel = make_kernel(model, scan)
    rng = RngStream(seed, stream_id)
    state = kernel.initial_state(rng) if init is None else kernel.validate_state(init)
    kernel.init_latent(state, rng)
    counters = _new_counters()
    samples = np.empty((n_iterations, len(model.param_names)))
    burn = n_iterations // 2 if burn_in is None else int(burn_in)
    if not 0 <= burn < n_iterations:
        raise ConfigurationError(f"burn_in must lie in [0, n_iterations), got {burn}")
    meta = ChainMeta(
        model_id=model.model_id,
        scan=scan,
        seed=seed,
        stream_id=stream_id,
        n_iterations=int(n_iterations),
        burn_in=burn,
        updates_per_iteration=scan.updates_per_iteration,
        counters=counters,
    )
    t0 = time.perf_counter()
    for i in range(n_iterations):
        try:
            state = kernel.step(state, rng, counters)
        except Exception as exc:
            meta.aborted = True
            meta.error = f"iteration {i}: {exc}"
            meta.wall_time_s = time.perf_counter() - t0
            partial = Chain(samples=samples[:i].copy(), param_names=list(model.param_names), meta=meta)
            raise ChainAbortedError(meta.error, iteration=i, partial_chain=partial) from exc
        kernel.record_into(state, samples, i)
    meta.wall_time_s = time.perf_counter() - t0
    return Chain(samples=samples, param_names=list(model.param_names), meta=meta)
