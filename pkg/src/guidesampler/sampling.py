"""Unconditional and guided generation over the masking noise process.

Two sampling routes produce draws from the same law:

* :func:`euler_sample`: numerical CTMC integration with step ``dt``; carries
  an O(dt) bias and a diagnostics counter for outflow renormalizations;
* :func:`aoarm_sample`: exact any-order autoregressive sampling: a uniform
  permutation fixes the unmask order, one categorical draw per position; the
  per-step state conditional never reads the clock (it takes no time
  argument), and jump times, when requested, are attached afterwards by
  sorting independent draws from the schedule.

Guidance modes:

* ``exact``: multiply each single-position rate by the predictor likelihood
  ratio (target over source) raised to gamma;
* ``tag``: replace the log-ratio by the inner product of the one-hot change
  with the predictor's gradient surface (one gradient evaluation per context);
* ``deg``: condition each per-position decode conditional of the equivalent
  any-order sampler: weights proportional to likelihood(candidate)^gamma
  times the denoiser posterior;
* ``predictor_free``: geometric interpolation of conditional and
  unconditional rates from two denoisers.

The many-chain drivers memoize posterior rows and predictor likelihoods per
masked context when every component is deterministic; this is a pure-function
cache and leaves the sampled law unchanged. Diagnostics report both the
number of requests and the number of actual model evaluations. Chains are
independent given their RandomSource, so N-chain generation may run chains
concurrently on substreams and merge results order-independently.

Composition order with logit modifiers: temperature and wild-type bias are
applied inside the denoiser (ModifiedDenoiser) before guidance reads any
posterior, so gamma always exponentiates likelihoods of the already-tempered
model and never a separate normalizer.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    Alphabet,
    InterpolationSchedule,
    MaskedSequence,
    TokenSequence,
    as_generator,
)
from .denoising import Denoiser
from .errors import (
    DegenerateStepError,
    TimeHorizonError,
    UnsupportedFeatureError,
)
from .predictors import LIKELIHOOD_FLOOR, TimePredictor

TIME_HORIZON_EPS = 1e-9

GUIDANCE_MODES = ("none", "exact", "tag", "deg", "predictor_free")
EULER_MODES = ("none", "exact", "tag", "predictor_free")
AOARM_MODES = ("none", "deg", "tag", "predictor_free")


# ---------------------------------------------------------------------------
# configuration and result records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GuidanceConfig:
    """How to modulate the sampler: mode, strength gamma, and the predictor
    (or a second, conditional denoiser for predictor-free guidance). ``t0``
    delays guidance until the unmasked fraction (any-order route) or the
    clock (Euler route) reaches it."""

    mode: str = "none"
    gamma: float = 1.0
    predictor: Optional[TimePredictor] = None
    second_denoiser: Optional[Denoiser] = None
    t0: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if self.gamma < 0:
            raise ValueError("guidance strength gamma must be >= 0")
        if not 0.0 <= self.t0 <= 1.0:
            raise ValueError("switch time t0 must lie in [0, 1]")
        if self.eta != 0.0:
            raise UnsupportedFeatureError(
                "stochasticity eta != 0 is not supported (no rate formula here)"
            )
        if self.mode in ("exact", "tag", "deg") and self.predictor is None:
            raise ValueError(f"mode {self.mode!r} requires a predictor")
        if self.mode == "predictor_free" and self.second_denoiser is None:
            raise ValueError("predictor_free mode requires a second (conditional) denoiser")

    @property
    def guided(self) -> bool:
        return self.mode != "none"


@dataclass
class SamplerDiagnostics:
    """Run accounting, emitted as a JSON summary."""

    sampler: str = ""
    n_chains: int = 0
    n_steps: int = 0
    overflow_renormalizations: int = 0
    denoiser_evals: int = 0
    predictor_evals: int = 0
    step_weight_requests: int = 0
    wall_time_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "sampler": self.sampler,
            "n_chains": self.n_chains,
            "n_steps": self.n_steps,
            "overflow_renormalizations": self.overflow_renormalizations,
            "denoiser_evals": self.denoiser_evals,
            "predictor_evals": self.predictor_evals,
            "step_weight_requests": self.step_weight_requests,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class DecodePath:
    """Realized generation trace: one unmask event per step.

    ``permutation[i]`` is the position unmasked at step i, ``jump_times[i]``
    the time it happened (Euler paths may carry tied times at dt resolution;
    forced terminal unmasks carry time 1.0), ``states`` the D+1 progressively
    unmasked token arrays.
    """

    permutation: np.ndarray
    jump_times: Optional[np.ndarray]
    states: list
    S: int

    def final(self) -> TokenSequence:
        return TokenSequence(self.states[-1], Alphabet(self.S))

    def to_json(self) -> dict:
        alpha = Alphabet(self.S)
        return {
            "permutation": [int(d) for d in self.permutation],
            "jump_times": None if self.jump_times is None else [float(t) for t in self.jump_times],
            "states": ["".join(alpha.letter(int(t)) for t in s) for s in self.states],
        }


def write_paths_jsonl(paths: Sequence[DecodePath], fh) -> None:
    import json

    for p in paths:
        fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# rate sets
# ---------------------------------------------------------------------------


@dataclass
class RateSet:
    """Sparse single-position transition rates at one time.

    ``entries[(d, s)]`` is the rate of position d jumping to real symbol s;
    entries exist only at masked positions of ``source`` (there are no
    transitions out of unmasked positions and none into the mask). ``coef``
    is the shared prefactor kappa_dot(t) / (1 - kappa(t)).
    """

    entries: dict
    t: float
    coef: float
    source: MaskedSequence

    def validate(self) -> "RateSet":
        S = self.source.alphabet.size
        masked = set(int(d) for d in self.source.masked_positions())
        for (d, s), r in self.entries.items():
            if d not in masked:
                raise ValueError(f"rate entry at unmasked position {d}")
            if not 0 <= s < S:
                raise ValueError(f"rate entry targets non-real symbol {s}")
            if not (np.isfinite(r) and r >= 0):
                raise ValueError(f"rate ({d},{s}) = {r} is not finite and nonnegative")
        return self

    def row(self, d: int) -> np.ndarray:
        S = self.source.alphabet.size
        return np.array([self.entries.get((d, s), 0.0) for s in range(S)])


def rate_coefficient(t: float, schedule: InterpolationSchedule) -> float:
    if t >= 1.0 - TIME_HORIZON_EPS:
        raise TimeHorizonError(
            f"rates diverge at the t=1 horizon (requested t={t}); "
            "stop Euler integration at 1-dt and force-complete"
        )
    return schedule.kappa_dot(t) / (1.0 - schedule.kappa(t))


def unguided_rates(
    denoiser: Denoiser, xt: MaskedSequence, t: float, schedule: InterpolationSchedule
) -> RateSet:
    """Masking-process generative rates: coef * posterior at masked positions,
    no entries elsewhere."""
    coef = rate_coefficient(t, schedule)
    post = denoiser.posterior_array(xt.tokens)
    entries = {}
    for d in xt.masked_positions():
        for s in range(denoiser.S):
            entries[(int(d), s)] = coef * float(post[d, s])
    return RateSet(entries=entries, t=t, coef=coef, source=xt).validate()


def guide_rates(rates: RateSet, cfg: GuidanceConfig, diagnostics: Optional[SamplerDiagnostics] = None) -> RateSet:
    """Predictor-conditioned rates (modes: exact, tag, predictor_free)."""
    if cfg.mode not in ("exact", "tag", "predictor_free"):
        raise ValueError(f"guide_rates handles exact/tag/predictor_free, not {cfg.mode!r}")
    xt = rates.source
    S = xt.alphabet.size
    tokens = xt.tokens
    out = {}
    if cfg.mode == "exact":
        src = _clamped(cfg.predictor.likelihood_array(tokens))
        if diagnostics:
            diagnostics.predictor_evals += 1
        for (d, s), r in rates.entries.items():
            child = np.array(tokens)
            child[d] = s
            tgt = _clamped(cfg.predictor.likelihood_array(child))
            if diagnostics:
                diagnostics.predictor_evals += 1
            out[(d, s)] = r * (tgt / src) ** cfg.gamma
    elif cfg.mode == "tag":
        g = cfg.predictor.gradient_surface_array(tokens)
        if diagnostics:
            diagnostics.predictor_evals += 1
        for (d, s), r in rates.entries.items():
            out[(d, s)] = r * math.exp(cfg.gamma * (g[d, s] - g[d, S]))
    else:  # predictor_free
        post_cond = cfg.second_denoiser.posterior_array(tokens)
        if diagnostics:
            diagnostics.denoiser_evals += 1
        for (d, s), r in rates.entries.items():
            cond_rate = rates.coef * float(post_cond[d, s])
            out[(d, s)] = cond_rate**cfg.gamma * r ** (1.0 - cfg.gamma)
    return RateSet(entries=out, t=rates.t, coef=rates.coef, source=xt).validate()


def _clamped(v: float) -> float:
    return min(max(v, LIKELIHOOD_FLOOR), 1.0)


# ---------------------------------------------------------------------------
# jump times (order-statistics machinery)
# ---------------------------------------------------------------------------


def sample_jump_times(D: int, schedule: InterpolationSchedule, rng):
    """Per-position jump times (i.i.d. with CDF kappa), sorted.

    Returns (tau, sigma): tau strictly increasing, sigma[i] the position whose
    time ranked i-th; ties break by ascending position index.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    gen = as_generator(rng)
    u = gen.random(D)
    times = np.array([schedule.inverse(float(v)) for v in u])
    sigma = np.argsort(times, kind="stable")
    return times[sigma], sigma


def lemma1_density(i: int, tau_i: float, tau_prev: float, D: int, schedule: InterpolationSchedule) -> float:
    """Closed-form conditional density of the i-th jump time given the
    previous one: (D-(i-1)) * kd(t_i)/(1-k(t_prev)) * ((1-k(t_i))/(1-k(t_prev)))^(D-i)."""
    if not 1 <= i <= D:
        raise ValueError(f"jump index i={i} outside 1..{D}")
    if not 0.0 <= tau_prev < tau_i < 1.0:
        raise ValueError(f"need 0 <= tau_prev < tau_i < 1, got {tau_prev}, {tau_i}")
    k_prev = schedule.kappa(tau_prev)
    k_i = schedule.kappa(tau_i)
    surv = (1.0 - k_i) / (1.0 - k_prev)
    return (D - (i - 1)) * schedule.kappa_dot(tau_i) / (1.0 - k_prev) * surv ** (D - i)


# ---------------------------------------------------------------------------
# per-context evaluation caches (pure-function memoization)
# ---------------------------------------------------------------------------


class _ContextCache:
    """Memoized posterior rows and predictor likelihoods keyed by the
    base-(S+1) context code. Only used when the components are deterministic."""

    def __init__(self, denoiser: Denoiser, cfg: GuidanceConfig, diagnostics: SamplerDiagnostics):
        self.denoiser = denoiser
        self.cfg = cfg
        self.diag = diagnostics
        self.D, self.S = denoiser.D, denoiser.S
        self.pows = (self.S + 1) ** np.arange(self.D, dtype=np.int64)
        self._post: dict = {}
        self._post2: dict = {}
        self._lik: dict = {}
        self._grad: dict = {}

    @property
    def cacheable(self) -> bool:
        parts = [self.denoiser, self.cfg.second_denoiser]
        if self.cfg.guided and self.cfg.predictor is not None:
            parts.append(self.cfg.predictor)
        return all(getattr(p, "deterministic", True) for p in parts if p is not None)

    def decode(self, code: int) -> np.ndarray:
        toks = np.empty(self.D, dtype=np.int64)
        base = self.S + 1
        for i in range(self.D):
            toks[i] = code % base
            code //= base
        return toks

    def posterior(self, code: int) -> np.ndarray:
        hit = self._post.get(code)
        if hit is None:
            hit = self.denoiser.posterior_array(self.decode(code))
            self.diag.denoiser_evals += 1
            self._post[code] = hit
        return hit

    def posterior_cond(self, code: int) -> np.ndarray:
        hit = self._post2.get(code)
        if hit is None:
            hit = self.cfg.second_denoiser.posterior_array(self.decode(code))
            self.diag.denoiser_evals += 1
            self._post2[code] = hit
        return hit

    def likelihood(self, code: int) -> float:
        hit = self._lik.get(code)
        if hit is None:
            hit = _clamped(self.cfg.predictor.likelihood_array(self.decode(code)))
            self.diag.predictor_evals += 1
            self._lik[code] = hit
        return hit

    def gradient(self, code: int) -> np.ndarray:
        hit = self._grad.get(code)
        if hit is None:
            hit = self.cfg.predictor.gradient_surface_array(self.decode(code))
            self.diag.predictor_evals += 1
            self._grad[code] = hit
        return hit

    # -- guided step weights (any-order route) ------------------------------

    def decode_weights(self, code: int, d: int, active: bool) -> np.ndarray:
        """Unnormalized guided weights over real symbols for unmasking
        position d of the context ``code``."""
        self.diag.step_weight_requests += 1
        post_row = self.posterior(code)[d]
        cfg = self.cfg
        if not (cfg.guided and active):
            return post_row
        if cfg.mode == "deg":
            lik = np.array(
                [self.likelihood(int(code + (s - self.S) * self.pows[d])) for s in range(self.S)]
            )
            return post_row * lik**cfg.gamma
        if cfg.mode == "tag":
            g = self.gradient(code)
            return post_row * np.exp(cfg.gamma * (g[d, : self.S] - g[d, self.S]))
        if cfg.mode == "predictor_free":
            cond_row = self.posterior_cond(code)[d]
            return cond_row**cfg.gamma * post_row ** (1.0 - cfg.gamma)
        raise ValueError(f"mode {cfg.mode!r} is not an any-order guidance mode")

    # -- guided rate rows (Euler route) --------------------------------------

    def rate_weight_rows(self, code: int, active: bool):
        """(weights (D,S), row sums (D,)) such that the guided rate of
        (d, s) is coef * weights[d, s]; rows at unmasked positions are
        meaningless and never consulted."""
        post = self.posterior(code)
        cfg = self.cfg
        if not (cfg.guided and active):
            return post, post.sum(axis=1)
        if cfg.mode == "exact":
            src = self.likelihood(code)
            w = post.copy()
            toks = self.decode(code)
            for d in range(self.D):
                if toks[d] != self.S:
                    continue
                for s in range(self.S):
                    child = int(code + (s - self.S) * self.pows[d])
                    w[d, s] *= (self.likelihood(child) / src) ** cfg.gamma
            return w, w.sum(axis=1)
        if cfg.mode == "tag":
            g = self.gradient(code)
            w = post * np.exp(cfg.gamma * (g[:, : self.S] - g[:, self.S][:, None]))
            return w, w.sum(axis=1)
        if cfg.mode == "predictor_free":
            cond = self.posterior_cond(code)
            w = cond**cfg.gamma * post ** (1.0 - cfg.gamma)
            return w, w.sum(axis=1)
        raise ValueError(f"mode {cfg.mode!r} is not an Euler guidance mode")


def _draw_from_weights(weights: np.ndarray, u: float, step: int, position: int) -> int:
    total = float(weights.sum())
    if not (math.isfinite(total) and total > 0.0):
        raise DegenerateStepError(step, position)
    cdf = np.cumsum(weights) / total
    return min(int(np.searchsorted(cdf, u, side="right")), weights.size - 1)


# ---------------------------------------------------------------------------
# any-order autoregressive sampling (exact route)
# ---------------------------------------------------------------------------


def aoarm_sample(
    denoiser: Denoiser,
    cfg: GuidanceConfig,
    rng,
    schedule: Optional[InterpolationSchedule] = None,
    attach_times: bool = False,
):
    """Draw one sequence by unmasking positions in a uniformly random order.

    Returns (TokenSequence, DecodePath). With mode 'deg', gamma=1, and exact
    denoiser/predictor the output is an exact draw from the tilted posterior.
    Jump times are attached afterwards (requires ``schedule``) and do not
    perturb the sequence draw.
    """
    if cfg.mode not in AOARM_MODES:
        raise ValueError(
            f"any-order sampling supports modes {AOARM_MODES}; "
            f"use mode 'deg' for exact Bayes conditioning (got {cfg.mode!r})"
        )
    gen = as_generator(rng)
    D, S = denoiser.D, denoiser.S
    diag = SamplerDiagnostics(sampler="aoarm", n_chains=1)
    cache = _ContextCache(denoiser, cfg, diag)
    sigma = gen.permutation(D)
    tokens = np.full(D, S, dtype=np.int64)
    code = int(sum(S * cache.pows))
    states = [tokens.copy()]
    t_start = time.perf_counter()
    for i, d in enumerate(sigma):
        active = (i / D) >= cfg.t0
        w = cache.decode_weights(code, int(d), active)
        s = _draw_from_weights(w, gen.random(), step=i, position=int(d))
        tokens[d] = s
        code += (s - S) * int(cache.pows[d])
        states.append(tokens.copy())
        diag.n_steps += 1
    jump_times = None
    if attach_times:
        if schedule is None:
            raise ValueError("attach_times requires a schedule")
        u = gen.random(D)
        jump_times = np.sort(np.array([schedule.inverse(float(v)) for v in u]))
    diag.wall_time_s = time.perf_counter() - t_start
    path = DecodePath(permutation=np.asarray(sigma), jump_times=jump_times, states=states, S=S)
    return TokenSequence(tokens, Alphabet(S)), path, diag


def aoarm_sample_many(denoiser: Denoiser, cfg: GuidanceConfig, n: int, rng):
    """Vectorized n-chain any-order sampling; returns (token matrix, diagnostics).

    The unmask order per chain comes from sorting i.i.d. uniforms, which is
    both a uniform permutation and the jump-time construction. Falls back to
    per-chain sampling on substreams when any component is nondeterministic.
    """
    if cfg.mode not in AOARM_MODES:
        raise ValueError(f"any-order sampling supports modes {AOARM_MODES} (got {cfg.mode!r})")
    D, S = denoiser.D, denoiser.S
    diag = SamplerDiagnostics(sampler="aoarm_many", n_chains=n)
    cache = _ContextCache(denoiser, cfg, diag)
    t_start = time.perf_counter()
    if not cache.cacheable:
        if not hasattr(rng, "substream"):
            raise ValueError("nondeterministic components require a RandomSource")
        rows = np.empty((n, D), dtype=np.int64)
        for k in range(n):
            x, _, d1 = aoarm_sample(denoiser, cfg, rng.substream(k))
            rows[k] = x.tokens
            diag.n_steps += d1.n_steps
            diag.denoiser_evals += d1.denoiser_evals
            diag.predictor_evals += d1.predictor_evals
        diag.wall_time_s = time.perf_counter() - t_start
        return rows, diag

    gen = as_generator(rng)
    order = np.argsort(gen.random((n, D)), axis=1, kind="stable")
    pows = cache.pows
    codes = np.full(n, int(sum(S * pows)), dtype=np.int64)
    probs_cache: dict = {}
    for i in range(D):
        active = (i / D) >= cfg.t0
        d_vec = order[:, i]
        pair_keys = codes * D + d_vec
        uniq, inv = np.unique(pair_keys, return_inverse=True)
        cdf_rows = np.empty((uniq.size, S))
        for j, key in enumerate(uniq):
            hit = probs_cache.get((int(key), active))
            if hit is None:
                code, d = divmod(int(key), D)
                w = cache.decode_weights(code, d, active)
                total = float(w.sum())
                if not (math.isfinite(total) and total > 0.0):
                    raise DegenerateStepError(i, d)
                hit = np.cumsum(w) / total
                probs_cache[(int(key), active)] = hit
            cdf_rows[j] = hit
        u = gen.random(n)
        draws = (cdf_rows[inv] < u[:, None]).sum(axis=1).clip(max=S - 1)
        codes += (draws - S) * pows[d_vec]
        diag.n_steps += n
    rows = np.empty((n, D), dtype=np.int64)
    rest = codes.copy()
    for i in range(D):
        rows[:, i] = rest % (S + 1)
        rest //= S + 1
    diag.wall_time_s = time.perf_counter() - t_start
    return rows, diag


# ---------------------------------------------------------------------------
# Euler CTMC integration
# ---------------------------------------------------------------------------


def _check_dt(dt: float) -> int:
    """Number of integration steps: t = k*dt while the step stays at or
    below the 1-dt horizon; residual masks are force-completed there."""
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    return max(1, int(math.floor((1.0 - 2.0 * dt) / dt + 1e-9)) + 1)


def euler_sample(
    denoiser: Denoiser,
    cfg: GuidanceConfig,
    schedule: InterpolationSchedule,
    dt: float,
    rng,
):
    """Integrate the (guided) masking CTMC from the fully masked state.

    Steps from t=0 to t=1-dt; outflow above 1 is renormalized and counted;
    residual masked positions at the horizon are force-completed with one
    draw each from the final guided per-position distribution (recorded at
    time 1.0). Returns (TokenSequence, DecodePath, SamplerDiagnostics).
    """
    if cfg.mode not in EULER_MODES:
        raise ValueError(
            f"Euler integration supports modes {EULER_MODES}; "
            f"mode 'deg' belongs to the any-order route (got {cfg.mode!r})"
        )
    n_int = _check_dt(dt)
    gen = as_generator(rng)
    D, S = denoiser.D, denoiser.S
    diag = SamplerDiagnostics(sampler="euler", n_chains=1)
    cache = _ContextCache(denoiser, cfg, diag)
    pows = cache.pows
    tokens = np.full(D, S, dtype=np.int64)
    code = int(sum(S * pows))
    states = [tokens.copy()]
    perm: list = []
    times: list = []
    t_start = time.perf_counter()
    for k in range(n_int):
        t = k * dt
        coef_dt = rate_coefficient(t, schedule) * dt
        active = t >= cfg.t0
        masked = np.flatnonzero(tokens == S)
        if masked.size == 0:
            break
        w, wsum = cache.rate_weight_rows(code, active)
        diag.n_steps += 1
        for d in masked:
            outflow = coef_dt * float(wsum[d])
            if outflow > 1.0:
                diag.overflow_renormalizations += 1
                outflow = 1.0
            if gen.random() < outflow:
                s = _draw_from_weights(w[d], gen.random(), step=k, position=int(d))
                tokens[d] = s
                code += (s - S) * int(pows[d])
                perm.append(int(d))
                times.append(t + dt)
    # force-complete residual masks from the final per-position distribution
    masked = np.flatnonzero(tokens == S)
    if masked.size:
        active = (1.0 - dt) >= cfg.t0
        w, _ = cache.rate_weight_rows(code, active)
        for d in masked:
            s = _draw_from_weights(w[d], gen.random(), step=n_int, position=int(d))
            tokens[d] = s
            code += (s - S) * int(pows[d])
            perm.append(int(d))
            times.append(1.0)
    # rebuild the one-unmask-per-step state trace
    trace: list = [np.full(D, S, dtype=np.int64)]
    for d in perm:
        nxt = trace[-1].copy()
        nxt[d] = tokens[d]
        trace.append(nxt)
    diag.wall_time_s = time.perf_counter() - t_start
    path = DecodePath(
        permutation=np.array(perm, dtype=np.int64),
        jump_times=np.array(times),
        states=trace,
        S=S,
    )
    return TokenSequence(tokens, Alphabet(S)), path, diag


def euler_sample_many(
    denoiser: Denoiser,
    cfg: GuidanceConfig,
    schedule: InterpolationSchedule,
    dt: float,
    n: int,
    rng,
):
    """Vectorized n-chain Euler integration; returns (token matrix, diagnostics).

    Maintains the still-masked (chain, position) pairs as flat arrays; each
    step draws one Bernoulli per pair and one categorical per jumper.
    """
    if cfg.mode not in EULER_MODES:
        raise ValueError(f"Euler integration supports modes {EULER_MODES} (got {cfg.mode!r})")
    n_int = _check_dt(dt)
    D, S = denoiser.D, denoiser.S
    diag = SamplerDiagnostics(sampler="euler_many", n_chains=n)
    cache = _ContextCache(denoiser, cfg, diag)
    t_start = time.perf_counter()
    if not cache.cacheable:
        if not hasattr(rng, "substream"):
            raise ValueError("nondeterministic components require a RandomSource")
        rows = np.empty((n, D), dtype=np.int64)
        for k in range(n):
            x, _, d1 = euler_sample(denoiser, cfg, schedule, dt, rng.substream(k))
            rows[k] = x.tokens
            diag.n_steps += d1.n_steps
            diag.denoiser_evals += d1.denoiser_evals
            diag.predictor_evals += d1.predictor_evals
            diag.overflow_renormalizations += d1.overflow_renormalizations
        diag.wall_time_s = time.perf_counter() - t_start
        return rows, diag

    gen = as_generator(rng)
    pows = cache.pows
    tokens = np.full((n, D), S, dtype=np.int64)
    codes = np.full(n, int(sum(S * pows)), dtype=np.int64)
    chain_idx = np.repeat(np.arange(n), D)
    pos_idx = np.tile(np.arange(D), n)
    unguided = not cfg.guided
    cdf_cache: dict = {}

    def pair_tables(codes_now, pos_now, active):
        """(jump weights sums, cdf matrix indices) for the given pairs."""
        keys = codes_now * D + pos_now
        uniq, inv = np.unique(keys, return_inverse=True)
        sums = np.empty(uniq.size)
        cdfs = np.empty((uniq.size, S))
        for j, key in enumerate(uniq):
            k = int(key)
            got = cdf_cache.get((k, active))
            if got is None:
                code, d = divmod(k, D)
                w, ws = cache.rate_weight_rows(code, active)
                total = float(ws[d])
                if not (math.isfinite(total) and total > 0.0):
                    raise DegenerateStepError(-1, d)
                got = (total, np.cumsum(w[d]) / total)
                cdf_cache[(k, active)] = got
            sums[j] = got[0]
            cdfs[j] = got[1]
        return sums[inv], cdfs, inv

    for k in range(n_int):
        if chain_idx.size == 0:
            break
        t = k * dt
        coef_dt = rate_coefficient(t, schedule) * dt
        active = t >= cfg.t0
        diag.n_steps += 1
        if unguided:
            outflow = np.full(chain_idx.size, coef_dt)
        else:
            sums, cdfs, inv = pair_tables(codes[chain_idx], pos_idx, active)
            outflow = coef_dt * sums
        over = outflow > 1.0
        diag.overflow_renormalizations += int(over.sum())
        np.clip(outflow, None, 1.0, out=outflow)
        jump = gen.random(chain_idx.size) < outflow
        if jump.any():
            jc, jp = chain_idx[jump], pos_idx[jump]
            if unguided:
                _, cdfs, inv_j = pair_tables(codes[jc], jp, active)
            else:
                inv_j = inv[jump]
            u = gen.random(jc.size)
            draws = (cdfs[inv_j] < u[:, None]).sum(axis=1).clip(max=S - 1)
            tokens[jc, jp] = draws
            # one chain can jump at several positions in a single step
            np.add.at(codes, jc, (draws - S) * pows[jp])
            chain_idx, pos_idx = chain_idx[~jump], pos_idx[~jump]
    if chain_idx.size:
        active = (1.0 - dt) >= cfg.t0
        _, cdfs, inv_j = pair_tables(codes[chain_idx], pos_idx, active)
        u = gen.random(chain_idx.size)
        draws = (cdfs[inv_j] < u[:, None]).sum(axis=1).clip(max=S - 1)
        tokens[chain_idx, pos_idx] = draws
    diag.wall_time_s = time.perf_counter() - t_start
    return tokens, diag
