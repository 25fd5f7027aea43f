"""GradSkip, GradSkip+ and the methods they reduce to.

Coin contract (shared by every runner and by the coin-level Monte Carlo in
:mod:`gradskip_lab.kernels`): at iteration ``t`` the communication coin is draw
``t`` of stream ``(seed, (SERVER, "theta"))`` and client ``i``'s local coin is
draw ``t`` of stream ``(seed, (i, "eta"))``. Idle clients still "consume"
their draw, so lazy and eager runs see the same randomness.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (gradskip_stepsize_bound, lyapunov, optimal_parameters,
                       plus_stepsize_bound)
from .compressors import (CompressorSpec, apply_mask, draw_coins, shift_weights,
                          variance_matrix)
from .errors import ConfigError, ConstantsError, StateError
from .numerics import SERVER, make_stream, stream_key
from .kernels import uniform_block
from .problems import LiftedObjective, reference_minimizer
from .regularizers import Regularizer, prox

METHODS = ("gradskip", "gradskip_plus", "proxskip", "proxgd", "randprox_fb")
PLUS_METHODS = ("gradskip_plus", "proxgd", "randprox_fb")
_TOL = 1e-12


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one simulated run.

    ``q`` may contain zeros (clients that always refresh their shift). ``times``
    are per-client gradient costs used for the simulated clock and ``t_com``
    is charged once per communication round.
    """

    gamma: float
    p: float
    q: tuple
    T: int
    seed: int = 0
    method: str = "gradskip"
    compressors: tuple = None
    times: tuple = None
    t_com: float = 1.0
    strict: bool = True
    h_init: str = "gradient"

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if self.times is not None:
            object.__setattr__(self, "times", tuple(float(v) for v in self.times))
        problems = []
        if self.method not in METHODS:
            problems.append(f"unknown method {self.method!r}")
        if not self.gamma > 0:
            problems.append("gamma must be positive")
        if not (0 < self.p <= 1):
            problems.append("p must lie in (0, 1]")
        if any(not (0 <= v <= 1) for v in self.q):
            problems.append("every q_i must lie in [0, 1]")
        if self.T < 0:
            problems.append("T must be non-negative")
        if self.times is not None and (len(self.times) != len(self.q)
                                       or any(not (0 < t <= 1) for t in self.times)):
            problems.append("times must give one value in (0, 1] per client")
        if self.t_com < 0:
            problems.append("t_com must be non-negative")
        if self.h_init not in ("gradient", "zero"):
            problems.append("h_init must be 'gradient' or 'zero'")
        if self.method in PLUS_METHODS and self.compressors is None:
            problems.append(f"method {self.method} needs a compressor pair")
        if problems:
            raise ConfigError("; ".join(problems), problems)

    @property
    def n(self):
        return len(self.q)

    def with_(self, **changes):
        return replace(self, **changes)


# --------------------------------------------------------------------- GradSkip

@dataclass
class GradSkipState:
    """Per-client variables, stored as ``(n, d)`` arrays."""

    x: np.ndarray
    h: np.ndarray
    x_hat: np.ndarray
    h_hat: np.ndarray
    cached_grad: np.ndarray
    idle: np.ndarray
    grad_calls: np.ndarray

    @classmethod
    def initial(cls, x, h):
        x = np.array(x, dtype=np.float64)
        h = np.array(h, dtype=np.float64)
        n = x.shape[0]
        return cls(x, h, x.copy(), h.copy(), np.full_like(x, np.nan),
                   np.zeros(n, dtype=bool), np.zeros(n, dtype=np.int64))


@dataclass(frozen=True)
class StepReport:
    fresh: np.ndarray        # clients that evaluated a gradient this iteration
    communicated: bool


def gradskip_update(state, lifted, gamma, p, theta, eta, lazy=True):
    """One GradSkip iteration with given coins; mutates ``state``.

    In lazy mode idle clients reuse their cached gradient instead of calling
    the oracle. Both modes count only the calls the lazy mode makes.
    """
    if state.h is None or np.any(~np.isfinite(state.h)):
        raise StateError("shifts are not initialised")
    eta = np.asarray(eta, dtype=bool)
    fresh = ~state.idle
    if lazy:
        G = state.cached_grad.copy()
        rows = np.flatnonzero(fresh)
        if rows.size:
            G[rows] = lifted.client_gradients(state.x, rows)
    else:
        G = lifted.client_gradients(state.x)
    state.grad_calls += fresh

    h_hat = np.where(eta[:, None], state.h, G)
    x_hat = state.x - gamma * (G - h_hat)
    if theta:
        xbar = np.mean(x_hat - (gamma / p) * h_hat, axis=0)
        x_new = np.broadcast_to(xbar, x_hat.shape).copy()
    else:
        x_new = x_hat
    h_new = h_hat + (p / gamma) * (x_new - x_hat)

    state.x, state.h, state.x_hat, state.h_hat = x_new, h_new, x_hat, h_hat
    state.cached_grad = G
    state.idle = np.zeros_like(state.idle) if theta else (state.idle | ~eta)
    return StepReport(fresh, bool(theta))


def gradskip_coins(seed, n, start, count):
    """Communication and local coins for iterations ``start .. start+count-1``.

    Returns uniforms; ``theta = u_theta < p`` and ``eta_i = u_eta[i] < q_i``.
    """
    u_theta = uniform_block(stream_key(seed, (SERVER, "theta")), start, count)
    u_eta = np.stack([uniform_block(stream_key(seed, (i, "eta")), start, count)
                      for i in range(n)]) if n else np.empty((0, count))
    return u_theta, u_eta


def gradskip_step(state, cfg, lifted, t, lazy=True):
    """One iteration at index ``t`` drawing the coins from ``cfg.seed``'s streams."""
    u_theta, u_eta = gradskip_coins(cfg.seed, lifted.n, t, 1)
    theta = bool(u_theta[0] < cfg.p)
    eta = u_eta[:, 0] < np.asarray(cfg.q)
    return gradskip_update(state, lifted, cfg.gamma, cfg.p, theta, eta, lazy=lazy)


@dataclass
class Trace:
    """Per-iteration record of a run (row ``t`` describes the state after ``t`` steps)."""

    method: str
    seed: int
    psi: np.ndarray
    dist_sq: np.ndarray
    comm_rounds: np.ndarray
    grad_calls: np.ndarray
    sim_time: np.ndarray
    iterates: np.ndarray = None
    shifts: np.ndarray = None
    final_state: object = None
    config: RunConfig = None
    info: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.psi.size - 1

    @property
    def t(self):
        return np.arange(self.psi.size)

    def round_gradient_calls(self):
        """Gradient calls per completed communication round, shape ``(R, n)``."""
        comm = np.flatnonzero(np.diff(self.comm_rounds) > 0) + 1
        marks = self.grad_calls[comm]
        return np.diff(np.vstack([np.zeros_like(self.grad_calls[:1]), marks]), axis=0)


class _Clock:
    """Simulated wall clock: each round costs ``max_i t_i * calls_i + t_com``."""

    def __init__(self, times, t_com, n):
        self.times = np.ones(n) if times is None else np.asarray(times, dtype=np.float64)
        self.t_com = t_com
        self.done = 0.0
        self.round_calls = np.zeros(n)

    def advance(self, fresh, communicated):
        self.round_calls += fresh
        now = self.done + float(np.max(self.times * self.round_calls, initial=0.0))
        if communicated:
            self.done = now + self.t_com
            self.round_calls[:] = 0
            return self.done
        return now


def _check_gradskip_step(cfg, lifted):
    if len(cfg.q) != lifted.n:
        raise ConfigError(f"config has {len(cfg.q)} q values for {lifted.n} clients")
    if cfg.strict:
        bound = gradskip_stepsize_bound(lifted.L, cfg.p, cfg.q)
        if cfg.gamma > bound * (1 + _TOL):
            raise ConfigError(f"gamma={cfg.gamma:.6g} exceeds the step-size bound {bound:.6g}")


def _initial_blocks(lifted, cfg, x0, h0):
    n, d = lifted.n, lifted.d
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=np.float64)
    X0 = np.tile(x0, (n, 1)) if x0.shape == (d,) else lifted.as_blocks(x0).copy()
    if not np.all(X0 == X0[0]):
        raise StateError("all clients must start from the same iterate")
    if h0 is not None:
        H0 = lifted.as_blocks(h0).copy()
    elif cfg.h_init == "gradient":
        H0 = lifted.client_gradients(X0)
    else:
        H0 = np.zeros((n, d))
    return X0, H0


def run_gradskip(lifted, cfg, lazy=True, reference=None, x0=None, h0=None,
                 store_iterates=False):
    """Run ``cfg.T`` GradSkip iterations and record a :class:`Trace`.

    ``proxskip`` configurations run through the same engine (``q_i = 1``).
    """
    if not isinstance(lifted, LiftedObjective):
        raise ConfigError("run_gradskip needs a LiftedObjective")
    _check_gradskip_step(cfg, lifted)
    ref = reference if reference is not None else reference_minimizer(lifted)
    n, T = lifted.n, cfg.T
    X0, H0 = _initial_blocks(lifted, cfg, x0, h0)
    state = GradSkipState.initial(X0, H0)
    q = np.asarray(cfg.q)
    u_theta, u_eta = gradskip_coins(cfg.seed, n, 0, T)
    clock = _Clock(cfg.times, cfg.t_com, n)

    psi = np.empty(T + 1)
    dist = np.empty(T + 1)
    comm = np.zeros(T + 1, dtype=np.int64)
    calls = np.zeros((T + 1, n), dtype=np.int64)
    sim = np.zeros(T + 1)
    its = np.empty((T + 1, n, lifted.d)) if store_iterates else None
    shs = np.empty((T + 1, n, lifted.d)) if store_iterates else None

    def record(t):
        dx = state.x - ref.x_star
        dist[t] = float(np.sum(dx * dx))
        psi[t] = lyapunov(state.x, state.h, ref.x_star, ref.h_star, cfg.gamma, cfg.p)
        calls[t] = state.grad_calls
        if store_iterates:
            its[t] = state.x
            shs[t] = state.h

    record(0)
    for t in range(T):
        theta = bool(u_theta[t] < cfg.p)
        rep = gradskip_update(state, lifted, cfg.gamma, cfg.p, theta, u_eta[:, t] < q, lazy=lazy)
        comm[t + 1] = comm[t] + rep.communicated
        sim[t + 1] = clock.advance(rep.fresh, rep.communicated)
        record(t + 1)
    return Trace(cfg.method, cfg.seed, psi, dist, comm, calls, sim, its, shs, state, cfg,
                 {"lazy": lazy, "x_star": ref.x_star})


# -------------------------------------------------------------------- GradSkip+

@dataclass
class PlusState:
    """GradSkip+ variables on the flat lifted space."""

    x: np.ndarray
    h: np.ndarray
    x_hat: np.ndarray
    h_hat: np.ndarray
    g_hat: np.ndarray


def compressor_omega(spec):
    """Scalar ``omega`` such that ``spec`` has variance at most ``(1+omega)|x|^2``."""
    om = variance_matrix(spec)
    return float(np.max(om))


def gradskip_plus_update(state, f, reg, gamma, c_omega, c_Omega, mask_omega, mask_Omega):
    """One GradSkip+ iteration with given compressor masks; mutates ``state``."""
    g = f.gradient(state.x)
    v = g - state.h
    h_hat = g - shift_weights(c_Omega) * apply_mask(c_Omega, mask_Omega, v)
    x_hat = state.x - gamma * (g - h_hat)
    s = gamma * (1.0 + compressor_omega(c_omega))
    u = x_hat - prox(reg, s, x_hat - s * h_hat)
    g_hat = apply_mask(c_omega, mask_omega, u) / s
    x_new = x_hat - gamma * g_hat
    h_new = h_hat + (x_new - x_hat) / s
    state.x, state.h, state.x_hat, state.h_hat, state.g_hat = x_new, h_new, x_hat, h_hat, g_hat
    return state


def _plus_streams(seed, c_Omega, n_blocks):
    s_omega = make_stream(seed, (SERVER, "theta"))
    if c_Omega.kind == "block_bernoulli":
        s_Omega = [make_stream(seed, (i, "eta")) for i in range(n_blocks)]
    else:
        s_Omega = make_stream(seed, (SERVER, "eta"))
    return s_omega, s_Omega


def gradskip_plus_step(state, cfg, f, reg, streams):
    """One iteration drawing compressor coins from ``streams = (s_omega, s_Omega)``."""
    if cfg.compressors is None:
        raise ConfigError("GradSkip+ needs a compressor pair")
    c_omega, c_Omega = cfg.compressors
    s_omega, s_Omega = streams
    m_Omega = c_Omega.expand(draw_coins(c_Omega, s_Omega))
    m_omega = c_omega.expand(draw_coins(c_omega, s_omega))
    gradskip_plus_update(state, f, reg, cfg.gamma, c_omega, c_Omega, m_omega, m_Omega)
    return m_omega


def _check_plus_step(cfg, f):
    c_omega, c_Omega = cfg.compressors
    for c in (c_omega, c_Omega):
        if c.d != f.dim:
            raise ConfigError(f"compressor dimension {c.d} does not match problem dimension {f.dim}")
    if cfg.strict:
        bound = plus_stepsize_bound(compressor_omega(c_omega), variance_matrix(c_Omega),
                                    f.smoothness_matrix())
        if cfg.gamma > bound * (1 + _TOL):
            raise ConfigError(f"gamma={cfg.gamma:.6g} exceeds the step-size bound {bound:.6g}")


def run_gradskip_plus(f, reg, cfg, reference=None, x0=None, h0=None, store_iterates=False):
    """Run GradSkip+ on ``f + reg`` over the flat lifted space.

    ``reference`` is a pair ``(x_star, h_star)`` of flat vectors; for the
    consensus regulariser it defaults to the consensus minimiser.
    """
    if cfg.compressors is None:
        raise ConfigError("GradSkip+ needs a compressor pair")
    _check_plus_step(cfg, f)
    c_omega, c_Omega = cfg.compressors
    N = f.dim
    if reference is None:
        if reg.kind != "consensus":
            raise ConfigError("a reference point is required for non-consensus regularisers")
        ref = reference_minimizer(f)
        xs, hs = np.tile(ref.x_star, f.n), ref.h_star.reshape(-1)
    else:
        xs, hs = (np.asarray(a, dtype=np.float64).reshape(-1) for a in reference)
    x = np.zeros(N) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    if x.size == f.d and f.n > 1:
        x = np.tile(x, f.n)
    if h0 is not None:
        h = np.asarray(h0, dtype=np.float64).reshape(-1).copy()
    elif cfg.h_init == "gradient":
        h = f.gradient(x)
    else:
        h = np.zeros(N)
    state = PlusState(x, h, x.copy(), h.copy(), np.zeros(N))
    streams = _plus_streams(cfg.seed, c_Omega, f.n)
    omega = compressor_omega(c_omega)
    weight = (cfg.gamma * (1.0 + omega)) ** 2
    T, n = cfg.T, f.n
    clock = _Clock(cfg.times, cfg.t_com, n)

    psi = np.empty(T + 1)
    dist = np.empty(T + 1)
    comm = np.zeros(T + 1, dtype=np.int64)
    calls = np.zeros((T + 1, n), dtype=np.int64)
    sim = np.zeros(T + 1)
    its = np.empty((T + 1, N)) if store_iterates else None
    shs = np.empty((T + 1, N)) if store_iterates else None
    every = np.ones(n, dtype=bool)

    def record(t):
        dx = state.x - xs
        dh = state.h - hs
        dist[t] = float(dx @ dx)
        psi[t] = dist[t] + weight * float(dh @ dh)
        if store_iterates:
            its[t] = state.x
            shs[t] = state.h

    record(0)
    for t in range(T):
        mask = gradskip_plus_step(state, cfg, f, reg, streams)
        fired = bool(np.any(mask))
        comm[t + 1] = comm[t] + fired
        calls[t + 1] = calls[t] + 1
        sim[t + 1] = clock.advance(every, fired)
        record(t + 1)
    return Trace(cfg.method, cfg.seed, psi, dist, comm, calls, sim, its, shs, state, cfg,
                 {"x_star": xs})


# ------------------------------------------------------ independent references

def proxskip_reference(lifted, gamma, p, T, seed, x0=None, h0=None):
    """Textbook ProxSkip on the consensus problem, one client at a time.

    Uses the scalar coin path (:func:`numerics.flip` semantics) on the server
    stream. Returns the ``(T+1, n, d)`` iterates.
    """
    n, d = lifted.n, lifted.d
    stream = make_stream(seed, (SERVER, "theta"))
    X = np.tile(np.zeros(d) if x0 is None else np.asarray(x0, float), (n, 1))
    H = (np.array([f.gradient(X[i]) for i, f in enumerate(lifted.locals)])
         if h0 is None else np.array(h0, dtype=float).reshape(n, d))
    out = [X.copy()]
    for _ in range(T):
        Xh = np.array([X[i] - gamma * (f.gradient(X[i]) - H[i])
                       for i, f in enumerate(lifted.locals)])
        if stream.uniform() < p:
            avg = sum(Xh[i] - (gamma / p) * H[i] for i in range(n)) / n
            Xn = np.array([avg] * n)
        else:
            Xn = Xh
        H = H + (p / gamma) * (Xn - Xh)
        X = Xn
        out.append(X.copy())
    return np.array(out)


def proxgd_reference(f, reg, gamma, T, x0):
    """``x <- prox_{gamma reg}(x - gamma grad f(x))``; returns all iterates."""
    x = np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    out = [x.copy()]
    for _ in range(T):
        x = prox(reg, gamma, x - gamma * f.gradient(x))
        out.append(x.copy())
    return np.array(out)


def distributed_gd_reference(lifted, gamma, T, x0=None):
    """Synchronised local step plus averaging every iteration."""
    x = np.zeros(lifted.d) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    out = [np.tile(x, (lifted.n, 1))]
    for _ in range(T):
        x = np.mean([x - gamma * f.gradient(x) for f in lifted.locals], axis=0)
        out.append(np.tile(x, (lifted.n, 1)))
    return np.array(out)


# ---------------------------------------------------------------------- presets

def preset_config(method, lifted, T=1000, seed=0, **overrides):
    """Theory-optimal parameters for ``method`` on ``lifted``.

    GradSkip uses ``p = 1/sqrt(kappa_max)``, the optimal ``q_i`` and
    ``gamma = 1/L_max``; ProxSkip keeps ``p`` with ``q_i = 1``; the GradSkip+
    presets express ProxGD, RandProx-FB and GradSkip through compressors.
    """
    kappas = lifted.kappas
    if np.any(~np.isfinite(kappas)) or np.max(kappas) < 1:
        raise ConstantsError("kappa_max must be finite and at least 1")
    opt = optimal_parameters(np.maximum(kappas, 1.0))
    gamma = 1.0 / float(np.max(lifted.L))
    n, N = lifted.n, lifted.dim
    p, q, comps = opt.p, tuple(opt.q), None
    if method == "proxskip":
        q = (1.0,) * n
    elif method == "gradskip_plus":
        comps = (CompressorSpec.bernoulli(p, N), CompressorSpec.block_bernoulli(q, lifted.d))
    elif method == "proxgd":
        p, q = 1.0, (1.0,) * n
        comps = (CompressorSpec.identity(N), CompressorSpec.identity(N))
    elif method == "randprox_fb":
        q = (1.0,) * n
        comps = (CompressorSpec.coordinate_prob([p] * N), CompressorSpec.identity(N))
    elif method != "gradskip":
        raise ConfigError(f"unknown method {method!r}")
    params = dict(gamma=gamma, p=p, q=q, T=T, seed=seed, method=method, compressors=comps)
    params.update(overrides)
    return RunConfig(**params)


def run(lifted, cfg, **kwargs):
    """Dispatch on ``cfg.method``; GradSkip+ presets use the consensus regulariser."""
    if cfg.method in ("gradskip", "proxskip"):
        return run_gradskip(lifted, cfg, **kwargs)
    reg = Regularizer.consensus(lifted.n, lifted.d)
    ref = kwargs.pop("reference", None)
    if ref is not None and not isinstance(ref, tuple):
        ref = (np.tile(ref.x_star, lifted.n), ref.h_star.reshape(-1))
    kwargs.pop("lazy", None)
    return run_gradskip_plus(lifted, reg, cfg, reference=ref, **kwargs)
