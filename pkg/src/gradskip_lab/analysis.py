"""Lyapunov tracking, rate and parameter calculators, and oracle checks."""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import (ConstantsError, EnumerationSizeError, OracleCheckError,
                     ParameterError, RateInvalidError)
from .kernels import simulate_rounds
from .numerics import SERVER, stream_key

_REL = 1e-12


@dataclass(frozen=True)
class RatePrediction:
    """Linear rate ``E Psi_t <= (1 - rho)^t Psi_0`` and derived complexities.

    ``iteration_complexity`` and ``communication_complexity`` are the factors
    multiplying ``log(1/eps)``: ``1/rho`` and ``p/rho``.
    """

    rho: float
    gamma_max: float
    iteration_complexity: float
    communication_complexity: float

    @property
    def factor(self):
        return 1.0 - self.rho


def lyapunov(x, h, x_star, h_star, gamma, p):
    """``sum_i |x_i - x*|^2 + (gamma/p)^2 sum_i |h_i - h_i*|^2``.

    ``x`` and ``h`` are ``(n, d)``; ``x_star`` is ``(d,)`` (or already
    broadcast) and ``h_star`` is ``(n, d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    h_star = np.asarray(h_star, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x.shape != h.shape or h.shape != h_star.shape or x.shape[-1] != x_star.shape[-1]:
        raise ParameterError("dimension mismatch in Lyapunov arguments")
    dx = x - x_star
    dh = h - h_star
    return float(np.sum(dx * dx) + (gamma / p) ** 2 * np.sum(dh * dh))


def gradskip_stepsize_bound(L, p, q):
    """``min_i p^2 / (L_i (1 - q_i (1 - p^2)))``."""
    L = np.asarray(L, dtype=np.float64)
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), L.shape)
    return float(np.min(p * p / (L * (1.0 - q * (1.0 - p * p)))))


def gradskip_rate(gamma, mu, p, q, L=None):
    """Rate of GradSkip: ``rho = min(gamma mu, 1 - q_max (1 - p^2))``.

    When ``L`` is given the step-size is checked against
    :func:`gradskip_stepsize_bound` and :class:`RateInvalidError` is raised if
    it is exceeded.
    """
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if not (0 < p <= 1) or np.any(q < 0) or np.any(q > 1):
        raise ParameterError("need 0 < p <= 1 and 0 <= q_i <= 1")
    gmax = np.inf
    if L is not None:
        gmax = gradskip_stepsize_bound(L, p, q)
        if gamma > gmax * (1 + _REL):
            raise RateInvalidError(f"step-size {gamma:.6g} exceeds bound {gmax:.6g}")
    rho = min(gamma * mu, 1.0 - q.max() * (1.0 - p * p))
    if rho <= 0:
        raise RateInvalidError("rate is not positive")
    return RatePrediction(rho, gmax, 1.0 / rho, p / rho)


def plus_stepsize_bound(omega, Omega, L):
    """``1 / lambda_max(L Omega~)`` with ``Omega~ = I + w(w+2) Omega (I+Omega)^-1``."""
    Omega = np.asarray(Omega, dtype=np.float64)
    L = np.broadcast_to(np.asarray(L, dtype=np.float64), Omega.shape)
    with np.errstate(invalid="ignore"):
        frac = np.where(np.isinf(Omega), 1.0, Omega / (1.0 + Omega))
    tilde = 1.0 + omega * (omega + 2.0) * frac
    return float(1.0 / np.max(L * tilde))


def plus_rate(gamma, mu, omega, Omega, L):
    """Rate of GradSkip+: ``rho = min(gamma mu, delta)``.

    ``delta = 1 - (1 - 1/(1+omega)^2) / (1 + lambda_min(Omega))``. ``Omega``
    and ``L`` are diagonals.
    """
    Omega = np.atleast_1d(np.asarray(Omega, dtype=np.float64))
    if omega < 0 or np.any(Omega < 0):
        raise ParameterError("variance parameters must be non-negative")
    gmax = plus_stepsize_bound(omega, Omega, L)
    if gamma > gmax * (1 + _REL):
        raise RateInvalidError(f"step-size {gamma:.6g} exceeds bound {gmax:.6g}")
    delta = 1.0 - (1.0 - 1.0 / (1.0 + omega) ** 2) / (1.0 + Omega.min())
    rho = min(gamma * mu, delta)
    comm = (1.0 / (1.0 + omega)) / rho if rho > 0 else np.inf
    return RatePrediction(rho, gmax, 1.0 / rho if rho > 0 else np.inf, comm)


def expected_local_steps(p, q):
    """Expected fresh gradients per communication round: ``1/(1 - q(1-p))``."""
    if not (0 < p <= 1):
        raise ParameterError("p must lie in (0, 1]")
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0) or np.any(q > 1):
        raise ParameterError("q must lie in [0, 1]")
    out = 1.0 / (1.0 - q * (1.0 - p))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OptimalParameters:
    p: float
    q: np.ndarray
    expected_steps: np.ndarray


def optimal_parameters(kappas):
    """Communication/local-step probabilities minimising local work.

    ``p = 1/sqrt(kappa_max)`` and ``q_i = (1 - 1/kappa_i)/(1 - 1/kappa_max)``;
    with all ``kappa_i`` equal the ``0/0`` is resolved as ``q_i = 1``.
    """
    k = np.asarray(kappas, dtype=np.float64)
    if k.size == 0 or np.any(~np.isfinite(k)) or np.any(k < 1):
        raise ConstantsError("condition numbers must be finite and >= 1")
    kmax = k.max()
    p = 1.0 / np.sqrt(kmax)
    if kmax == 1.0:
        q = np.ones_like(k)
    else:
        q = np.minimum((1.0 - 1.0 / k) / (1.0 - 1.0 / kmax), 1.0)
        q[k == kmax] = 1.0
    steps = k * (1.0 + np.sqrt(kmax)) / (k + np.sqrt(kmax))
    cap = np.minimum(k, np.sqrt(kmax))
    if np.any(steps > cap * (1 + 1e-12)):
        raise OracleCheckError("expected local steps exceed min(kappa_i, sqrt(kappa_max))")
    return OptimalParameters(float(p), q, steps)


def gradient_ratio(kappas):
    """Expected-gradient ratio ProxSkip / GradSkip under optimal parameters."""
    k = np.asarray(kappas, dtype=np.float64)
    if np.any(k < 1):
        raise ConstantsError("condition numbers must be >= 1")
    s = np.sqrt(k.max())
    terms = k * (1.0 + s) / (k + s)
    # clients at kappa_max contribute exactly sqrt(kappa_max)
    terms[k == k.max()] = s
    ratio = k.size * s / terms.sum()
    if ratio > k.size * (1 + 1e-12):
        raise OracleCheckError("gradient ratio exceeds the number of clients")
    return float(ratio)


def optimal_compute_times(kappas, t_max=1.0):
    """Per-client compute times minimising the waiting-time lower bound."""
    k = np.asarray(kappas, dtype=np.float64)
    if np.any(k < 1):
        raise ConstantsError("condition numbers must be >= 1")
    if not (0 < t_max <= 1):
        raise ParameterError("t_max must lie in (0, 1]")
    s = np.sqrt(k.max())
    t = t_max * (1.0 + s / k) / (1.0 + s / k.min())
    return np.clip(t, np.finfo(float).tiny, t_max)


def _coin_keys(seed, n):
    return stream_key(seed, (SERVER, "theta")), [stream_key(seed, (i, "eta")) for i in range(n)]


def simulate_local_steps(p, q, rounds, seed=0, backend=None):
    """Monte Carlo per-round gradient counts using the simulator's coins.

    Returns the ``(rounds, n)`` call matrix and the ``(rounds,)`` round lengths.
    """
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    tkey, ekeys = _coin_keys(seed, q.size)
    calls, lengths, _ = simulate_rounds(tkey, ekeys, p, q, rounds, backend=backend)
    return calls, lengths


@dataclass(frozen=True)
class RatioEstimate:
    closed_form: float
    simulated: float
    rounds: int


def simulate_gradient_ratio(kappas, rounds=2000, seed=0, backend=None):
    """Closed-form and simulated ProxSkip/GradSkip gradient ratio."""
    opt = optimal_parameters(kappas)
    calls, lengths = simulate_local_steps(opt.p, opt.q, rounds, seed, backend)
    sim = len(opt.q) * lengths.sum() / calls.sum()
    return RatioEstimate(gradient_ratio(kappas), float(sim), rounds)


@dataclass(frozen=True)
class WaitingTime:
    t_proxskip: float        # closed form t_max / p
    t_gradskip: float        # Monte Carlo mean
    stderr: float
    t_proxskip_mc: float     # Monte Carlo of t_max * Geo(p) on the same coins
    rounds: int


def waiting_time(p, q, times, trials=100_000, seed=0, backend=None):
    """Expected waiting time between communications for ProxSkip and GradSkip.

    ``T_p = t_max / p`` in closed form; ``T_g = E max_i t_i min(Geo(1-q_i),
    Geo(p))`` by Monte Carlo over ``trials`` rounds. Raises
    :class:`OracleCheckError` if ``T_g`` exceeds ``T_p`` by more than three
    standard errors.
    """
    times = np.asarray(times, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if times.shape != q.shape:
        raise ParameterError("times and q must have equal length")
    if np.any(times <= 0) or np.any(times > 1):
        raise ParameterError("compute times must lie in (0, 1]")
    if trials < 10_000:
        raise ParameterError("waiting time needs at least 10^4 trials")
    calls, lengths = simulate_local_steps(p, q, trials, seed, backend)
    per_round = np.max(calls * times, axis=1)
    tg = float(per_round.mean())
    se = float(per_round.std(ddof=1) / np.sqrt(trials))
    tp = float(times.max() / p)
    if tg > tp + 3 * se + 1e-12 * tp:
        raise OracleCheckError(f"T_g={tg:.6g} exceeds T_p={tp:.6g} beyond 3 standard errors")
    return WaitingTime(tp, tg, se, float(times.max() * lengths.mean()), trials)


@dataclass(frozen=True)
class OneStepReport:
    enumerated: float
    closed_form: float
    psi: float
    rho: float
    contraction_checked: bool
    contracts: bool
    relative_gap: float


MAX_ORACLE_CLIENTS = 12


def one_step_expectation_oracle(x, h, lifted, gamma, p, q, reference, check_contraction=None):
    """Expected next Lyapunov value by coin enumeration and in closed form.

    Every ``(theta, eta_1, ..., eta_n)`` outcome is pushed through the real
    update and weighted by its probability. The closed form is
    ``sum_i |w_i - w_i*|^2 + (1-q_i)(1-p^2)(g/p)^2 |grad f_i(x_i) - h_i*|^2
    + q_i (1-p^2)(g/p)^2 |h_i - h_i*|^2`` with ``w_i = x_i - g grad f_i(x_i)``
    and ``w_i* = x* - g h_i*``. If ``gamma`` is within the step-size bound
    (or ``check_contraction`` is true) the enumerated value is also compared
    with ``(1 - rho) Psi_t``.
    """
    from .methods import GradSkipState, gradskip_update

    n = lifted.n
    if n > MAX_ORACLE_CLIENTS:
        raise EnumerationSizeError(f"{n} clients need 2^{n + 1} outcomes")
    x = lifted.as_blocks(x).copy()
    h = lifted.as_blocks(h).copy()
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), (n,))
    xs, hs = reference.x_star, reference.h_star
    psi = lyapunov(x, h, xs, hs, gamma, p)
    G = lifted.client_gradients(x)

    enumerated = 0.0
    for theta, *etas in product((0, 1), repeat=n + 1):
        eta = np.array(etas, dtype=bool)
        prob = (p if theta else 1.0 - p) * float(np.prod(np.where(eta, q, 1.0 - q)))
        if prob == 0.0:
            continue
        st = GradSkipState.initial(x, h)
        gradskip_update(st, lifted, gamma, p, bool(theta), eta, lazy=False)
        enumerated += prob * lyapunov(st.x, st.h, xs, hs, gamma, p)

    c = (1.0 - p * p) * (gamma / p) ** 2
    w = x - gamma * G - (xs - gamma * hs)
    closed = float(np.sum(w * w)
                   + c * np.sum((1.0 - q) * np.sum((G - hs) ** 2, axis=1))
                   + c * np.sum(q * np.sum((h - hs) ** 2, axis=1)))

    bound = gradskip_stepsize_bound(lifted.L, p, q)
    within = gamma <= bound * (1 + _REL)
    check = within if check_contraction is None else bool(check_contraction)
    rho = min(gamma * lifted.mu, 1.0 - q.max() * (1.0 - p * p))
    scale = max(abs(enumerated), abs(closed), 1e-300)
    gap = abs(enumerated - closed) / scale
    contracts = enumerated <= (1.0 - rho) * psi * (1 + 1e-10) + 1e-300
    return OneStepReport(enumerated, closed, psi, rho, check, bool(contracts), gap)
