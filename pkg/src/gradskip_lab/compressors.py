"""Unbiased randomised compressors with diagonal variance descriptors.

A compressor ``C`` belongs to the class with matrix parameter ``Omega`` if
``E C(x) = x`` and ``E |(I + Omega)^-1 C(x)|^2 <= |x|^2_{(I + Omega)^-1}``.
Every member here keeps coordinate ``j`` with probability ``p_j`` (scaled by
``1/p_j``) and zeroes it otherwise, so ``Omega = Diag(1/p_j - 1)``.

Coin layout per call:

* ``identity`` -- no draws;
* ``bernoulli`` -- one draw for the whole vector;
* ``coordinate_prob`` -- ``d`` draws in coordinate order;
* ``block_bernoulli`` -- one draw per block; with a list of streams block
  ``i`` draws from ``streams[i]``.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import EnumerationSizeError, ParameterError
from .numerics import RngStream


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    d: int
    p: float = 1.0
    probs: tuple = ()
    block: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("dimension must be positive")
        if self.kind == "identity":
            return
        if self.kind == "bernoulli":
            if not (0.0 < self.p <= 1.0):
                raise ParameterError(f"bernoulli p must lie in (0, 1], got {self.p}")
        elif self.kind == "coordinate_prob":
            if len(self.probs) != self.d:
                raise ParameterError("coordinate_prob needs one probability per coordinate")
            if any(not (0.0 < q <= 1.0) for q in self.probs):
                raise ParameterError("coordinate probabilities must lie in (0, 1]")
        elif self.kind == "block_bernoulli":
            # q = 0 is allowed here: the block is never kept and Omega is
            # infinite, which GradSkip uses for clients with kappa_i = 1
            if len(self.probs) * self.block != self.d:
                raise ParameterError("block_bernoulli needs len(probs) * block == d")
            if any(not (0.0 <= q <= 1.0) for q in self.probs):
                raise ParameterError("block probabilities must lie in [0, 1]")
        else:
            raise ParameterError(f"unknown compressor kind {self.kind!r}")

    @classmethod
    def identity(cls, d):
        return cls("identity", d)

    @classmethod
    def bernoulli(cls, p, d):
        return cls("bernoulli", d, p=float(p))

    @classmethod
    def coordinate_prob(cls, probs):
        probs = tuple(float(q) for q in probs)
        return cls("coordinate_prob", len(probs), probs=probs)

    @classmethod
    def block_bernoulli(cls, probs, block):
        probs = tuple(float(q) for q in probs)
        return cls("block_bernoulli", len(probs) * block, probs=probs, block=int(block))

    @property
    def n_coins(self):
        return {"identity": 0, "bernoulli": 1, "coordinate_prob": self.d,
                "block_bernoulli": len(self.probs)}[self.kind]

    def coin_probs(self):
        if self.kind == "identity":
            return np.empty(0)
        if self.kind == "bernoulli":
            return np.array([self.p])
        return np.asarray(self.probs, dtype=np.float64)

    def keep_probs(self):
        """Per-coordinate probability of keeping the coordinate."""
        if self.kind == "identity":
            return np.ones(self.d)
        if self.kind == "bernoulli":
            return np.full(self.d, self.p)
        if self.kind == "coordinate_prob":
            return np.asarray(self.probs, dtype=np.float64)
        return np.repeat(np.asarray(self.probs, dtype=np.float64), self.block)

    def expand(self, coins):
        """Per-coordinate keep mask from the coin outcomes."""
        coins = np.asarray(coins, dtype=bool)
        if self.kind == "identity":
            return np.ones(self.d, dtype=bool)
        if self.kind == "bernoulli":
            return np.full(self.d, bool(coins[0]))
        if self.kind == "coordinate_prob":
            return coins.copy()
        return np.repeat(coins, self.block)


def draw_coins(spec, stream):
    """Consume the compressor's coins from ``stream`` (or a list of streams)."""
    probs = spec.coin_probs()
    if probs.size == 0:
        return np.empty(0, dtype=bool)
    if isinstance(stream, RngStream):
        return stream.uniforms(probs.size) < probs
    streams = list(stream)
    if len(streams) != probs.size:
        raise ParameterError(f"expected {probs.size} streams, got {len(streams)}")
    return np.array([s.uniform() < q for s, q in zip(streams, probs)], dtype=bool)


def apply_mask(spec, mask, x):
    """``C(x)`` for a given keep mask."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != spec.d:
        raise ParameterError(f"compressor of dimension {spec.d} got {x.size} entries")
    flat = x.reshape(-1)
    keep = spec.keep_probs()
    out = np.zeros_like(flat)
    np.divide(flat, keep, out=out, where=mask)
    return out.reshape(x.shape)


def compress(spec, stream, x):
    x = np.asarray(x, dtype=np.float64)
    if x.size != spec.d:
        raise ParameterError(f"compressor of dimension {spec.d} got {x.size} entries")
    return apply_mask(spec, spec.expand(draw_coins(spec, stream)), x)


def variance_matrix(spec):
    """Diagonal of ``Omega``; ``inf`` where a block is never kept."""
    with np.errstate(divide="ignore"):
        return 1.0 / spec.keep_probs() - 1.0


def shift_weights(spec):
    """Diagonal of ``(I + Omega)^-1``, finite even for never-kept blocks."""
    return spec.keep_probs()


def scalar_omega(spec):
    """Scalar variance parameter when ``Omega`` is a multiple of ``I``."""
    om = variance_matrix(spec)
    if not np.all(om == om[0]):
        raise ParameterError("compressor has non-uniform variance; use variance_matrix")
    return float(om[0])


def scalar_bound(omega_matrix):
    """``(1 + max Omega)^2 / (1 + min Omega) - 1``."""
    om = np.asarray(omega_matrix, dtype=np.float64).reshape(-1)
    if np.any(om < 0):
        raise ParameterError("Omega must be non-negative")
    return float((1.0 + om.max()) ** 2 / (1.0 + om.min()) - 1.0)


@dataclass(frozen=True)
class VarianceReport:
    lhs: float              # E |(I + Omega)^-1 C(x)|^2
    rhs: float              # |x|^2 weighted by (I + Omega)^-1
    stderr: float
    holds: bool
    scalar_lhs: float       # E |C(x)|^2
    scalar_rhs: float       # (1 + scalar_bound) |x|^2
    scalar_holds: bool
    mean: np.ndarray        # E C(x)
    method: str


MAX_ENUMERATION = 1 << 20


def _enumerate(spec, x):
    probs = spec.coin_probs()
    k = probs.size
    if 2 ** k > MAX_ENUMERATION:
        raise EnumerationSizeError(f"2^{k} outcomes exceed the enumeration limit")
    w = shift_weights(spec)
    lhs = slhs = 0.0
    mean = np.zeros_like(x)
    for outcome in product((False, True), repeat=k):
        coins = np.array(outcome, dtype=bool)
        prob = float(np.prod(np.where(coins, probs, 1.0 - probs)))
        if prob == 0.0:
            continue
        c = apply_mask(spec, spec.expand(coins), x)
        lhs += prob * float(np.sum((w * c) ** 2))
        slhs += prob * float(c @ c)
        mean += prob * c
    return lhs, slhs, mean


def verify_variance_bound(spec, x, trials=None, stream=None, tol=1e-12):
    """Check the matrix and scalar variance bounds at ``x``.

    With ``trials=None`` the expectation is computed exactly by enumerating
    every coin outcome; otherwise by Monte Carlo with ``trials >= 10**4``
    draws, accepting up to three standard errors of excess.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.d:
        raise ParameterError(f"compressor of dimension {spec.d} got {x.size} entries")
    w = shift_weights(spec)
    rhs = float(np.sum(w * x * x))
    omega = variance_matrix(spec)
    finite = np.all(np.isfinite(omega))
    sb = scalar_bound(omega) if finite else np.inf
    srhs = (1.0 + sb) * float(x @ x)
    if trials is None:
        lhs, slhs, mean = _enumerate(spec, x)
        se = sse = 0.0
        method = "enumeration"
    else:
        if trials < 10_000:
            raise ParameterError("Monte Carlo verification needs at least 10^4 trials")
        stream = stream if stream is not None else RngStream(0, (0, "variance"))
        probs = spec.coin_probs()
        keep = spec.keep_probs()
        coins = (stream.uniforms(trials * probs.size).reshape(trials, probs.size) < probs)
        if spec.kind == "identity":
            masks = np.ones((trials, spec.d), dtype=bool)
        elif spec.kind == "bernoulli":
            masks = np.repeat(coins, spec.d, axis=1)
        elif spec.kind == "coordinate_prob":
            masks = coins
        else:
            masks = np.repeat(coins, spec.block, axis=1)
        C = np.where(masks, x / np.where(keep > 0, keep, 1.0), 0.0)
        vals = np.sum((w * C) ** 2, axis=1)
        lhs = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(trials))
        svals = np.sum(C * C, axis=1)
        slhs = float(svals.mean())
        sse = float(svals.std(ddof=1) / np.sqrt(trials))
        mean = C.mean(axis=0)
        method = "monte_carlo"
    return VarianceReport(
        lhs=lhs, rhs=rhs, stderr=se,
        holds=bool(lhs <= rhs + 3.0 * se + tol * max(1.0, rhs)),
        scalar_lhs=slhs, scalar_rhs=srhs,
        scalar_holds=bool(slhs <= srhs + 3.0 * sse + tol * max(1.0, srhs)),
        mean=mean, method=method,
    )
