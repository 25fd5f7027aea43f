"""Hot kernels: counter-based uniforms and coin-level round simulation.

The generator is a stateless hash of ``(key, counter)``: two rounds of the
SplitMix64 finaliser. A stream's ``k``-th draw is ``uniform(key, k)``, so any
block of draws can be produced out of order, vectorised, or inside a numba
loop with bit-identical results.
"""

import numpy as np

from ._accel import njit, resolve_backend

GOLDEN = 0x9E3779B97F4A7C15
C1 = 0xBF58476D1CE4E5B9
C2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1
INV_2_53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------- pure python

def _mix64_int(z):
    z = ((z ^ (z >> 30)) * C1) & MASK64
    z = ((z ^ (z >> 27)) * C2) & MASK64
    return z ^ (z >> 31)


def uniform_int(key, counter):
    """Single draw using Python integers (reference path)."""
    bits = _mix64_int(_mix64_int((counter * GOLDEN) & MASK64) ^ key)
    return (bits >> 11) * INV_2_53


# ---------------------------------------------------------------------- numpy

_U30, _U27, _U31, _U11 = (np.uint64(s) for s in (30, 27, 31, 11))
_UC1, _UC2, _UGOLD = np.uint64(C1), np.uint64(C2), np.uint64(GOLDEN)


def _mix64_np(z):
    z = (z ^ (z >> _U30)) * _UC1
    z = (z ^ (z >> _U27)) * _UC2
    return z ^ (z >> _U31)


def _uniform_np(key, counters):
    counters = np.asarray(counters, dtype=np.uint64)
    bits = _mix64_np(_mix64_np(counters * _UGOLD) ^ np.uint64(key))
    return (bits >> _U11).astype(np.float64) * INV_2_53


# ---------------------------------------------------------------------- numba

@njit
def _mix64_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit
def _uniform_nb(key, counter):
    bits = _mix64_nb(_mix64_nb(np.uint64(counter) * np.uint64(0x9E3779B97F4A7C15)) ^ key)
    return np.float64(bits >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit
def _uniform_block_nb(key, start, count):
    out = np.empty(count, dtype=np.float64)
    k = np.uint64(key)
    for j in range(count):
        out[j] = _uniform_nb(k, start + j)
    return out


def uniform_block(key, start, count, backend=None):
    """Draws ``start, start+1, ..., start+count-1`` of the stream ``key``."""
    if count <= 0:
        return np.empty(0, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        return _uniform_block_nb(np.uint64(key), np.int64(start), np.int64(count))
    return _uniform_np(key, np.arange(start, start + count, dtype=np.uint64))


# ----------------------------------------------------------- round simulation
#
# A communication round is the run of iterations ending with the first
# theta == 1. Within a round client i evaluates a fresh gradient at every
# iteration until (and including) its first eta == 0; afterwards it is idle.
# Hence calls = min(Theta, H_i). theta at counter t is uniform(theta_key, t) < p
# and eta_i at counter t is uniform(eta_keys[i], t) < q_i, exactly the coins the
# simulator consumes at iteration t.

@njit
def _simulate_rounds_nb(theta_key, eta_keys, p, q, n_rounds, start):
    n = eta_keys.shape[0]
    calls = np.zeros((n_rounds, n), dtype=np.int64)
    lengths = np.zeros(n_rounds, dtype=np.int64)
    active = np.ones(n, dtype=np.bool_)
    tkey = np.uint64(theta_key)
    t = start
    for r in range(n_rounds):
        for i in range(n):
            active[i] = True
        length = 0
        while True:
            length += 1
            theta = _uniform_nb(tkey, t) < p
            for i in range(n):
                if active[i]:
                    calls[r, i] += 1
                    if not theta and _uniform_nb(eta_keys[i], t) >= q[i]:
                        active[i] = False
            t += 1
            if theta:
                break
        lengths[r] = length
    return calls, lengths, t


def _round_lengths_np(theta_key, p, n_rounds, start):
    chunk = int(min(max(4 * n_rounds / max(p, 1e-12), 1024), 1 << 20))
    hits = []
    found = 0
    t = start
    while found < n_rounds:
        u = _uniform_np(theta_key, np.arange(t, t + chunk, dtype=np.uint64))
        pos = np.flatnonzero(u < p) + t
        hits.append(pos[: n_rounds - found])
        found += min(pos.size, n_rounds - found)
        t += chunk
    ends = np.concatenate(hits)
    starts = np.empty_like(ends)
    starts[0] = start
    starts[1:] = ends[:-1] + 1
    return starts, ends - starts + 1, int(ends[-1] + 1)


def _first_zero_np(key, qi, starts, stop):
    """Counter of the first eta == 0 at or after each round start."""
    chunk = 1 << 20
    zeros = []
    t = int(starts[0])
    while t < stop:
        hi = min(t + chunk, stop)
        u = _uniform_np(key, np.arange(t, hi, dtype=np.uint64))
        zeros.append(np.flatnonzero(u >= qi) + t)
        t = hi
    z = np.concatenate(zeros) if zeros else np.empty(0, dtype=np.int64)
    idx = np.searchsorted(z, starts)
    out = np.full(starts.shape, np.iinfo(np.int64).max, dtype=np.int64)
    ok = idx < z.size
    out[ok] = z[idx[ok]]
    return out


def _simulate_rounds_np(theta_key, eta_keys, p, q, n_rounds, start):
    n = len(eta_keys)
    starts, lengths, stop = _round_lengths_np(theta_key, p, n_rounds, start)
    calls = np.empty((n_rounds, n), dtype=np.int64)
    for i in range(n):
        if q[i] <= 0.0:
            calls[:, i] = 1
        elif q[i] >= 1.0:
            calls[:, i] = lengths
        else:
            # the eta coin of the round's final (theta == 1) iteration is
            # irrelevant, so a zero found there still yields calls == length
            fz = _first_zero_np(int(eta_keys[i]), q[i], starts, stop)
            calls[:, i] = np.minimum(fz - starts + 1, lengths)
    return calls, lengths, stop


def simulate_rounds(theta_key, eta_keys, p, q, n_rounds, start=0, backend=None):
    """Simulate ``n_rounds`` communication rounds of GradSkip coin flips.

    Parameters
    ----------
    theta_key : int
        Key of the server's communication-coin stream.
    eta_keys : sequence of int
        Keys of the per-client local-step coin streams.
    p : float
        Communication probability.
    q : sequence of float
        Per-client probabilities of keeping the old shift.
    n_rounds : int
        Number of complete rounds to simulate.
    start : int, optional
        Counter of the first iteration.

    Returns
    -------
    calls : ndarray, shape (n_rounds, n)
        Fresh gradient evaluations per round and client.
    lengths : ndarray, shape (n_rounds,)
        Iterations per round (realisations of Geo(p)).
    next_counter : int
        Counter following the last simulated iteration.
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray([int(k) for k in eta_keys], dtype=np.uint64)
    if n_rounds <= 0:
        return np.zeros((0, q.size), dtype=np.int64), np.zeros(0, dtype=np.int64), start
    if resolve_backend(backend) == "numba":
        calls, lengths, nxt = _simulate_rounds_nb(
            np.uint64(theta_key), keys, float(p), q, int(n_rounds), np.int64(start)
        )
        return calls, lengths, int(nxt)
    return _simulate_rounds_np(int(theta_key), keys, float(p), q, int(n_rounds), int(start))
