"""Random streams, Bernoulli/geometric sampling and weighted norms."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .kernels import uniform_block, uniform_int

SERVER = -1
"""Client index used for server-side streams such as the communication coin."""


def stream_key(seed, stream_id):
    """64-bit key of the stream ``(seed, (client, purpose))``."""
    client, purpose = stream_id
    text = f"{int(seed)}|{int(client)}|{purpose}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass
class RngStream:
    """A counter-based random stream.

    The ``k``-th draw depends only on ``(seed, stream_id, k)``. Streams are
    single-owner; give every (client, purpose) its own.
    """

    seed: int
    stream_id: tuple
    counter: int = 0
    key: int = field(init=False, repr=False)

    def __post_init__(self):
        self.stream_id = (int(self.stream_id[0]), str(self.stream_id[1]))
        self.key = stream_key(self.seed, self.stream_id)

    def uniform(self):
        u = uniform_int(self.key, self.counter)
        self.counter += 1
        return u

    def uniforms(self, count):
        out = uniform_block(self.key, self.counter, count)
        self.counter += int(count)
        return out

    def peek(self, count, offset=0):
        """Upcoming draws without advancing the stream."""
        return uniform_block(self.key, self.counter + offset, count)

    def skip(self, count):
        self.counter += int(count)

    def state_dict(self):
        return {"seed": self.seed, "stream_id": list(self.stream_id), "counter": self.counter}

    @classmethod
    def from_state(cls, state):
        return cls(int(state["seed"]), tuple(state["stream_id"]), int(state["counter"]))


def make_stream(seed, stream_id):
    return RngStream(int(seed), tuple(stream_id))


def _check_prob(prob, name="prob"):
    if not (0.0 <= prob <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {prob}")


def flip(stream, prob):
    """Bernoulli(prob) bit; consumes exactly one draw."""
    _check_prob(prob)
    return int(stream.uniform() < prob)


def flips(stream, prob, count):
    """``count`` consecutive flips with a shared probability (or one per draw)."""
    prob = np.asarray(prob, dtype=np.float64)
    if np.any(prob < 0.0) or np.any(prob > 1.0):
        raise ParameterError("probabilities must lie in [0, 1]")
    return (stream.uniforms(count) < prob).astype(np.int8)


def sample_geometric(stream, success_prob):
    """Trials up to and including the first success of Bernoulli(success_prob).

    Realised as repeated flips on ``stream``: the stream ends up advanced by
    exactly the returned number of draws.
    """
    if not (0.0 < success_prob <= 1.0):
        raise ParameterError(f"success_prob must lie in (0, 1], got {success_prob}")
    block = int(min(max(16, 4.0 / success_prob), 1 << 16))
    trials = 0
    while True:
        u = stream.peek(block)
        hit = np.flatnonzero(u < success_prob)
        if hit.size:
            k = int(hit[0]) + 1
            stream.skip(k)
            return trials + k
        stream.skip(block)
        trials += block


def weighted_norm_sq(x, m):
    """``sum_j m_j x_j**2`` for a diagonal weight ``m``."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape != m.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {m.shape}")
    return float(np.dot(m * x, x))
