"""LibSVM ingestion, client partitioning and synthetic heterogeneous instances."""

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, ParameterError, ParseError
from .problems import LogisticObjective, QuadraticObjective


@dataclass
class Dataset:
    """Sparse binary-classification samples with 0-based feature indices."""

    labels: np.ndarray
    indices: list
    values: list
    d: int

    def __len__(self):
        return int(self.labels.size)

    def __eq__(self, other):
        if not isinstance(other, Dataset) or len(self) != len(other) or self.d != other.d:
            return False
        return (np.array_equal(self.labels, other.labels)
                and all(np.array_equal(a, b) for a, b in zip(self.indices, other.indices))
                and all(np.array_equal(a, b) for a, b in zip(self.values, other.values)))

    def to_dense(self):
        A = np.zeros((len(self), self.d))
        for r, (idx, val) in enumerate(zip(self.indices, self.values)):
            A[r, idx] = val
        return A

    def subset(self, start, stop):
        return Dataset(self.labels[start:stop].copy(), self.indices[start:stop],
                       self.values[start:stop], self.d)


_LABELS = {1.0: 1.0, -1.0: -1.0, 0.0: -1.0}


def parse_libsvm(text, d=None):
    """Parse LibSVM text: ``<label> <idx>:<val> ...`` per line.

    Indices are 1-based and strictly increasing in the source. Labels ``+1``,
    ``1``, ``-1`` and ``0`` are accepted (``0`` maps to ``-1``). ``#`` starts
    a comment; blank lines are skipped.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels, indices, values = [], [], []
    max_idx = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        if label not in _LABELS:
            raise ParseError(f"label {tokens[0]!r} is not binary", lineno)
        idx, val = [], []
        prev = 0
        for tok in tokens[1:]:
            key, sep, num = tok.partition(":")
            if not sep:
                raise ParseError(f"feature token {tok!r} lacks ':'", lineno)
            try:
                j = int(key)
                v = float(num)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", lineno) from None
            if j < 1:
                raise ParseError(f"feature index {j} is not positive", lineno)
            if j <= prev:
                raise ParseError(f"feature indices not increasing at {j}", lineno)
            if not np.isfinite(v):
                raise ParseError(f"feature value {num!r} is not finite", lineno)
            prev = j
            idx.append(j - 1)
            val.append(v)
        max_idx = max(max_idx, prev)
        labels.append(_LABELS[label])
        indices.append(np.array(idx, dtype=np.int64))
        values.append(np.array(val, dtype=np.float64))
    dim = max_idx if d is None else int(d)
    if dim < max_idx:
        raise ParseError(f"dimension {dim} smaller than largest index {max_idx}")
    return Dataset(np.array(labels, dtype=np.float64), indices, values, dim)


def read_libsvm(path, d=None):
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh.read(), d)


def dump_libsvm(ds):
    """Inverse of :func:`parse_libsvm` (labels written as ``+1``/``-1``)."""
    lines = []
    for lab, idx, val in zip(ds.labels, ds.indices, ds.values):
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
        head = "+1" if lab > 0 else "-1"
        lines.append(f"{head} {feats}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def partition(ds, n):
    """Contiguous equal shards; the remainder goes to the last shard."""
    m = len(ds)
    if not (1 <= n <= m):
        raise ParameterError(f"cannot split {m} samples across {n} clients")
    size = m // n
    bounds = [i * size for i in range(n)] + [m]
    return [ds.subset(bounds[i], bounds[i + 1]) for i in range(n)]


def scale_features(ds):
    """Divide each feature by its largest magnitude so values lie in [-1, 1]."""
    peak = np.zeros(ds.d)
    for idx, val in zip(ds.indices, ds.values):
        np.maximum.at(peak, idx, np.abs(val))
    peak[peak == 0] = 1.0
    return Dataset(ds.labels.copy(), list(ds.indices),
                   [val / peak[idx] for idx, val in zip(ds.indices, ds.values)], ds.d)


def logistic_clients(shards, lam):
    return [LogisticObjective(s.to_dense(), s.labels, lam) for s in shards]


def data_smoothness(shards):
    """``lambda_max(A^T A / 4m)`` of every shard (smoothness without the L2 term)."""
    out = []
    for s in shards:
        A = s.to_dense()
        out.append(float(np.linalg.eigvalsh(A.T @ A / (4.0 * len(s)))[-1]))
    return np.array(out)


@dataclass(frozen=True)
class OutlierProfile:
    """One client at ``l_max`` (client 0), the rest ``Uniform(low, high)``."""

    l_max: float
    low: float = 0.1
    high: float = 1.0

    def sample(self, n, rng):
        L = rng.uniform(self.low, self.high, size=n)
        L[0] = self.l_max
        return L


def smoothness_targets(n, profile, rng):
    if isinstance(profile, OutlierProfile):
        return profile.sample(n, rng)
    L = np.asarray(profile, dtype=np.float64).reshape(-1)
    if L.size != n:
        raise GenerationError(f"profile has {L.size} values for {n} clients")
    return L.copy()


def synthesize_heterogeneous(n, d, profile, seed, kind="logistic", lam=0.1, m=100):
    """Clients whose certified smoothness constants follow ``profile``.

    Quadratics hit the targets exactly. Logistic clients draw Gaussian
    features and client-specific labelling hyperplanes, then rescale the
    features so that ``lambda_max(A^T A/4m) + lam`` equals the target.
    """
    if n < 1 or d < 1:
        raise ParameterError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    L = smoothness_targets(n, profile, rng)
    if np.any(L < lam) or lam <= 0:
        raise GenerationError(f"every target L_i must be at least lam={lam} > 0")
    clients = []
    for i in range(n):
        if kind == "quadratic":
            center = rng.normal(size=d)
            direction = rng.normal(size=d)
            clients.append(QuadraticObjective(lam, L[i], center, direction))
            continue
        if kind != "logistic":
            raise ParameterError(f"unknown objective kind {kind!r}")
        A = rng.normal(size=(m, d))
        w = rng.normal(size=d)
        b = np.where(A @ w + 0.5 * rng.normal(size=m) >= 0, 1.0, -1.0)
        base = float(np.linalg.eigvalsh(A.T @ A / (4.0 * m))[-1])
        A *= np.sqrt((L[i] - lam) / base)
        clients.append(LogisticObjective(A, b, lam))
    return clients
