"""Client losses, the lifted consensus objective and reference minimisers."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import OracleFailure, ParameterError


def _vec(x, d=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or (d is not None and x.shape[0] != d):
        raise ParameterError(f"expected a vector of length {d}, got shape {x.shape}")
    return x


# Batched kernels. Row k of the output depends only on row k of the inputs, so
# evaluating a subset of clients reproduces the full evaluation bit for bit.

def _quad_grad(mu, L, V, C, X):
    R = X - C
    s = np.sum(R * V, axis=1)
    return mu[:, None] * R + ((L - mu) * s)[:, None] * V


def _logistic_margins(A, X):
    return np.matmul(A, X[:, :, None])[:, :, 0]


def _logistic_grad(A, b, lam, X):
    z = _logistic_margins(A, X)
    w = -b * expit(-b * z) / A.shape[1]
    return np.matmul(w[:, None, :], A)[:, 0, :] + lam[:, None] * X


class QuadraticObjective:
    """``f(x) = mu/2 |x - c|^2 + (L - mu)/2 (v.(x - c))^2`` with unit ``v``.

    The Hessian has eigenvalues ``mu`` (multiplicity d-1) and ``L``, so both
    constants are exact.
    """

    kind = "quadratic"

    def __init__(self, mu, L, center, direction=None):
        center = _vec(center)
        if not (mu > 0 and L >= mu):
            raise ParameterError(f"need 0 < mu <= L, got mu={mu}, L={L}")
        if direction is None:
            direction = np.zeros_like(center)
            direction[0] = 1.0
        direction = _vec(direction, center.size)
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ParameterError("direction must be non-zero")
        self.mu = float(mu)
        self.L = float(L)
        self.center = center
        self.direction = direction / norm
        self.d = center.size

    @classmethod
    def isotropic(cls, curvature, center):
        """``(a/2)|x - c|^2``."""
        return cls(curvature, curvature, center)

    def value(self, x):
        r = _vec(x, self.d) - self.center
        s = self.direction @ r
        return 0.5 * self.mu * (r @ r) + 0.5 * (self.L - self.mu) * s * s

    def gradient(self, x):
        x = _vec(x, self.d)
        return _quad_grad(np.array([self.mu]), np.array([self.L]),
                          self.direction[None], self.center[None], x[None])[0]

    def hessian(self, x=None):
        v = self.direction
        return self.mu * np.eye(self.d) + (self.L - self.mu) * np.outer(v, v)

    def smoothness(self):
        return self.L


class LogisticObjective:
    """Mean logistic loss of one client plus ``lam/2 |x|^2``.

    Parameters
    ----------
    features : ndarray, shape (m, d)
    labels : ndarray, shape (m,)
        Entries in {-1, +1}.
    lam : float
        L2 weight; also the strong-convexity modulus.
    """

    kind = "logistic"

    def __init__(self, features, labels, lam):
        A = np.atleast_2d(np.asarray(features, dtype=np.float64))
        b = np.asarray(labels, dtype=np.float64).reshape(-1)
        if A.shape[0] != b.size or A.shape[0] == 0:
            raise ParameterError("features and labels disagree in sample count")
        if not np.all(np.isin(b, (-1.0, 1.0))):
            raise ParameterError("labels must be -1 or +1")
        if lam < 0:
            raise ParameterError("lam must be non-negative")
        self.features = np.ascontiguousarray(A)
        self.labels = b
        self.lam = float(lam)
        self.mu = float(lam)
        self.d = A.shape[1]
        self.m = A.shape[0]
        self._L = None

    def value(self, x):
        x = _vec(x, self.d)
        z = self.features @ x
        return float(np.mean(np.logaddexp(0.0, -self.labels * z)) + 0.5 * self.lam * (x @ x))

    def gradient(self, x):
        x = _vec(x, self.d)
        return _logistic_grad(self.features[None], self.labels[None],
                              np.array([self.lam]), x[None])[0]

    def hessian(self, x):
        x = _vec(x, self.d)
        s = expit(self.features @ x)
        w = s * (1.0 - s) / self.m
        return (self.features.T * w) @ self.features + self.lam * np.eye(self.d)

    def smoothness(self):
        if self._L is None:
            gram = self.features.T @ self.features / (4.0 * self.m)
            self._L = float(np.linalg.eigvalsh(gram)[-1]) + self.lam
        return self._L


def gradient(obj, x):
    return obj.gradient(x)


def smoothness_constant(obj):
    return obj.smoothness()


def bregman(obj, x, y):
    """``f(x) - f(y) - <grad f(y), x - y>``."""
    x = _vec(x, obj.d)
    y = _vec(y, obj.d)
    return float(obj.value(x) - obj.value(y) - obj.gradient(y) @ (x - y))


class LiftedObjective:
    """``F(x_1, ..., x_n) = sum_i f_i(x_i)`` on ``R^{n d}``.

    Iterates are handled as ``(n, d)`` arrays; flat vectors of length ``n*d``
    are accepted wherever a lifted point is expected. The smoothness matrix is
    ``Diag(L_1 I, ..., L_n I)`` and the strong-convexity modulus is the
    smallest client ``mu``.
    """

    def __init__(self, locals_):
        locals_ = list(locals_)
        if not locals_:
            raise ParameterError("need at least one client objective")
        dims = {f.d for f in locals_}
        if len(dims) != 1:
            raise ParameterError(f"heterogeneous client dimensions {sorted(dims)}")
        self.locals = locals_
        self.n = len(locals_)
        self.d = dims.pop()
        self.mu = float(min(f.mu for f in locals_))
        self.L = np.array([f.smoothness() for f in locals_])
        self._stack = self._build_stack()

    def _build_stack(self):
        kinds = {f.kind for f in self.locals}
        if kinds == {"quadratic"}:
            fs = self.locals
            return ("quadratic", np.array([f.mu for f in fs]), np.array([f.L for f in fs]),
                    np.stack([f.direction for f in fs]), np.stack([f.center for f in fs]))
        if kinds == {"logistic"} and len({f.m for f in self.locals}) == 1:
            fs = self.locals
            return ("logistic", np.stack([f.features for f in fs]),
                    np.stack([f.labels for f in fs]), np.array([f.lam for f in fs]))
        return None

    @property
    def kappas(self):
        return self.L / self.mu

    @property
    def dim(self):
        return self.n * self.d

    def smoothness_matrix(self):
        """Diagonal of ``Diag(L_1 I, ..., L_n I)``."""
        return np.repeat(self.L, self.d)

    def as_blocks(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape == (self.n, self.d):
            return x
        if x.shape == (self.dim,):
            return x.reshape(self.n, self.d)
        raise ParameterError(f"expected shape {(self.n, self.d)} or {(self.dim,)}, got {x.shape}")

    def client_gradients(self, X, rows=None):
        """Gradients ``grad f_i(X[i])`` for ``i`` in ``rows`` (all by default)."""
        X = self.as_blocks(X)
        idx = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.int64)
        if idx.size == 0:
            return np.empty((0, self.d))
        Xs = np.ascontiguousarray(X[idx])
        st = self._stack
        if st is None:
            return np.stack([self.locals[i].gradient(Xs[k]) for k, i in enumerate(idx)])
        if st[0] == "quadratic":
            _, mu, L, V, C = st
            return _quad_grad(mu[idx], L[idx], V[idx], C[idx], Xs)
        _, A, b, lam = st
        return _logistic_grad(A[idx], b[idx], lam[idx], Xs)

    def gradient(self, x):
        """Lifted gradient, same layout as ``x``."""
        x = np.asarray(x, dtype=np.float64)
        G = self.client_gradients(x)
        return G.reshape(x.shape)

    def value(self, x):
        X = self.as_blocks(x)
        return float(sum(f.value(X[i]) for i, f in enumerate(self.locals)))

    def consensus_value(self, x):
        x = _vec(x, self.d)
        return float(sum(f.value(x) for f in self.locals))

    def consensus_gradient(self, x):
        x = _vec(x, self.d)
        return self.client_gradients(np.tile(x, (self.n, 1))).sum(axis=0)


def lift(locals_):
    return LiftedObjective(locals_)


@dataclass(frozen=True)
class Reference:
    """Minimiser of the consensus problem and the optimal shifts."""

    x_star: np.ndarray
    h_star: np.ndarray
    grad_norm: float


def _quadratic_closed_form(lifted):
    H = np.zeros((lifted.d, lifted.d))
    rhs = np.zeros(lifted.d)
    for f in lifted.locals:
        Hi = f.hessian()
        H += Hi
        rhs += Hi @ f.center
    return np.linalg.solve(H, rhs)


def reference_minimizer(lifted, tol=1e-12, max_iter=10_000_000, x0=None):
    """Minimiser of ``(1/n) sum_i f_i`` and ``h_i* = grad f_i(x*)``.

    Quadratics use the closed form. Other objectives run damped Newton steps
    and finish with ``1/L_max`` gradient descent if Newton stalls. The
    tolerance is on ``|(1/n) sum_i grad f_i(x*)|``, scaled by ``max(1, max_i
    |h_i*|)`` to account for rounding in large gradients.
    """
    if lifted.mu <= 0:
        raise ParameterError("reference minimiser needs mu > 0")
    n = lifted.n

    def avg_grad(x):
        return lifted.consensus_gradient(x) / n

    def scale(x):
        return max(1.0, float(np.max(np.linalg.norm(lifted.client_gradients(np.tile(x, (n, 1))), axis=1))))

    if all(f.kind == "quadratic" for f in lifted.locals):
        x = _quadratic_closed_form(lifted)
        # one refinement step removes most of the solve's rounding
        H = sum(f.hessian() for f in lifted.locals) / n
        x = x - np.linalg.solve(H, avg_grad(x))
    else:
        x = np.zeros(lifted.d) if x0 is None else _vec(x0, lifted.d).copy()
        best = np.inf
        for _ in range(200):
            g = avg_grad(x)
            gn = np.linalg.norm(g)
            if gn <= tol * scale(x) * 1e-2 or gn >= best:
                break
            best = gn
            H = sum(f.hessian(x) for f in lifted.locals) / n
            step = np.linalg.solve(H, g)
            obj0 = lifted.consensus_value(x)
            t = 1.0
            while t > 1e-10 and lifted.consensus_value(x - t * step) > obj0 - 1e-4 * t * (g @ step):
                t *= 0.5
            x = x - t * step
        g = avg_grad(x)
        lr = n / float(np.sum(lifted.L))
        it = 0
        while np.linalg.norm(g) > tol * scale(x) and it < max_iter:
            x = x - lr * g
            g = avg_grad(x)
            it += 1
    g = avg_grad(x)
    gn = float(np.linalg.norm(g))
    if not np.isfinite(gn) or gn > tol * scale(x):
        raise OracleFailure(f"reference minimiser stopped at gradient norm {gn:.3e}")
    h_star = lifted.client_gradients(np.tile(x, (n, 1)))
    return Reference(x, h_star, gn)
