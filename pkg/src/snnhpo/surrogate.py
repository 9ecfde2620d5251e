"""Gaussian-process regression with an ARD Matern-5/2 kernel.

Targets are standardized before fitting. Kernel hyperparameters are fitted by
maximizing the log marginal likelihood in log space with L-BFGS-B from several
starting points; the analytic gradient is exposed for verification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize

from .exceptions import FitError, ValidationError

LENGTHSCALE_BOUNDS = (0.005, 20.0)
SIGNAL_BOUNDS = (1e-6, 20.0)
NOISE_BOUNDS = (1e-8, 1.0)
JITTERS = (0.0, 1e-8, 1e-6, 1e-4, 1e-2)
# random restarts are drawn from this interior box; the full box is mostly flat likelihood
RESTART_LENGTHSCALES = (0.05, 2.0)
RESTART_SIGNAL = (0.1, 10.0)
RESTART_NOISE = (1e-6, 0.1)
DEDUPE_TOL = 1e-12

SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0) or self.signal_variance < 0 or self.noise_variance <= 0:
            raise ValidationError("kernel parameters must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def to_log(self) -> np.ndarray:
        return np.concatenate([
            np.log(self.lengthscales),
            [math.log(self.signal_variance), math.log(self.noise_variance)],
        ])

    @classmethod
    def from_log(cls, theta: Sequence[float]) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))


def log_bounds(dim: int) -> np.ndarray:
    rows = [np.log(LENGTHSCALE_BOUNDS)] * dim + [np.log(SIGNAL_BOUNDS), np.log(NOISE_BOUNDS)]
    return np.array(rows)


def _scaled_distance(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    As = A / lengthscales
    Bs = B / lengthscales
    sq = (As * As).sum(1)[:, None] + (Bs * Bs).sum(1)[None, :] - 2.0 * As @ Bs.T
    return np.sqrt(np.maximum(sq, 0.0))


def _matern_from_r(r: np.ndarray, signal_variance: float) -> np.ndarray:
    sr = SQRT5 * r
    return signal_variance * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def matern52(a, b, k: KernelParams) -> float:
    """Kernel value between two points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (k.dim,) or b.shape != (k.dim,):
        raise ValidationError("point dimension does not match the lengthscales")
    r = math.sqrt(float((((a - b) / k.lengthscales) ** 2).sum()))
    return float(_matern_from_r(np.array(r), k.signal_variance))


def kernel_matrix(A: np.ndarray, B: np.ndarray, k: KernelParams) -> np.ndarray:
    return _matern_from_r(_scaled_distance(A, B, k.lengthscales), k.signal_variance)


def _jittered_cholesky(K: np.ndarray, jitters=JITTERS) -> Tuple[np.ndarray, float]:
    n = K.shape[0]
    for jitter in jitters:
        A = K
        if jitter:
            A = K.copy()
            A.flat[:: n + 1] += jitter
        try:
            return cholesky(A, lower=True, check_finite=False), jitter
        except LinAlgError:
            continue
    raise FitError(f"Cholesky factorization failed for a {n}x{n} matrix after jitter {jitters[-1]}")


def log_marginal_likelihood(theta: Sequence[float], X: np.ndarray, y: np.ndarray,
                            with_grad: bool = True):
    """Log marginal likelihood of ``y`` (already standardized) and its gradient.

    ``theta`` is ``[log lengthscales..., log signal variance, log noise
    variance]``; the gradient is taken with respect to these log parameters.
    """
    theta = np.asarray(theta, dtype=float)
    n, d = X.shape
    ls = np.exp(theta[:d])
    sig = math.exp(theta[d])
    noise = math.exp(theta[d + 1])

    r = _scaled_distance(X, X, ls)
    np.fill_diagonal(r, 0.0)
    sr = SQRT5 * r
    e = np.exp(-sr)
    poly = 1.0 + sr
    K0 = sig * (poly + sr * sr / 3.0) * e
    K = K0.copy()
    K.flat[:: n + 1] += noise
    L, _ = _jittered_cholesky(K)
    alpha = cho_solve((L, True), y, check_finite=False)
    value = -0.5 * float(y @ alpha) - float(np.log(np.diag(L)).sum()) - 0.5 * n * math.log(2 * math.pi)
    if not with_grad:
        return value

    Kinv, info = dpotri(L, lower=1)
    if info != 0:
        raise FitError("inverse from Cholesky factor failed")
    # dpotri fills the lower triangle only
    iu = np.triu_indices(n, 1)
    Kinv[iu] = Kinv.T[iu]
    W = np.outer(alpha, alpha)
    W -= Kinv
    # d K0 / d log l_i = (5/3) sig (1 + sqrt5 r) exp(-sqrt5 r) * (x_ai - x_bi)^2 / l_i^2
    M = poly
    M *= e
    M *= (5.0 / 3.0) * sig
    M *= W
    Xs = X / ls
    m = M.sum(1)
    grad_ls = (Xs * Xs * m[:, None]).sum(0) - (Xs * (M @ Xs)).sum(0)
    grad_sig = 0.5 * float(np.vdot(W, K0))
    grad_noise = 0.5 * noise * float(np.trace(W))
    return value, np.concatenate([grad_ls, [grad_sig, grad_noise]])


def dedupe(X: np.ndarray, y: np.ndarray, tol: float = DEDUPE_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Drop rows that have a later near-duplicate, keeping the latest target."""
    n = X.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n - 1):
        dist = np.sqrt(((X[i + 1:] - X[i]) ** 2).sum(1))
        if np.any(dist <= tol):
            keep[i] = False
    return X[keep], y[keep]


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    y_raw: np.ndarray
    y_mean: float
    y_std: float
    kernel: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    log_likelihood: float = float("nan")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def _check(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != self.dim:
            raise ValidationError(f"query dimension {Q.shape[1]} != model dimension {self.dim}")
        return Q

    def predict(self, Q) -> Tuple[np.ndarray, np.ndarray]:
        """Latent posterior mean and variance at each row of ``Q`` (native units)."""
        Q = self._check(Q)
        Ks = kernel_matrix(Q, self.X, self.kernel)
        mean = Ks @ self.alpha
        V = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = self.kernel.signal_variance - (V * V).sum(0)
        var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mean, var * self.y_std ** 2

    def joint(self, Q) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and full covariance in standardized units."""
        Q = self._check(Q)
        Ks = kernel_matrix(Q, self.X, self.kernel)
        V = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        cov = kernel_matrix(Q, Q, self.kernel) - V.T @ V
        cov = 0.5 * (cov + cov.T)
        return Ks @ self.alpha, cov


def fit(X, y, rng: Optional[np.random.Generator] = None, restarts: int = 4,
        warm_start: Optional[KernelParams] = None, maxiter: int = 200,
        restart_maxiter: int = 25) -> GPModel:
    """Fit kernel hyperparameters by multi-start marginal-likelihood ascent."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise FitError("targets must be finite")
    if not np.all(np.isfinite(X)):
        raise FitError("inputs must be finite")
    X, y = dedupe(X, y)
    if X.shape[0] < 2:
        raise ValidationError("a GP fit needs at least two distinct points")
    if rng is None:
        rng = np.random.default_rng(0)

    n, d = X.shape
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    bounds = log_bounds(d)
    starts = []
    if warm_start is not None and warm_start.dim == d:
        starts.append(np.clip(warm_start.to_log(), bounds[:, 0], bounds[:, 1]))
    else:
        starts.append(np.concatenate([np.full(d, math.log(0.5)), [0.0, math.log(1e-3)]]))
    lo = np.log([RESTART_LENGTHSCALES[0]] * d + [RESTART_SIGNAL[0], RESTART_NOISE[0]])
    hi = np.log([RESTART_LENGTHSCALES[1]] * d + [RESTART_SIGNAL[1], RESTART_NOISE[1]])
    for _ in range(restarts):
        starts.append(rng.uniform(lo, hi))

    def objective(theta):
        try:
            value, grad = log_marginal_likelihood(theta, X, ys)
        except FitError:
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    best_theta, best_value = None, -np.inf
    for i, x0 in enumerate(starts):
        iters = maxiter if i == 0 else restart_maxiter
        res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": iters, "ftol": 1e-6})
        value = -float(res.fun)
        if np.isfinite(value) and value > best_value and value > -1e24:
            best_theta, best_value = np.clip(res.x, bounds[:, 0], bounds[:, 1]), value
    if best_theta is None:
        raise FitError("marginal likelihood could not be evaluated at any start point")

    kernel = KernelParams.from_log(best_theta)
    K = kernel_matrix(X, X, kernel) + kernel.noise_variance * np.eye(n)
    L, jitter = _jittered_cholesky(K)
    if not np.all(np.isfinite(L)):
        raise FitError("kernel factorization produced non-finite entries")
    alpha = cho_solve((L, True), ys, check_finite=False)
    return GPModel(X=X, y_raw=y, y_mean=y_mean, y_std=y_std, kernel=kernel, chol=L,
                   alpha=alpha, jitter=jitter, log_likelihood=best_value)


def posterior(model: Optional[GPModel], q) -> Tuple[float, float]:
    """Predictive mean and (latent) variance at a single point."""
    if model is None:
        raise ValidationError("posterior requires a fitted model")
    mean, var = model.predict(np.asarray(q, dtype=float)[None, :])
    return float(mean[0]), float(var[0])


def thompson_draw(model: GPModel, candidates, rng: np.random.Generator) -> np.ndarray:
    """One joint posterior sample at ``candidates``, aligned with their order.

    Exact duplicate candidates share a single latent value.
    """
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    if C.shape[0] == 0:
        raise ValidationError("thompson_draw needs at least one candidate")
    uniq, inverse = np.unique(C, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    mean, cov = model.joint(uniq)
    L, _ = _jittered_cholesky(cov)
    z = rng.standard_normal(uniq.shape[0])
    draw = mean + L @ z
    values = model.y_mean + model.y_std * draw
    if not np.all(np.isfinite(values)):
        raise FitError("posterior draw produced non-finite values")
    return values[inverse]
