"""Gaussian-process regression with an isotropic RBF kernel."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

log = logging.getLogger(__name__)

LOG_ELL_BOUNDS = (math.log(1e-2), math.log(1e1))
LOG_SF2_BOUNDS = (math.log(1e-2), math.log(1e2))
LOG_SN2_BOUNDS = (math.log(1e-8), math.log(1.0))
BASE_JITTER = 1e-8


def sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def rbf(a, b, length_scale: float, signal_var: float) -> np.ndarray:
    """sigma_f^2 exp(-|a-b|^2 / (2 l^2))."""
    return signal_var * np.exp(-0.5 * sq_dist(np.atleast_2d(a), np.atleast_2d(b)) / length_scale**2)


def _cholesky(k: np.ndarray, jitter: float = BASE_JITTER, max_tries: int = 8):
    """Lower Cholesky factor, escalating diagonal jitter x10 on failure."""
    n = k.shape[0]
    for _ in range(max_tries):
        try:
            return linalg.cholesky(k + jitter * np.eye(n), lower=True), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise linalg.LinAlgError("kernel matrix not positive definite even with jitter")


@dataclass
class GPModel:
    x_train: np.ndarray          # normalized inputs
    y_train: np.ndarray          # raw targets
    x_lo: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_std: float
    length_scale: float
    signal_var: float            # standardized units
    noise_var: float             # standardized units
    jitter: float = BASE_JITTER
    log_marginal_likelihood: float = float("nan")
    chol: np.ndarray = field(default=None, repr=False)
    alpha: np.ndarray = field(default=None, repr=False)
    flat: bool = False

    def normalize(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.x_lo) / self.x_scale

    def _factor(self) -> "GPModel":
        z = (self.y_train - self.y_mean) / self.y_std
        k = rbf(self.x_train, self.x_train, self.length_scale, self.signal_var)
        k[np.diag_indices_from(k)] += self.noise_var
        self.chol, self.jitter = _cholesky(k, BASE_JITTER)
        self.alpha = linalg.cho_solve((self.chol, True), z)
        n = len(z)
        self.log_marginal_likelihood = float(-0.5 * z @ self.alpha - np.log(np.diag(self.chol)).sum()
                                             - 0.5 * n * math.log(2 * math.pi))
        return self

    def predict(self, x, include_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in target units."""
        xs = self.normalize(x)
        ks = rbf(xs, self.x_train, self.length_scale, self.signal_var)
        mean = ks @ self.alpha
        v = linalg.solve_triangular(self.chol, ks.T, lower=True)
        var = self.signal_var - (v * v).sum(0)
        if include_noise:
            var = var + self.noise_var
        sigma = np.sqrt(np.maximum(var, 0.0))
        return self.y_mean + self.y_std * mean, self.y_std * sigma

    def condition(self, x_new, y_new) -> "GPModel":
        """Add observations keeping hyperparameters and normalization fixed."""
        xn = self.normalize(x_new)
        out = replace(self, x_train=np.vstack([self.x_train, xn]),
                      y_train=np.concatenate([self.y_train, np.atleast_1d(np.asarray(y_new, dtype=float))]))
        return out._factor()

    @property
    def noise_std(self) -> float:
        return self.y_std * math.sqrt(self.noise_var)

    @property
    def signal_std(self) -> float:
        return self.y_std * math.sqrt(self.signal_var)


def _neg_lml(theta, x, z, d2):
    ell, sf2, sn2 = np.exp(theta)
    kf = sf2 * np.exp(-0.5 * d2 / ell**2)
    k = kf + (sn2 + BASE_JITTER) * np.eye(len(z))
    try:
        chol = linalg.cholesky(k, lower=True)
    except linalg.LinAlgError:
        return 1e25, np.zeros(3)
    alpha = linalg.cho_solve((chol, True), z)
    nll = 0.5 * z @ alpha + np.log(np.diag(chol)).sum() + 0.5 * len(z) * math.log(2 * math.pi)
    w = np.outer(alpha, alpha) - linalg.cho_solve((chol, True), np.eye(len(z)))
    grads = (kf * d2 / ell**2, kf, sn2 * np.eye(len(z)))
    g = np.array([-0.5 * np.sum(w * dk) for dk in grads])
    return float(nll), g


def fit_gp(x, y, bounds=None, n_restarts: int = 8, seed: int = 0, noise_var: float | None = None) -> GPModel:
    """Maximize the log marginal likelihood over (log l, log sf2, log sn2).

    Inputs are mapped to the unit cube using ``bounds`` (default: training
    min/max) and targets are standardized.  ``noise_var`` fixes the noise in
    standardized units instead of fitting it.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(x) or len(y) < 2:
        raise ValueError("need at least two aligned samples")
    if bounds is None:
        lo, hi = x.min(0), x.max(0)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    scale = np.where(hi - lo > 0, hi - lo, 1.0)
    xn = (x - lo) / scale
    y_mean = float(y.mean())
    y_std = float(y.std())
    flat = y_std <= 1e-12 * max(1.0, abs(y_mean))
    if flat:
        log.warning("degenerate targets (zero variance); fitting a flat model")
        y_std = 1.0
    z = (y - y_mean) / y_std
    d2 = sq_dist(xn, xn)

    bnds = [LOG_ELL_BOUNDS, LOG_SF2_BOUNDS, LOG_SN2_BOUNDS]
    if noise_var is not None:
        ln = math.log(max(noise_var, 1e-300))
        bnds[2] = (ln, ln)
    rng = np.random.default_rng(seed)
    best = None
    for i in range(n_restarts):
        if i == 0:
            start = np.array([math.log(0.5), 0.0, math.log(1e-2)])
        else:
            start = np.array([rng.uniform(*b) for b in bnds])
        start = np.clip(start, [b[0] for b in bnds], [b[1] for b in bnds])
        res = optimize.minimize(_neg_lml, start, args=(xn, z, d2), jac=True, method="L-BFGS-B", bounds=bnds)
        if best is None or res.fun < best.fun:
            best = res
    ell, sf2, sn2 = np.exp(best.x)
    model = GPModel(xn, y, lo, scale, y_mean, y_std, float(ell), float(sf2), float(sn2), flat=flat)
    return model._factor()


@dataclass(frozen=True)
class ValidationReport:
    r2: float
    rmse: float
    test_index: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    sigma: np.ndarray

    def csv(self, name: str = "value") -> str:
        rows = [f"index,{name}_actual,{name}_predicted,{name}_sigma"]
        rows += [f"{i},{t:.6f},{p:.6f},{s:.6f}" for i, t, p, s in
                 zip(self.test_index, self.y_true, self.y_pred, self.sigma)]
        return "\n".join(rows) + "\n"


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def split_indices(n: int, seed: int = 0, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, math.ceil(n * test_fraction - 1e-9))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def train(x, y, seed: int = 0, test_fraction: float = 0.2, bounds=None,
          n_restarts: int = 8) -> tuple[GPModel, ValidationReport]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 10:
        raise ValueError("need at least 10 samples to train and validate")
    tr, te = split_indices(len(y), seed, test_fraction)
    if bounds is None:
        bounds = (x.min(0), x.max(0))
    model = fit_gp(x[tr], y[tr], bounds=bounds, n_restarts=n_restarts, seed=seed)
    mean, sigma = model.predict(x[te])
    rmse = float(np.sqrt(np.mean((mean - y[te]) ** 2)))
    return model, ValidationReport(r_squared(y[te], mean), rmse, te, y[te], mean, sigma)
