"""Classical regressors on the scalar velocity feature: ordinary least
squares, and epsilon-insensitive SVR solved by SMO-style pairwise
coordinate ascent (maximal-violating-pair selection, linear or RBF kernel).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign, NoConvergence


@dataclass
class LinearModel:
    slope: float
    intercept: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept

    def to_json(self) -> str:
        return json.dumps({"slope": self.slope, "intercept": self.intercept}, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "LinearModel":
        return cls(**json.loads(s))


def fit_linreg(x, y) -> LinearModel:
    """Ordinary least squares y = slope * x + intercept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise DegenerateDesign("need at least 2 points")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise DegenerateDesign("var(x) = 0")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    return LinearModel(slope=slope, intercept=float(ym - slope * xm))


@dataclass
class FeatureScaler:
    mean: float
    std: float

    @classmethod
    def fit(cls, x) -> "FeatureScaler":
        x = np.asarray(x, dtype=np.float64)
        std = float(x.std())
        return cls(mean=float(x.mean()), std=std if std > 0 else 1.0)

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean, "std": self.std}, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "FeatureScaler":
        return cls(**json.loads(s))


def rbf_kernel(u, v, gamma: float):
    """exp(-gamma * (u - v)^2); symmetric, in (0, 1]."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    d = np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    return np.exp(-gamma * d * d)


def _kernel_matrix(x1, x2, kernel: str, gamma: float) -> np.ndarray:
    a = np.asarray(x1, dtype=np.float64).reshape(-1, 1)
    b = np.asarray(x2, dtype=np.float64).reshape(1, -1)
    if kernel == "linear":
        return a * b
    if kernel == "rbf":
        return np.exp(-gamma * (a - b) ** 2)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class SvrModel:
    kernel: str  # "linear" | "rbf"
    gamma: float
    support_x: np.ndarray
    support_beta: np.ndarray  # alpha_i - alpha_i*
    bias: float
    C: float
    epsilon: float

    def predict(self, x):
        if self.support_x.size == 0:
            return np.full(np.asarray(x, dtype=np.float64).reshape(-1).shape, self.bias)
        k = _kernel_matrix(x, self.support_x, self.kernel, self.gamma)
        return k @ self.support_beta + self.bias

    def to_json(self) -> str:
        return json.dumps(
            {
                "kernel": self.kernel,
                "gamma": self.gamma,
                "support_x": self.support_x.tolist(),
                "support_beta": self.support_beta.tolist(),
                "bias": self.bias,
                "C": self.C,
                "epsilon": self.epsilon,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, s: str) -> "SvrModel":
        d = json.loads(s)
        return cls(
            kernel=d["kernel"],
            gamma=d["gamma"],
            support_x=np.asarray(d["support_x"], dtype=np.float64),
            support_beta=np.asarray(d["support_beta"], dtype=np.float64),
            bias=d["bias"],
            C=d["C"],
            epsilon=d["epsilon"],
        )


def fit_svr(
    x,
    y,
    kernel: str = "rbf",
    C: float = 1.0,
    epsilon: float = 0.1,
    gamma: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> SvrModel:
    """Train epsilon-SVR in the dual.

    Variables are the 2n split coefficients a = (alpha+, alpha-) in [0, C],
    beta = alpha+ - alpha-, constraint sum(beta) = 0. Each iteration picks
    the maximal violating pair and solves its two-variable subproblem
    analytically; convergence when the KKT gap drops below `tol`.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 2:
        raise DegenerateDesign("need at least 2 points")
    if C <= 0 or epsilon < 0:
        raise ValueError("require C > 0 and epsilon >= 0")
    K = _kernel_matrix(x, x, kernel, gamma)

    # objective: 0.5 b'Kb + eps * sum(a) - y'b over a = (alpha+, alpha-),
    # minimized subject to 0 <= a <= C and sum(p * a) = 0.
    a = np.zeros(2 * n)
    p = np.concatenate([np.ones(n), -np.ones(n)])  # constraint coefficients
    grad = np.concatenate([epsilon - y, epsilon + y])  # gradient at a = 0
    eps_bound = 1e-12 * max(C, 1.0)
    kdiag = np.diag(K).copy()
    kdiag2 = np.concatenate([kdiag, kdiag])

    # A step of size delta moves beta[ii] by +delta and beta[jj] by -delta,
    # where i must be movable "up" (p_i * a_i can grow) and j "down".
    # j is chosen by second-order selection (largest violation^2 / curvature),
    # which avoids zigzagging between near-duplicate inputs.
    converged = False
    m_up = m_low = 0.0
    for _ in range(max_iter):
        minus_pg = -p * grad
        below_c = a < C - eps_bound
        above_0 = a > eps_bound
        up_mask = np.where(p > 0, below_c, above_0)
        low_mask = np.where(p > 0, above_0, below_c)
        up_vals = np.where(up_mask, minus_pg, -np.inf)
        low_vals = np.where(low_mask, minus_pg, np.inf)
        i = int(np.argmax(up_vals))
        m_up = up_vals[i]
        m_low = low_vals.min()
        if m_up - m_low < tol:
            converged = True
            break
        ii = i % n
        diff = m_up - low_vals  # violation against each down-movable variable
        krow2 = np.concatenate([K[ii], K[ii]])
        q_all = np.maximum(kdiag[ii] + kdiag2 - 2.0 * krow2, 1e-12)
        score = np.where(diff > 0, diff * diff / q_all, -np.inf)
        j = int(np.argmax(score))
        jj = j % n
        g = -(m_up - minus_pg[j])  # objective rate along the pair direction, < 0
        q = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
        room_i = (C - a[i]) if p[i] > 0 else a[i]
        room_j = a[j] if p[j] > 0 else (C - a[j])
        dmax = min(room_i, room_j)
        delta = dmax if q <= 1e-15 else min(-g / q, dmax)
        a[i] += p[i] * delta
        a[j] -= p[j] * delta
        dk = delta * (K[:, ii] - K[:, jj])
        grad[:n] += dk
        grad[n:] -= dk
    if not converged:
        raise NoConvergence(f"SMO did not reach tol={tol} within {max_iter} iterations")

    beta = a[:n] - a[n:]
    # f(x) = sum(beta * K) + bias; free variables pin the bias exactly,
    # otherwise any value in [m_low, m_up] is KKT-consistent: take the midpoint.
    minus_pg = -p * grad
    free = (a > eps_bound) & (a < C - eps_bound)
    if free.any():
        bias = float(minus_pg[free].mean())
    else:
        lo = m_up if np.isfinite(m_up) else m_low
        hi = m_low if np.isfinite(m_low) else m_up
        bias = 0.5 * float(lo + hi)

    keep = np.abs(beta) > 1e-12
    return SvrModel(
        kernel=kernel,
        gamma=gamma,
        support_x=x[keep],
        support_beta=beta[keep],
        bias=bias,
        C=C,
        epsilon=epsilon,
    )


def predict_svr(model: SvrModel, x):
    return model.predict(x)
