"""Nonlinear least squares and weighted linear regression with standard errors."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares as _scipy_least_squares


class FitError(RuntimeError):
    def __init__(self, message, outcome=None, stage=None):
        super().__init__(message)
        self.outcome = outcome
        self.stage = stage


@dataclass
class FitProblem:
    model: callable  # model(params, x) -> y
    x: np.ndarray
    y: np.ndarray
    p0: np.ndarray
    sigma: np.ndarray = None
    bounds: tuple = (-np.inf, np.inf)
    max_iterations: int = 200
    jacobian: callable = None  # optional analytic override, jac(params, x) -> (m, n)
    absolute_sigma: bool = False  # if True, sigma is trusted and the covariance is not rescaled

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y, dtype=float)
        self.p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        if self.y.size == 0:
            raise ValueError("no data")
        lo, hi = self.bounds
        lo = np.broadcast_to(np.asarray(lo, dtype=float), self.p0.shape)
        hi = np.broadcast_to(np.asarray(hi, dtype=float), self.p0.shape)
        if np.any(lo >= hi):
            raise ValueError("inconsistent bounds")
        self.bounds = (lo, hi)
        if self.sigma is not None:
            self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.y.shape)
            if np.any(self.sigma <= 0):
                raise ValueError("sigma must be positive")


@dataclass
class FitOutcome:
    params: np.ndarray
    covariance: np.ndarray
    stderr: np.ndarray
    residual_rms: float
    converged: bool
    iterations: int
    cost: float = np.nan
    message: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self, names=None):
        names = names or [f"p{i}" for i in range(len(self.params))]
        return {n: {"value": float(v), "stderr": float(e)}
                for n, v, e in zip(names, self.params, self.stderr)}


def fd_step(p):
    return np.maximum(1e-8, 1e-6 * np.abs(p))


def finite_difference_jacobian(fun, p, bounds=None):
    """Central-difference Jacobian of a vector function.

    Next to a bound the difference turns one-sided (second order) so the
    function is never evaluated outside ``bounds``.
    """
    p = np.asarray(p, dtype=float)
    lo, hi = (np.full(p.shape, -np.inf), np.full(p.shape, np.inf)) if bounds is None else bounds
    f0 = np.asarray(fun(p))
    jac = np.empty((f0.size, p.size))
    for i, h in enumerate(fd_step(p)):
        dp = np.zeros_like(p)
        dp[i] = h
        if p[i] - h < lo[i]:
            jac[:, i] = (-3 * f0 + 4 * np.asarray(fun(p + dp)) - np.asarray(fun(p + 2 * dp))) / (2 * h)
        elif p[i] + h > hi[i]:
            jac[:, i] = (3 * f0 - 4 * np.asarray(fun(p - dp)) + np.asarray(fun(p - 2 * dp))) / (2 * h)
        else:
            jac[:, i] = (np.asarray(fun(p + dp)) - np.asarray(fun(p - dp))) / (2 * h)
    return jac


def covariance_from_jacobian(jac, residuals, scale=True):
    """``s^2 (J^T J)^-1``; None if ``J^T J`` is numerically singular."""
    m, n = jac.shape
    jtj = jac.T @ jac
    if not np.all(np.isfinite(jtj)):
        return None
    # drop directions the data cannot see
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s.size == 0 or s[0] == 0 or s[-1] < s[0] * 1e-12 * max(m, n):
        return None
    cov = (vt.T / s**2) @ vt
    if scale:
        dof = max(m - n, 1)
        cov = cov * (residuals @ residuals) / dof
    return 0.5 * (cov + cov.T)


def least_squares(problem):
    """Bounded trust-region Levenberg-Marquardt-style fit of ``problem``.

    Uses scipy's trust-region reflective solver with the finite-difference
    Jacobian defined above (or the analytic override). The covariance is the
    residual-variance-scaled inverse of ``J^T J`` at the optimum; when sigma is
    given the residuals are weighted by it. A fit whose Jacobian is rank
    deficient is reported as not converged. With ``absolute_sigma`` the
    covariance is ``(J^T J)^-1`` of the weighted problem, unscaled.
    """
    pr = problem
    w = 1.0 / pr.sigma if pr.sigma is not None else 1.0

    def resid(p):
        return ((np.asarray(pr.model(p, pr.x), dtype=float) - pr.y) * w).ravel()

    if pr.jacobian is not None:
        def jac(p):
            return np.asarray(pr.jacobian(p, pr.x), dtype=float) * np.reshape(w, (-1, 1))
    else:
        def jac(p):
            return finite_difference_jacobian(resid, p, pr.bounds)

    p0 = np.clip(pr.p0, *pr.bounds)
    r0 = resid(p0)
    if not np.all(np.isfinite(r0)):
        raise FitError("model is not finite at the initial parameters")
    try:
        res = _scipy_least_squares(resid, p0, jac=jac, bounds=pr.bounds, method="trf",
                                   x_scale="jac", ftol=1e-10, xtol=1e-12, gtol=1e-10,
                                   max_nfev=pr.max_iterations)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"least squares failed: {exc}") from exc
    r = res.fun
    cov = covariance_from_jacobian(res.jac, r, scale=not pr.absolute_sigma)
    converged = bool(res.status > 0) and cov is not None
    if cov is None:
        cov = np.full((p0.size, p0.size), np.nan)
    rms = float(np.sqrt(np.mean(((np.asarray(pr.model(res.x, pr.x)) - pr.y)) ** 2)))
    return FitOutcome(
        params=res.x, covariance=cov, stderr=np.sqrt(np.abs(np.diag(cov))),
        residual_rms=rms, converged=converged, iterations=int(res.nfev),
        cost=float(res.cost), message=res.message,
    )


def weighted_linear_fit(x, y, sigma_y=None):
    """Closed-form weighted fit of ``y = intercept + slope x``.

    Returns a :class:`FitOutcome` with ``params = (intercept, slope)``. If
    ``sigma_y`` is None the covariance is scaled by the residual variance;
    otherwise the given uncertainties are taken as absolute.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need at least two (x, y) pairs")
    w = np.ones_like(x) if sigma_y is None else 1.0 / np.asarray(sigma_y, dtype=float) ** 2
    a = np.column_stack([np.ones_like(x), x])
    m = a.T @ (a * w[:, None])
    if np.ptp(x) == 0 or abs(np.linalg.det(m)) <= 1e-12 * np.trace(m) ** 2:
        raise np.linalg.LinAlgError("singular design: x values are not distinct")
    cov = np.linalg.inv(m)
    params = cov @ (a.T @ (w * y))
    resid = y - a @ params
    if sigma_y is None:
        dof = max(x.size - 2, 1)
        cov = cov * (resid @ resid) / dof if x.size > 2 else cov * 0.0
    return FitOutcome(params=params, covariance=cov, stderr=np.sqrt(np.diag(cov)),
                      residual_rms=float(np.sqrt(np.mean(resid**2))), converged=True,
                      iterations=1, cost=float(0.5 * np.sum(w * resid**2)))
