"""Logistic regression on the average log-likelihood scale.

All quantities are per-observation averages: ``L(b) = mean(y*eta - log(1+e^eta))``.
The Hessian carries its true (negative) sign.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .data import SiteDataset
from .errors import ConvergenceError, DataError, NumericalError, QuasiSeparationError, SingleClassError

logger = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class DesignEncoding:
    """Column layout: intercept first, then indicators per non-reference category.

    A variable whose ``categories`` is ``None`` is a raw numeric column.
    """

    variables: tuple[tuple[str, tuple[str, ...] | None], ...]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.variables]

    @property
    def columns(self) -> list[str]:
        cols = [INTERCEPT]
        for name, cats in self.variables:
            if cats is None:
                cols.append(name)
            else:
                cols.extend(f"{name}={c}" for c in cats[1:])
        return cols

    @property
    def width(self) -> int:
        return len(self.columns)

    def slices(self) -> dict[str, slice]:
        """Column range of each variable in the design matrix."""
        out, k = {}, 1
        for name, cats in self.variables:
            w = 1 if cats is None else len(cats) - 1
            out[name] = slice(k, k + w)
            k += w
        return out

    def reference(self, name: str) -> str | None:
        cats = dict(self.variables)[name]
        return None if cats is None else cats[0]

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": n, "categories": None if c is None else list(c)} for n, c in self.variables
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignEncoding":
        return cls(tuple(
            (v["name"], None if v["categories"] is None else tuple(v["categories"]))
            for v in d["variables"]
        ))

    @classmethod
    def numeric(cls, names: Sequence[str]) -> "DesignEncoding":
        return cls(tuple((n, None) for n in names))


def encode(data: SiteDataset, variables: Sequence[str] | None = None):
    """Dummy-code categorical variables; the first category is the reference.

    Returns ``(X, y, encoding)``.
    """
    variables = list(data.schema.names if variables is None else variables)
    specs = []
    blocks = [np.ones((data.n, 1))]
    for name in variables:
        v = data.schema[name]
        if not v.is_categorical:
            raise DataError(f"variable {name!r} must be categorical before encoding")
        col = data.columns[name]
        lookup = {c: i for i, c in enumerate(v.categories)}
        try:
            codes = np.fromiter((lookup[c] for c in col), dtype=np.intp, count=data.n)
        except KeyError as exc:
            raise DataError(f"variable {name!r}: unseen category {exc.args[0]!r}") from None
        block = np.zeros((data.n, len(v.categories) - 1))
        hit = codes > 0
        block[np.flatnonzero(hit), codes[hit] - 1] = 1.0
        blocks.append(block)
        specs.append((name, v.categories))
    X = np.hstack(blocks)
    return X, data.outcome.astype(np.float64), DesignEncoding(tuple(specs))


def _check(beta, X, y):
    beta = np.asarray(beta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != beta.shape[0] or X.shape[0] != y.shape[0]:
        raise DataError(f"dimension mismatch: X {X.shape}, beta {beta.shape}, y {y.shape}")
    return beta, X, y


def log_likelihood(beta, X, y) -> float:
    beta, X, y = _check(beta, X, y)
    eta = X @ beta
    return float(np.mean(y * eta - np.logaddexp(0.0, eta)))


def gradient(beta, X, y) -> np.ndarray:
    beta, X, y = _check(beta, X, y)
    return X.T @ (y - expit(X @ beta)) / X.shape[0]


def hessian(beta, X, y) -> np.ndarray:
    beta, X, y = _check(beta, X, y)
    p = expit(X @ beta)
    H = -(X.T * (p * (1.0 - p))) @ X / X.shape[0]
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    loglik: float
    damped: bool = False


def newton_maximize(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], np.ndarray],
    beta0,
    tol: float = 1e-8,
    grad_tol: float = 1e-6,
    max_iter: int = 100,
    separation_norm: float | None = 30.0,
) -> FitResult:
    """Maximize a concave-ish objective by damped Newton with step halving.

    When the Hessian is not negative definite, ``-lam*I`` is added with
    ``lam`` doubling from 1e-8 until the Cholesky factorization succeeds.
    """
    beta = np.array(beta0, dtype=np.float64)
    fval = f(beta)
    damped = False
    for it in range(1, max_iter + 1):
        g = grad(beta)
        H = hess(beta)
        step = _newton_step(H, g)
        if step is None:
            raise NumericalError("Hessian could not be regularized to negative definite")
        step, was_damped = step
        damped |= was_damped
        slope = float(g @ step)
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            fc = f(cand)
            if np.isfinite(fc) and fc >= fval + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no ascent possible: already at the optimum to machine precision
            cand, fc = beta, fval
        moved = np.max(np.abs(cand - beta)) if cand is not beta else 0.0
        beta, fval = cand, fc
        gnorm = float(np.max(np.abs(grad(beta))))
        if moved < tol and gnorm < grad_tol:
            return FitResult(beta, True, it, gnorm, fval, damped)
        # still moving at a huge norm: the gradient may look flat, but the MLE is at infinity
        if separation_norm is not None and np.linalg.norm(beta) > separation_norm:
            raise QuasiSeparationError(
                f"coefficients diverging (|beta| = {np.linalg.norm(beta):.1f}); "
                "outcome looks quasi-separated"
            )
    gnorm = float(np.max(np.abs(grad(beta))))
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (|grad| = {gnorm:.2e})")


def _newton_step(H, g):
    p = H.shape[0]
    lam = 0.0
    while lam < 1e8:
        A = -H + lam * np.eye(p)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            lam = 1e-8 if lam == 0.0 else 2.0 * lam
            continue
        z = np.linalg.solve(L, g)
        step = np.linalg.solve(L.T, z)
        if np.all(np.isfinite(step)):
            if lam > 0:
                logger.debug("Newton step damped with lambda=%g", lam)
            return step, lam > 0
        lam = 1e-8 if lam == 0.0 else 2.0 * lam
    return None


def fit_mle(X, y, tol: float = 1e-8, max_iter: int = 100, beta0=None) -> FitResult:
    """Maximum-likelihood logistic fit by Newton's method."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("no rows to fit")
    if y.min() == y.max():
        raise SingleClassError("single-class outcome: the MLE does not exist")
    start = np.zeros(X.shape[1]) if beta0 is None else np.asarray(beta0, dtype=np.float64)
    return newton_maximize(
        lambda b: log_likelihood(b, X, y),
        lambda b: gradient(b, X, y),
        lambda b: hessian(b, X, y),
        start,
        tol=tol,
        max_iter=max_iter,
    )
