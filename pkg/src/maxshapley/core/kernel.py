"""KernelSHAP: Shapley values as a kernel-weighted regression over coalitions."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize

from maxshapley.core.games import AttributionVector, Method, UtilityOracle, evaluate
from maxshapley.errors import CapExceededError, EstimationError, InvalidArgumentError

ALL = "ALL"
KERNEL_CAP = 16


def shapley_kernel_weight(m: int, k: int) -> float:
    """Weight of a size-``k`` coalition: (m-1) / (C(m,k) k (m-k)); undefined at k in {0, m}."""
    return (m - 1) / (math.comb(m, k) * k * (m - k))


def _all_proper_coalitions(m: int) -> list[tuple[int, ...]]:
    return [c for k in range(1, m) for c in itertools.combinations(range(m), k)]


def sample_coalitions(m: int, budget: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Distinct proper coalitions: all singletons and leave-one-outs, then kernel-weighted draws.

    Extra draws pick a size with probability proportional to the total kernel
    mass of that size, then a uniform subset of that size; repeats are
    rejected, which amounts to successive sampling without replacement.
    """
    chosen: dict[tuple[int, ...], None] = {}
    for i in range(m):
        chosen[(i,)] = None
    for i in range(m):
        chosen[tuple(j for j in range(m) if j != i)] = None
    sizes = np.arange(1, m)
    size_mass = np.array([1.0 / (k * (m - k)) for k in sizes])
    size_mass /= size_mass.sum()
    while len(chosen) < budget:
        k = int(rng.choice(sizes, p=size_mass))
        members = tuple(sorted(int(x) for x in rng.choice(m, size=k, replace=False)))
        chosen.setdefault(members, None)
    return list(chosen)


def _solve_constrained_wls(X: np.ndarray, y: np.ndarray, w: np.ndarray, delta: float) -> np.ndarray:
    # eliminate the last coordinate through sum(phi) = delta
    m = X.shape[1]
    Xr = X[:, :-1] - X[:, -1:]
    yr = y - X[:, -1] * delta
    sw = np.sqrt(w)
    A = Xr * sw[:, None]
    b = yr * sw
    if np.linalg.matrix_rank(A) < m - 1:
        raise EstimationError(
            f"kernel regression design is singular ({len(y)} coalitions for m={m}); use a larger n_coalitions"
        )
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.append(beta, delta - beta.sum())


def _solve_lasso(X, y, w, delta, penalty, start):
    # phi = pos - neg with pos, neg >= 0 turns the L1 term into a smooth linear one
    m = X.shape[1]

    def objective(z):
        phi = z[:m] - z[m:]
        r = y - X @ phi
        grad_phi = -2.0 * X.T @ (w * r)
        return float(w @ r**2 + penalty * z.sum()), np.concatenate([grad_phi + penalty, -grad_phi + penalty])

    z0 = np.concatenate([np.clip(start, 0, None), np.clip(-start, 0, None)])
    constraint = {"type": "eq", "fun": lambda z: z[:m].sum() - z[m:].sum() - delta,
                  "jac": lambda z: np.concatenate([np.ones(m), -np.ones(m)])}
    res = minimize(objective, z0, jac=True, method="SLSQP", bounds=[(0, None)] * (2 * m),
                   constraints=[constraint], options={"ftol": 1e-12, "maxiter": 500})
    if not res.success:
        raise EstimationError(f"L1-penalised kernel regression did not converge: {res.message}")
    return res.x[:m] - res.x[m:]


def kernel_shap(
    oracle: UtilityOracle,
    m: int,
    n_coalitions: int | str = ALL,
    seed: int = 0,
    l1_penalty: float = 0.0,
    cap: int = KERNEL_CAP,
) -> AttributionVector:
    """Estimate Shapley values by kernel-weighted least squares.

    Minimises ``sum_z w(|z|) (U(z) - U(empty) - z.phi)^2 + l1_penalty * |phi|_1``
    subject to ``sum(phi) = U(S) - U(empty)``.

    Args:
        oracle: utility oracle over ``m`` players.
        m: number of players, at least 2.
        n_coalitions: number of distinct proper non-empty coalitions to fit on,
            or ``"ALL"`` to enumerate all ``2^m - 2`` of them.
        seed: RNG seed for coalition sampling.
        l1_penalty: LASSO strength; 0 gives plain weighted least squares.

    Raises:
        EstimationError: design matrix too thin to identify ``phi``.
    """
    if m < 2:
        raise InvalidArgumentError(f"kernel_shap needs m >= 2, got {m}")
    if l1_penalty < 0:
        raise InvalidArgumentError("l1_penalty must be non-negative")
    if m > cap:
        raise CapExceededError("KernelSHAP", m, cap)
    n_proper = (1 << m) - 2
    if n_coalitions == ALL or (isinstance(n_coalitions, int) and n_coalitions >= n_proper):
        coalitions = _all_proper_coalitions(m)
    elif isinstance(n_coalitions, int):
        if n_coalitions < m:
            raise InvalidArgumentError(f"n_coalitions must be >= m={m} or ALL, got {n_coalitions}")
        coalitions = sample_coalitions(m, n_coalitions, np.random.default_rng(seed))
    else:
        raise InvalidArgumentError(f"n_coalitions must be an int or {ALL!r}, got {n_coalitions!r}")

    empty = evaluate(oracle, ())
    full = evaluate(oracle, tuple(range(m)))
    X = np.zeros((len(coalitions), m))
    for row, members in enumerate(coalitions):
        X[row, list(members)] = 1.0
    y = np.array([evaluate(oracle, c) for c in coalitions]) - empty
    w = np.array([shapley_kernel_weight(m, len(c)) for c in coalitions])
    delta = full - empty

    phi = _solve_constrained_wls(X, y, w, delta)
    if l1_penalty > 0:
        phi = _solve_lasso(X, y, w, delta, l1_penalty, phi)
    return AttributionVector(phi=phi, method=Method.KERNEL_SHAP, seed=seed, oracle_calls=len(coalitions) + 2)
