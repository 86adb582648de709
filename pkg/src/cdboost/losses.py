"""Per-dataset loss functions and closed-form componentwise increments.

Two models are supported:

* ``lr`` -- least squares, L(beta) = (1/(2n)) * sum_i (y_i - x_i'beta)^2.
* ``aft`` -- weighted least squares on observed log-times with
  Kaplan-Meier jump weights, L(beta) = (1/2) * sum_i w_(i) (y_(i) - x_(i)'beta)^2
  over the order statistics of log-time. Censored observations carry zero
  weight; with no censoring the weights reduce to 1/n and the two losses
  coincide exactly.

Both cases are handled uniformly through per-observation weights, so every
increment below is a weighted least-squares solution for one covariate.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import CoefficientState, DatasetBundle, ValidationError


@dataclass(frozen=True)
class LossContext:
    """Read-only per-dataset quantities shared by all fitting loops.

    For the survival model the rows of ``X``/``y`` are sorted by observed
    log-time (events before censored on ties) so they align with the
    Kaplan-Meier weights.
    """

    model: str
    X: list[np.ndarray]
    y: list[np.ndarray]
    weights: list[np.ndarray]
    col_norms: list[np.ndarray]  # per dataset: sum_i w_i x_is^2 for each s
    n_obs: list[int]
    n_events: list[int]
    penalty_factor: list[float]  # log(n)/n per dataset

    @property
    def M(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X[0].shape[1]


def km_weights(y_sorted: np.ndarray, delta_sorted: np.ndarray) -> np.ndarray:
    """Kaplan-Meier jump weights for sorted observed times.

    w_(1) = delta_(1)/n and
    w_(i) = delta_(i)/(n-i+1) * prod_{j<i} ((n-j)/(n-j+1))^delta_(j).
    Censored observations get exactly zero weight; with no censoring the
    weights are exactly 1/n.
    """
    delta = np.asarray(delta_sorted, dtype=float)
    n = delta.size
    if delta.sum() == 0:
        raise ValidationError("Kaplan-Meier weights undefined: all observations censored")
    # prod over j < i of ((n-j)/(n-j+1))^delta_j, via cumsum of logs
    j = np.arange(1, n, dtype=float)
    log_terms = delta[:-1] * (np.log(n - j) - np.log(n - j + 1.0))
    cum = np.concatenate(([0.0], np.cumsum(log_terms)))
    i = np.arange(1, n + 1, dtype=float)
    w = delta / (n - i + 1.0) * np.exp(cum)
    return w


def build_context(bundles: list[DatasetBundle], model: str) -> LossContext:
    """Precompute weights and column norms for a list of validated bundles."""
    Xs, ys, ws, norms, n_obs, n_events, pf = [], [], [], [], [], [], []
    for b in bundles:
        n = b.n
        if model == "aft":
            # events before censored on ties, stable within
            order = np.lexsort((1 - b.delta, b.y))
            X = np.ascontiguousarray(b.X[order])
            y = b.y[order]
            w = km_weights(y, b.delta[order])
            n_events.append(int(b.delta.sum()))
        else:
            X, y = b.X, b.y
            w = np.full(n, 1.0 / n)
            n_events.append(n)
        cn = (w[:, None] * X * X).sum(axis=0)
        if (cn == 0).any():
            bad = np.nonzero(cn == 0)[0]
            warnings.warn(
                f"dataset {b.id}: {bad.size} degenerate (zero-norm) columns, "
                f"e.g. {bad[:3].tolist()}; their increments are pinned to 0",
                stacklevel=2,
            )
        Xs.append(X)
        ys.append(y)
        ws.append(w)
        norms.append(cn)
        n_obs.append(n)
        pf.append(np.log(n) / n)
    return LossContext(
        model=model, X=Xs, y=ys, weights=ws, col_norms=norms,
        n_obs=n_obs, n_events=n_events, penalty_factor=pf,
    )


def weighted_loss(ctx: LossContext, beta_col: np.ndarray, m: int) -> float:
    """L^m(beta) = (1/2) sum_i w_i (y_i - x_i'beta)^2."""
    r = ctx.y[m] - ctx.X[m] @ beta_col
    return 0.5 * float(ctx.weights[m] @ (r * r))


def lr_loss(ctx: LossContext, beta_col: np.ndarray, m: int) -> float:
    """Least-squares loss (1/(2n)) * RSS for dataset m."""
    return weighted_loss(ctx, beta_col, m)


def aft_loss(ctx: LossContext, beta_col: np.ndarray, m: int) -> float:
    """Kaplan-Meier-weighted least-squares loss for dataset m."""
    return weighted_loss(ctx, beta_col, m)


def residuals(ctx: LossContext, beta_col: np.ndarray, m: int) -> np.ndarray:
    return ctx.y[m] - ctx.X[m] @ beta_col


def optimal_increment_single(ctx: LossContext, state: CoefficientState, s: int, m: int) -> float:
    """Closed-form minimizer of L^m(beta^m + gamma * e_s) over gamma.

    gamma = (sum_i w_i x_is r_i) / (sum_i w_i x_is^2) with the working
    residual r = y - X beta^m. Degenerate columns yield 0.
    """
    denom = ctx.col_norms[m][s]
    if denom == 0:
        return 0.0
    r = residuals(ctx, state.beta[:, m], m)
    numer = float((ctx.weights[m] * ctx.X[m][:, s]) @ r)
    return numer / denom


def optimal_increment_joint(ctx: LossContext, state: CoefficientState, s: int, A) -> float:
    """Minimizer of sum_{m in A} L^m(beta^m + gamma * e_s) over a shared gamma."""
    num = 0.0
    den = 0.0
    for m in A:
        den += ctx.col_norms[m][s]
        if ctx.col_norms[m][s] == 0:
            continue
        r = residuals(ctx, state.beta[:, m], m)
        num += float((ctx.weights[m] * ctx.X[m][:, s]) @ r)
    if den == 0:
        return 0.0
    return num / den


def sparsity_term(ctx: LossContext, m: int, beta_col: np.ndarray) -> float:
    """(log n^m / n^m) times the number of nonzero coefficients."""
    return ctx.penalty_factor[m] * int(np.count_nonzero(beta_col))
