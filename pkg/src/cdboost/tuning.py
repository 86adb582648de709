"""HDBIC model scoring and grid search for the commonality penalty weight.

HDBIC = sum over datasets of  n log(RSS/n) + df * log(p) * log(n)
with natural logarithms, df the per-dataset count of nonzero coefficients,
and (p, n) the covariate and sample counts.  Under the censored model the
residual sum of squares is replaced by its Kaplan-Meier-weighted version and
n by the event count; for fully uncensored data this reduces to the plain
formula.  A lower score is better.
"""

import concurrent.futures
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import BoostConfig, FitResult, GroupStructure, NumericError
from .losses import build_context

RSS_FLOOR = 1e-12


def hdbic(fit, bundles) -> float:
    """Score a fit on the data it was fit to.

    ``fit`` may be a FitResult or a bare (p, M) coefficient array.  The
    model is taken from the bundles: presence of censoring indicators means
    the weighted variant.  A zero residual sum of squares is floored at
    1e-12 (with a warning) so the log stays finite.
    """
    beta = fit.beta_hat if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    bundles = list(bundles)
    model = "aft" if bundles[0].delta is not None else "lr"
    ctx = build_context(bundles, model)
    if beta.shape != (ctx.p, ctx.M):
        raise ValueError(f"coefficient shape {beta.shape} != {(ctx.p, ctx.M)}")
    log_p = math.log(ctx.p)
    total = 0.0
    for m in range(ctx.M):
        r = ctx.y[m] - ctx.X[m] @ beta[:, m]
        df = int(np.count_nonzero(beta[:, m]))
        if model == "aft":
            n_eff = ctx.n_events[m]
            rss = float(ctx.weights[m] @ (r * r))
            if rss < RSS_FLOOR:
                warnings.warn(f"dataset {m}: weighted RSS floored at {RSS_FLOOR}")
                rss = RSS_FLOOR
            total += n_eff * math.log(rss) + df * log_p * math.log(n_eff)
        else:
            n = ctx.n_obs[m]
            rss = float(r @ r)
            if rss < RSS_FLOOR:
                warnings.warn(f"dataset {m}: RSS floored at {RSS_FLOOR}")
                rss = RSS_FLOOR
            total += n * math.log(rss / n) + df * log_p * math.log(n)
    return total


@dataclass
class LambdaGrid:
    """Candidate penalty weights, ascending, plus per-value search results."""

    values: tuple[float, ...]
    scores: list[float] = field(default_factory=list)
    fits: list[FitResult] = field(default_factory=list)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("empty lambda grid")
        if any(v < 0 for v in vals):
            raise ValueError("lambda values must be >= 0")
        if list(vals) != sorted(vals):
            raise ValueError("lambda grid must be ascending")
        self.values = vals


def default_lambda_grid(bundles) -> LambdaGrid:
    """{0} plus 10 geometric points spanning two decades up to lambda_max.

    lambda_max = sum of log(n) over datasets, the scale of the per-step
    sparsity cost, so the largest grid value can actually move selections.
    """
    lam_max = sum(math.log(b.n) for b in bundles)
    vals = [0.0] + list(np.geomspace(0.01 * lam_max, lam_max, 10))
    return LambdaGrid(values=tuple(vals))


def _fit_and_score(args):
    lam, bundles, groups, config, fit_kwargs = args
    from .boosting import cd_sboost_fit

    cfg = BoostConfig(
        nu=config.nu, T=config.T, lam=lam, algorithm="cd_sboost",
        model=config.model, penalty_mode=config.penalty_mode,
    )
    fit = cd_sboost_fit(bundles, groups, cfg, **fit_kwargs)
    return hdbic(fit, bundles), fit


def select_lambda(
    bundles,
    groups: GroupStructure,
    config: BoostConfig,
    grid: LambdaGrid | None = None,
    workers: int = 1,
    **fit_kwargs,
) -> tuple[float, FitResult]:
    """Fit cd_sboost at every grid value; return the HDBIC minimizer.

    Ties (including duplicate grid values) resolve to the smaller lambda.
    The grid object, when supplied, is filled with per-value scores and
    fits. Fits may run in parallel; the winner is identical either way.
    """
    bundles = list(bundles)
    if grid is None:
        grid = default_lambda_grid(bundles)
    jobs = [(lam, bundles, groups, config, fit_kwargs) for lam in grid.values]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_and_score, jobs))
    else:
        results = [_fit_and_score(j) for j in jobs]
    grid.scores = [score for score, _ in results]
    grid.fits = [fit for _, fit in results]
    best = None
    for lam, (score, fit) in zip(grid.values, results):
        if not math.isfinite(score):
            continue
        if best is None or score < best[1]:
            best = (lam, score, fit)
    if best is None:
        raise NumericError("no finite HDBIC score on the lambda grid")
    return best[0], best[2]
