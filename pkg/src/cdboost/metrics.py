"""Selection, estimation, and prediction metrics plus the benchmark harness.

Group-level positives are counted over adjacent dataset pairs (m, m+1): a
positive is a pair whose estimated coefficient blocks for a group are exactly
equal element-wise (both all-zero counts); it is true when the underlying
truth blocks are equal as well.  With three datasets a fully common group
can contribute 2 positives, a partially common one 1, matching the intended
totals (a pooled fit always produces exactly K*(M-1) positives).
"""

import concurrent.futures
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import (
    BoostConfig,
    DatasetBundle,
    FitResult,
    GroupStructure,
    NumericError,
    ValidationError,
)
from .boosting import fit as run_fit
from .simulate import (
    P_SPLIT,
    GroundTruth,
    SimDesign,
    covariance_quad_form,
    scenario_counts,
    simulate_replicate,
    stream,
)
from .tuning import select_lambda

METHOD_ALIASES = {
    "cd": "cd_sboost", "cd-sboost": "cd_sboost", "cd_sboost": "cd_sboost",
    "int": "int_sboost", "int-sboost": "int_sboost", "int_sboost": "int_sboost",
    "sep": "sep_sboost", "sep-sboost": "sep_sboost", "sep_sboost": "sep_sboost",
    "pool": "pool_sboost", "pool-sboost": "pool_sboost", "pool_sboost": "pool_sboost",
    "sboost": "sboost",
}

METRIC_FIELDS = ("variable_tp", "variable_fp", "group_tp", "group_fp", "ermse", "prmse")


def canonical_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown method {name!r}") from None


def _block_pairs_equal(beta: np.ndarray, groups: GroupStructure):
    """Per (group, adjacent pair): exact element-wise block equality."""
    M = beta.shape[1]
    for k in range(groups.K):
        block = beta[groups.indices(k)]
        yield k, tuple(
            bool(np.array_equal(block[:, m], block[:, m + 1])) for m in range(M - 1)
        )


def group_tp_fp(fit: FitResult, truth: GroundTruth, groups: GroupStructure) -> tuple[int, int]:
    """Adjacent-pair commonality positives split into true and false."""
    if fit.beta_hat.shape != truth.beta.shape:
        raise ValidationError("fit and truth dimensions differ")
    tp = fp = 0
    for k, est in _block_pairs_equal(fit.beta_hat, groups):
        for i, equal in enumerate(est):
            if equal:
                if truth.equal_pairs[k][i]:
                    tp += 1
                else:
                    fp += 1
    return tp, fp


def variable_tp_fp(fit: FitResult, truth: GroundTruth) -> tuple[int, int]:
    """Covariate selection counts summed over datasets."""
    est = fit.beta_hat != 0
    true = truth.beta != 0
    tp = int(np.sum(est & true))
    fp = int(np.sum(est & ~true))
    return tp, fp


def ermse(fit: FitResult, truth: GroundTruth) -> float:
    """Root of the summed squared coefficient errors across datasets."""
    return float(np.sqrt(np.sum((fit.beta_hat - truth.beta) ** 2)))


def prmse_lr(fit: FitResult, test_bundles) -> float:
    """Root of the summed squared prediction errors on held-out data."""
    total = 0.0
    for m, b in enumerate(test_bundles):
        r = b.y - b.X @ fit.beta_hat[:, m]
        total += float(r @ r)
    return math.sqrt(total)


def prmse_aft(fit: FitResult, truth: GroundTruth, design: SimDesign) -> float:
    """(1/sigma) root of the summed quadratic forms under the true covariate
    covariance (computed from the design's factor structure)."""
    if design.sigma <= 0:
        raise ValidationError("sigma must be positive")
    total = 0.0
    for m in range(truth.beta.shape[1]):
        d = fit.beta_hat[:, m] - truth.beta[:, m]
        total += covariance_quad_form(design, d)
    return math.sqrt(total) / design.sigma


def ooi(selection_lists, top: int = 15) -> float:
    """Mean of the ``top`` largest per-covariate selection frequencies.

    Each entry of ``selection_lists`` is the set of covariates selected on
    one split; a covariate's frequency is the fraction of splits selecting
    it.  Covariates never selected have frequency zero, so with fewer than
    ``top`` ever-selected covariates the zeros pull the mean down (warned).
    """
    lists = [set(map(int, sel)) for sel in selection_lists]
    if len(lists) < 2:
        raise ValidationError("need at least 2 splits for stability")
    counts = Counter()
    for sel in lists:
        counts.update(sel)
    freqs = sorted((c / len(lists) for c in counts.values()), reverse=True)
    if len(freqs) < top:
        warnings.warn(f"only {len(freqs)} covariates ever selected (< {top})")
        freqs += [0.0] * (top - len(freqs))
    return float(np.mean(freqs[:top]))


def logrank_score(fit: FitResult, test_bundle: DatasetBundle, m: int = 0) -> float:
    """Two-sample logrank chi-square after a median split of predicted risk.

    Subjects with x'beta above the median form the high-risk group; the
    statistic is (O - E)^2 / V over the distinct event times.
    """
    if test_bundle.delta is None:
        raise ValidationError("logrank evaluation needs censored survival data")
    risk = test_bundle.X @ fit.beta_hat[:, m]
    high = risk > np.median(risk)
    if not high.any() or high.all():
        raise NumericError("degenerate risk split: all predictions on one side")
    y, delta = test_bundle.y, test_bundle.delta
    if not (delta[high].any() and delta[~high].any()):
        raise NumericError("no events in one risk group")
    O = E = V = 0.0
    for t in np.unique(y[delta == 1]):
        at_risk = y >= t
        n_j = int(at_risk.sum())
        n1_j = int((at_risk & high).sum())
        events = (y == t) & (delta == 1)
        d_j = int(events.sum())
        O += int((events & high).sum())
        E += d_j * n1_j / n_j
        if n_j > 1:
            V += d_j * (n1_j / n_j) * (1 - n1_j / n_j) * (n_j - d_j) / (n_j - 1)
    if V <= 0:
        raise NumericError("zero logrank variance")
    return (O - E) ** 2 / V


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicateMetrics:
    method: str
    replicate: int
    variable_tp: int
    variable_fp: int
    group_tp: int
    group_fp: int
    ermse: float
    prmse: float
    t_hat: int
    lam: float


@dataclass
class MetricReport:
    design: SimDesign
    methods: tuple[str, ...]
    replicates: int
    rows: list[ReplicateMetrics] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def rows_for(self, method: str) -> list[ReplicateMetrics]:
        return [r for r in self.rows if r.method == method]

    def aggregate(self) -> dict:
        """Per method, mean and SD of every metric (SD 0 for one replicate)."""
        out = {}
        for method in self.methods:
            rows = self.rows_for(method)
            stats = {}
            for name in METRIC_FIELDS:
                vals = np.array([getattr(r, name) for r in rows], dtype=float)
                if vals.size == 0:
                    stats[name] = {"mean": float("nan"), "sd": float("nan")}
                else:
                    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                    stats[name] = {"mean": float(vals.mean()), "sd": sd}
            out[method] = stats
        return out

    def to_json(self) -> dict:
        return {
            "design": asdict(self.design),
            "methods": list(self.methods),
            "replicates": self.replicates,
            "rows": [asdict(r) for r in self.rows],
            "aggregates": self.aggregate(),
            "failures": list(self.failures),
        }

    def to_table(self) -> str:
        """Aligned text table: variable TP/FP, group TP/FP, ERMSE, PRMSE."""
        agg = self.aggregate()
        headers = ["method", "var TP", "var FP", "grp TP", "grp FP", "ERMSE", "PRMSE"]
        lines = [headers]
        for method in self.methods:
            cells = [method]
            for name in METRIC_FIELDS:
                s = agg[method][name]
                cells.append(f"{s['mean']:.1f} ({s['sd']:.1f})")
            lines.append(cells)
        widths = [max(len(row[i]) for row in lines) for i in range(len(headers))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in lines
        )


def _fit_method(method, bundles, groups, config, tune, verify):
    """One method on one replicate; returns (FitResult, lambda used)."""
    algo = canonical_method(method)
    cfg = BoostConfig(nu=config.nu, T=config.T, lam=config.lam,
                      algorithm=algo, model=config.model,
                      penalty_mode=config.penalty_mode)
    if algo == "cd_sboost":
        if tune:
            lam, result = select_lambda(bundles, groups, cfg,
                                        verify_partitions=verify)
            return result, lam
        return run_fit(bundles, groups, cfg, verify_partitions=verify), cfg.lam
    return run_fit(bundles, groups, cfg), 0.0


def _benchmark_replicate(args):
    design, methods, replicate, config, tune, verify = args
    groups = design.groups()
    bundles, truth = simulate_replicate(design, replicate)

    # realized truth must reproduce the designed positive count
    n_f, n_p, _ = scenario_counts(design.K, design.rho_f, design.rho_p, design.rho_n)
    if truth.n_ig != 2 * n_f + n_p:
        raise AssertionError(
            f"replicate {replicate}: N_ig {truth.n_ig} != {2 * n_f + n_p}"
        )

    test_bundles = None
    if design.model == "lr":
        test_bundles, _ = simulate_replicate(design, replicate, truth=truth, test=True)

    rows = []
    for method in methods:
        result, lam = _fit_method(method, bundles, groups, config, tune, verify)
        gtp, gfp = group_tp_fp(result, truth, groups)
        if canonical_method(method) == "pool_sboost":
            if gtp + gfp != groups.K * (design.M - 1):
                raise AssertionError(
                    f"pooled fit: group TP+FP {gtp + gfp} != K(M-1)"
                )
        vtp, vfp = variable_tp_fp(result, truth)
        if design.model == "lr":
            prmse = prmse_lr(result, test_bundles)
        else:
            prmse = prmse_aft(result, truth, design)
        rows.append(ReplicateMetrics(
            method=method, replicate=replicate,
            variable_tp=vtp, variable_fp=vfp, group_tp=gtp, group_fp=gfp,
            ermse=ermse(result, truth), prmse=prmse,
            t_hat=result.t_hat, lam=lam,
        ))
    return rows


def benchmark(
    design: SimDesign,
    methods,
    replicates: int,
    config: BoostConfig | None = None,
    tune: bool = True,
    workers: int = 1,
    verify: bool = True,
) -> MetricReport:
    """Generate, fit, and score ``replicates`` draws for each method.

    ``tune`` selects the cd_sboost penalty weight per replicate by HDBIC
    grid search.  ``verify`` cross-checks tracked equality classes against
    element-wise comparison inside every cd fit.  Per-replicate failures are
    recorded in the report, not raised.  Results are identical for any
    worker count (replicate-indexed streams, ordered aggregation).
    """
    methods = tuple(methods)
    if replicates < 1:
        raise ValidationError("need at least one replicate")
    for method in methods:
        if canonical_method(method) == "sboost":
            raise ValidationError("sboost is single-dataset; use sep_sboost")
    if config is None:
        config = BoostConfig(model=design.model)
    if config.model != design.model:
        raise ValidationError("config model differs from design model")
    jobs = [(design, methods, r, config, tune, verify) for r in range(replicates)]
    report = MetricReport(design=design, methods=methods, replicates=replicates)
    results: list[list[ReplicateMetrics] | None] = [None] * replicates
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_benchmark_replicate, job): r
                       for r, job in enumerate(jobs)}
            for fut in concurrent.futures.as_completed(futures):
                r = futures[fut]
                try:
                    results[r] = fut.result()
                except Exception as exc:  # recorded, not fatal
                    report.failures.append(f"replicate {r}: {exc}")
    else:
        for r, job in enumerate(jobs):
            try:
                results[r] = _benchmark_replicate(job)
            except Exception as exc:
                report.failures.append(f"replicate {r}: {exc}")
    for rows in results:
        if rows:
            report.rows.extend(rows)
    return report


# ---------------------------------------------------------------------------
# Stability analysis over random train/test splits
# ---------------------------------------------------------------------------


def split_bundles(bundles, seed: int, split: int, train_frac: float = 0.75):
    """Random per-dataset row split; sorted indices keep row order stable."""
    train, test = [], []
    for m, b in enumerate(bundles):
        rng = stream(seed, split, m + 1, P_SPLIT)
        perm = rng.permutation(b.n)
        n_test = max(1, int(round(b.n * (1 - train_frac))))
        te = np.sort(perm[:n_test])
        tr = np.sort(perm[n_test:])
        train.append(DatasetBundle(
            X=b.X[tr], y=b.y[tr],
            delta=None if b.delta is None else b.delta[tr], id=b.id))
        test.append(DatasetBundle(
            X=b.X[te], y=b.y[te],
            delta=None if b.delta is None else b.delta[te], id=b.id))
    return train, test


def _stability_split(args):
    bundles, groups, config, methods, seed, split, tune = args
    train, test = split_bundles(bundles, seed, split)
    out = {}
    for method in methods:
        result, lam = _fit_method(method, train, groups, config, tune, False)
        selected = sorted(set(
            int(j) for m in range(result.M) for j in result.selected[m]
        ))
        if config.model == "lr":
            score = prmse_lr(result, test)
        else:
            per_ds = []
            for m in range(result.M):
                try:
                    per_ds.append(logrank_score(result, test[m], m))
                except NumericError:
                    per_ds.append(float("nan"))
            score = float(np.nanmean(per_ds)) if per_ds else float("nan")
        out[method] = (selected, score, lam)
    return out


def stability(
    bundles,
    groups: GroupStructure,
    config: BoostConfig,
    methods,
    n_splits: int = 100,
    seed: int = 0,
    tune: bool = False,
    workers: int = 1,
) -> dict:
    """Repeated 3:1 split evaluation: selection stability and prediction.

    Per split each method is refit on the training rows; the selection set
    is the union of per-dataset supports. Reports the top-frequency OOI and
    the mean/SD of the prediction score (summed-RSS root for uncensored
    data, mean per-dataset logrank chi-square for censored data).
    """
    methods = tuple(methods)
    bundles = list(bundles)
    if n_splits < 2:
        raise ValidationError("need at least 2 splits")
    jobs = [(bundles, groups, config, methods, seed, s, tune) for s in range(n_splits)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            per_split = list(pool.map(_stability_split, jobs))
    else:
        per_split = [_stability_split(j) for j in jobs]
    report = {}
    for method in methods:
        selections = [ps[method][0] for ps in per_split]
        scores = np.array([ps[method][1] for ps in per_split], dtype=float)
        finite = scores[np.isfinite(scores)]
        report[method] = {
            "ooi": ooi(selections),
            "score_mean": float(finite.mean()) if finite.size else float("nan"),
            "score_sd": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
            "degenerate_splits": int(np.sum(~np.isfinite(scores))),
            "splits": n_splits,
        }
    return report
