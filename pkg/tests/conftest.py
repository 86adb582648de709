import numpy as np
import pytest

from cdboost.data import DatasetBundle, GroupStructure, standardize_columns


def make_lr_bundles(rng, M=2, n=30, p=4, sparsity=2, scale=1.0):
    """Random standardized LR datasets with a shared sparse signal."""
    beta = np.zeros(p)
    support = rng.choice(p, size=sparsity, replace=False)
    beta[support] = scale * rng.uniform(0.5, 1.5, size=sparsity)
    out = []
    for m in range(M):
        X = standardize_columns(rng.standard_normal((n, p)))
        y = X @ beta + rng.standard_normal(n)
        out.append(DatasetBundle(X=X, y=y, delta=None, id=m))
    return out


def make_aft_bundles(rng, M=2, n=30, p=4, censor_frac=0.3):
    """Random AFT datasets: log-time responses with right censoring."""
    beta = np.zeros(p)
    beta[: max(1, p // 2)] = rng.uniform(0.5, 1.0, size=max(1, p // 2))
    out = []
    for m in range(M):
        X = standardize_columns(rng.standard_normal((n, p)))
        log_t = X @ beta + 0.5 * rng.standard_normal(n)
        log_c = np.quantile(log_t, 1 - censor_frac) + 0.2 * rng.standard_normal(n)
        y = np.minimum(log_t, log_c)
        delta = (log_t <= log_c).astype(int)
        if delta.sum() == 0:
            delta[0] = 1
        out.append(DatasetBundle(X=X, y=y, delta=delta, id=m))
    return out


def tiny_groups(p, K):
    sizes = [p // K] * K
    for i in range(p - sum(sizes)):
        sizes[i] += 1
    return GroupStructure(assignment=np.repeat(np.arange(K), sizes))


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def lr_problem(rng):
    bundles = make_lr_bundles(rng, M=3, n=40, p=6)
    return bundles, tiny_groups(6, 2)


@pytest.fixture
def aft_problem(rng):
    bundles = make_aft_bundles(rng, M=2, n=40, p=6)
    return bundles, tiny_groups(6, 2)
