import numpy as np
import pytest

from cdboost.boosting import (
    Candidate,
    PenaltySpec,
    candidate_set,
    cd_objective,
    cd_sboost_fit,
    commonality_penalty,
    fit,
    int_sboost_fit,
    pool_sboost_fit,
    sboost_fit,
    sep_sboost_fit,
)
from cdboost.data import (
    BoostConfig,
    CoefficientState,
    DatasetBundle,
    GroupStructure,
    partition_refresh,
    standardize_columns,
)
from cdboost.losses import build_context

from conftest import make_lr_bundles, make_aft_bundles, tiny_groups


def strong_signal_bundle(rng, n=60, p=8, support=(1, 4)):
    X = standardize_columns(rng.standard_normal((n, p)))
    beta = np.zeros(p)
    beta[list(support)] = 2.0
    y = X @ beta + 0.1 * rng.standard_normal(n)
    return DatasetBundle(X=X, y=y, delta=None, id=0), beta


# penalty -------------------------------------------------------------------


def test_penalty_zero_when_all_common():
    spec = PenaltySpec(lam=2.0, M=3, K=4)
    state = CoefficientState.initial(8, 3, 4)
    assert commonality_penalty(state, spec) == 0.0


def test_penalty_hits_lam_when_all_differ():
    spec = PenaltySpec(lam=2.0, M=3, K=2)
    state = CoefficientState(
        beta=np.zeros((4, 3)),
        partitions=[tuple((m,) for m in range(3))] * 2,
        iteration=0,
    )
    assert commonality_penalty(state, spec) == pytest.approx(2.0)


def test_penalty_mixed_partitions_all_pairs():
    # groups: {123}, {1}{2}{3}, {12}{3}, {23}{1} -> 0+3+2+2 of 12 pairs
    spec = PenaltySpec(lam=1.0, M=3, K=4, mode="all_pairs")
    parts = [
        ((0, 1, 2),),
        ((0,), (1,), (2,)),
        ((0, 1), (2,)),
        ((1, 2), (0,)),
    ]
    state = CoefficientState(beta=np.zeros((8, 3)), partitions=parts, iteration=0)
    assert commonality_penalty(state, spec) == pytest.approx(7.0 / 12.0)


def test_penalty_ordered_counts_adjacent_pairs_only():
    spec = PenaltySpec(lam=1.0, M=3, K=1, mode="ordered")
    # {13}{2}: both adjacent pairs (1,2) and (2,3) differ
    state = CoefficientState(
        beta=np.zeros((2, 3)), partitions=[((0, 2), (1,))], iteration=0
    )
    assert commonality_penalty(state, spec) == pytest.approx(1.0)


def test_penalty_bounds_random_partitions(rng):
    spec = PenaltySpec(lam=0.7, M=4, K=3)
    for _ in range(50):
        parts = []
        for _k in range(3):
            labels = rng.integers(0, 4, size=4)
            classes = {}
            for m, c in enumerate(labels):
                classes.setdefault(int(c), []).append(m)
            parts.append(tuple(tuple(v) for v in classes.values()))
        state = CoefficientState(beta=np.zeros((6, 4)), partitions=parts, iteration=0)
        pen = commonality_penalty(state, spec)
        assert 0.0 <= pen <= 0.7 + 1e-15


def test_penalty_single_dataset_is_zero():
    spec = PenaltySpec(lam=5.0, M=1, K=2)
    state = CoefficientState.initial(4, 1, 2)
    assert commonality_penalty(state, spec) == 0.0


# candidates ----------------------------------------------------------------


def test_candidate_set_respects_partition(lr_problem):
    bundles, groups = lr_problem
    ctx = build_context(bundles, "lr")
    state = CoefficientState(
        beta=np.zeros((6, 3)),
        partitions=[((0, 1), (2,)), ((0, 1, 2),)],
        iteration=0,
    )
    cands = candidate_set(ctx, state, groups, 0)   # group 0: {01}{2}
    assert sorted(c.A for c in cands) == [(0,), (0, 1), (1,), (2,)]
    cands = candidate_set(ctx, state, groups, 5)   # group 1: {012}
    assert sorted(c.A for c in cands) == [
        (0,), (0, 1), (0, 1, 2), (0, 2), (1,), (1, 2), (2,),
    ]


def test_cd_objective_matches_manual(lr_problem):
    bundles, groups = lr_problem
    ctx = build_context(bundles, "lr")
    state = CoefficientState.initial(6, 3, 2)
    spec = PenaltySpec(lam=0.5, M=3, K=2)
    cand = Candidate(s=0, A=(0, 1), gamma=0.3)
    got = cd_objective(ctx, state, groups, cand, spec)

    total = 0.0
    for m in range(3):
        beta = np.zeros(6)
        if m in (0, 1):
            beta[0] = 0.3
        r = bundles[m].y - bundles[m].X @ beta
        n = bundles[m].n
        total += 0.5 * (r @ r) / n
        total += np.log(n) / n * np.count_nonzero(beta)
    # splitting {012} into {01}{2} makes 2 of 6 pairs unequal
    total += 0.5 * 2 / 6
    assert got == pytest.approx(total, rel=1e-12)


# single-dataset fits ---------------------------------------------------------


def test_sboost_recovers_strong_signal(rng):
    bundle, beta = strong_signal_bundle(rng)
    groups = tiny_groups(8, 2)
    res = sboost_fit(bundle, groups, BoostConfig(T=300, model="lr"))
    assert set(res.selected[0]) >= {1, 4}
    assert res.beta_hat[1, 0] == pytest.approx(2.0, abs=0.35)
    assert 1 <= res.t_hat <= 300


def test_sboost_t_hat_is_trace_argmin(rng):
    bundle, _ = strong_signal_bundle(rng)
    res = sboost_fit(bundle, tiny_groups(8, 2), BoostConfig(T=120, model="lr"))
    assert res.t_hat == int(np.argmin(res.objective_trace)) + 1


def test_all_fits_loss_monotone(lr_problem):
    bundles, groups = lr_problem
    cfg = BoostConfig(T=80, model="lr")
    for fitter in (sep_sboost_fit, int_sboost_fit, pool_sboost_fit, cd_sboost_fit):
        res = fitter(bundles, groups, cfg)
        assert (np.diff(res.loss_trace) <= 1e-12).all(), fitter.__name__


def test_loss_monotone_aft(aft_problem):
    bundles, groups = aft_problem
    cfg = BoostConfig(T=60, model="aft")
    for fitter in (sep_sboost_fit, int_sboost_fit, pool_sboost_fit, cd_sboost_fit):
        res = fitter(bundles, groups, cfg)
        assert (np.diff(res.loss_trace) <= 1e-12).all(), fitter.__name__


# reduction identities --------------------------------------------------------


def test_cd_single_dataset_equals_sboost(rng):
    bundle, _ = strong_signal_bundle(rng, n=40, p=6)
    groups = tiny_groups(6, 3)
    cfg = BoostConfig(T=100, model="lr")
    a = sboost_fit(bundle, groups, cfg)
    b = cd_sboost_fit([bundle], groups, cfg)
    assert a.t_hat == b.t_hat
    assert np.array_equal(a.beta_hat, b.beta_hat)
    assert np.array_equal(a.objective_trace, b.objective_trace)


def test_pool_equals_sboost_on_stacked_rows(rng):
    bundles = make_lr_bundles(rng, M=3, n=30, p=6)
    groups = tiny_groups(6, 2)
    cfg = BoostConfig(T=100, model="lr")
    pooled = DatasetBundle(
        X=np.vstack([b.X for b in bundles]),
        y=np.concatenate([b.y for b in bundles]),
        delta=None,
        id=0,
    )
    a = sboost_fit(pooled, groups, cfg)
    b = pool_sboost_fit(bundles, groups, cfg)
    assert a.t_hat == b.t_hat
    for m in range(3):
        assert np.array_equal(b.beta_hat[:, m], a.beta_hat[:, 0])


# multi-dataset behavior ------------------------------------------------------


def test_int_shares_t_hat_sep_does_not(rng):
    bundles = make_lr_bundles(rng, M=3, n=30, p=6)
    groups = tiny_groups(6, 2)
    cfg = BoostConfig(T=80, model="lr")
    ri = int_sboost_fit(bundles, groups, cfg)
    assert ri.t_hat == int(np.argmin(ri.objective_trace)) + 1


def test_cd_zero_lambda_splits_freely(rng):
    bundles = make_lr_bundles(rng, M=2, n=50, p=6)
    # make dataset signals disagree so joint updates are suboptimal
    b0, b1 = bundles
    y1 = b1.X @ np.array([0, 0, 0, 1.5, 0, 0.0]) + 0.2 * rng.standard_normal(50)
    bundles = [b0, DatasetBundle(X=b1.X, y=y1, delta=None, id=1)]
    groups = tiny_groups(6, 2)
    res = cd_sboost_fit(bundles, groups, BoostConfig(T=150, lam=0.0, model="lr"),
                        verify_partitions=True)
    refreshed = partition_refresh(
        CoefficientState(beta=res.beta_hat, partitions=[], iteration=res.t_hat),
        groups,
    )
    assert refreshed.partitions == res.partitions


def test_cd_large_lambda_keeps_groups_common(rng):
    bundles = make_lr_bundles(rng, M=3, n=40, p=6)
    groups = tiny_groups(6, 2)
    res = cd_sboost_fit(bundles, groups, BoostConfig(T=100, lam=1e6, model="lr"))
    assert res.partitions == [((0, 1, 2),)] * 2
    assert res.group_verdicts(groups) == ["common", "common"]


def test_cd_all_zero_response_never_updates():
    X = standardize_columns(np.random.default_rng(0).standard_normal((20, 4)))
    bundles = [DatasetBundle(X=X, y=np.zeros(20), delta=None, id=m) for m in range(2)]
    groups = tiny_groups(4, 2)
    res = cd_sboost_fit(bundles, groups, BoostConfig(T=10, model="lr"))
    assert np.all(res.beta_hat == 0.0)
    assert res.partitions == [((0, 1),)] * 2


def test_cd_initial_partitions_override(rng):
    bundles = make_lr_bundles(rng, M=3, n=30, p=4)
    groups = tiny_groups(4, 2)
    singles = [tuple((m,) for m in range(3))] * 2
    res = cd_sboost_fit(
        bundles, groups, BoostConfig(T=40, lam=0.0, model="lr"),
        initial_partitions=singles,
    )
    # singletons can never merge
    assert all(len(c) == 1 for part in res.partitions for c in part)


def test_cd_deterministic_across_calls(rng):
    bundles = make_lr_bundles(rng, M=3, n=30, p=6)
    groups = tiny_groups(6, 2)
    cfg = BoostConfig(T=60, lam=0.3, model="lr")
    a = cd_sboost_fit(bundles, groups, cfg)
    b = cd_sboost_fit(bundles, groups, cfg)
    assert np.array_equal(a.beta_hat, b.beta_hat)
    assert a.t_hat == b.t_hat
    assert a.partitions == b.partitions


def test_cd_partitions_verified_on_aft(aft_problem):
    bundles, groups = aft_problem
    res = cd_sboost_fit(bundles, groups, BoostConfig(T=50, lam=0.2, model="aft"),
                        verify_partitions=True)
    assert res.t_hat >= 1


def test_fit_dispatch(lr_problem):
    bundles, groups = lr_problem
    for algorithm in ("sep_sboost", "int_sboost", "pool_sboost", "cd_sboost"):
        cfg = BoostConfig(T=30, model="lr", algorithm=algorithm)
        res = fit(bundles, groups, cfg)
        assert res.beta_hat.shape == (6, 3)
