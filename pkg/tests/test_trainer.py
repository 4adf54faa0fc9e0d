import itertools

import numpy as np
import pytest

from collabkrr.ensemble import Ensemble, TrainingSet, init_board, make_centralized
from collabkrr.errors import InputError
from collabkrr.kernels import Kernel, KernelExpansion, eval_expansion_many, eval_kernel
from collabkrr.local import LocalSystem, apply_update, local_update
from collabkrr.oracle import solve_centralized, solve_relaxed
from collabkrr.trainer import (
    ProductPoint,
    Schedule,
    TrainConfig,
    conflict_coloring,
    product_distance_sq,
    train,
)

from helpers import overlapping_instance


def test_distance_to_self_is_zero():
    k = Kernel.gaussian()
    X = np.random.default_rng(0).normal(size=(4, 2))
    p = ProductPoint(np.arange(4.0), [KernelExpansion([0, 2], [1.0, -1.0], k), KernelExpansion.zero(k)])
    assert product_distance_sq(p, p, [1.0, 2.0], X) == 0.0


def test_distance_euclidean_part():
    k = Kernel.linear()
    zero = [KernelExpansion.zero(k)]
    a = ProductPoint(np.array([3.0, 4.0]), zero)
    b = ProductPoint(np.zeros(2), zero)
    assert product_distance_sq(a, b, [1.0], np.zeros((2, 1))) == 25.0


def test_distance_matches_explicit_quadratic_form():
    rng = np.random.default_rng(1)
    k = Kernel.gaussian(0.6)
    X = rng.uniform(-1, 1, size=(8, 3))
    fa = [KernelExpansion([0, 1, 5], rng.normal(size=3), k), KernelExpansion([2], rng.normal(size=1), k)]
    fb = [KernelExpansion([1, 6], rng.normal(size=2), k), KernelExpansion([3, 4], rng.normal(size=2), k)]
    za, zb = rng.normal(size=8), rng.normal(size=8)
    lambdas = [0.3, 1.7]
    expected = float(np.sum((za - zb) ** 2))
    for lam, f, g in zip(lambdas, fa, fb):
        coef = {}
        for j, c in zip(f.center_ids, f.coefficients):
            coef[j] = coef.get(j, 0.0) + c
        for j, c in zip(g.center_ids, g.coefficients):
            coef[j] = coef.get(j, 0.0) - c
        expected += lam * sum(ca * cb * eval_kernel(k, X[a], X[b]) for a, ca in coef.items() for b, cb in coef.items())
    got = product_distance_sq(ProductPoint(za, fa), ProductPoint(zb, fb), lambdas, X)
    assert got == pytest.approx(expected, rel=1e-12)


def test_distance_dimension_mismatch():
    k = Kernel.linear()
    with pytest.raises(InputError):
        product_distance_sq(ProductPoint(np.zeros(2), [KernelExpansion.zero(k)]),
                            ProductPoint(np.zeros(3), [KernelExpansion.zero(k)]), [1.0], np.zeros((3, 1)))


def test_single_agent_converges_to_ridge_solution():
    training, _, k, _ = overlapping_instance(0)
    ens = make_centralized(1, training)
    state = train(training, ens, k, TrainConfig([0.7], max_cycles=5000, stop_tol=1e-13))
    assert state.converged
    f_c = solve_centralized(training, k, 0.7)
    X = training.points
    vals = eval_expansion_many(state.functions[0], X, X)
    np.testing.assert_allclose(vals, eval_expansion_many(f_c, X, X), atol=1e-8)
    np.testing.assert_allclose(state.board.z, vals, atol=1e-8)


def test_one_cycle_matches_hand_unrolled_updates():
    training, ens, k, lambdas = overlapping_instance(1)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=1))
    board = init_board(training)
    fs = [KernelExpansion.zero(k) for _ in range(ens.m)]
    for i, ids in enumerate(ens.assignments):
        res = local_update(fs[i], ids, board, training, k, lambdas[i])
        board = apply_update(board, res)
        fs[i] = res.new_f
    assert np.array_equal(state.board.z, board.z)
    for f, g in zip(state.functions, fs):
        assert f.center_ids == g.center_ids
        assert np.array_equal(f.coefficients, g.coefficients)
    assert state.board.version == ens.m


@pytest.mark.parametrize("seed", range(3))
def test_fejer_monotone_per_projection(seed):
    training, ens, k, lambdas = overlapping_instance(seed)
    sol = solve_relaxed(training, ens, k, lambdas)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=300, stop_tol=0),
                  reference=sol.as_product_point())
    dists = [state.initial_dist_to_oracle_sq] + [d for rec in state.history for _, d in rec.projections]
    assert len(dists) == 1 + ens.m * 300
    scale = dists[0]
    for prev, cur in zip(dists, dists[1:]):
        assert cur <= prev + 1e-12 * scale


def test_tracked_distance_matches_product_distance():
    training, ens, k, lambdas = overlapping_instance(2)
    sol = solve_relaxed(training, ens, k, lambdas)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=3), reference=sol.as_product_point())
    direct = product_distance_sq(state.as_product_point(), sol.as_product_point(), lambdas, training.points)
    assert state.history[-1].dist_to_oracle_sq == pytest.approx(direct, rel=1e-10)


def test_step_size_falls_below_threshold():
    training, ens, k, lambdas = overlapping_instance(3)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=2000, stop_tol=0))
    assert state.cycle == 2000 and not state.converged
    assert min(np.sqrt(r.step_sq) for r in state.history) < 1e-9


def test_early_stop_on_step_norm():
    training, ens, k, lambdas = overlapping_instance(4)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=10_000, stop_tol=1e-8))
    assert state.converged
    assert np.sqrt(state.history[-1].step_sq) < 1e-8
    assert all(np.sqrt(r.step_sq) >= 1e-8 for r in state.history[:-1])


def test_support_structure_after_every_cycle():
    training, ens, k, lambdas = overlapping_instance(5)
    violations = []

    def check(state):
        for i, f in enumerate(state.functions):
            violations.extend(j for j in f.center_ids if j not in set(ens[i]))

    train(training, ens, k, TrainConfig(lambdas, max_cycles=50), on_cycle=check)
    assert violations == []


def test_uncovered_examples_keep_their_labels():
    training, _, k, _ = overlapping_instance(6)
    ens = Ensemble(training.n, ((0, 1, 2, 3), (3, 4, 5), (10, 11)))
    state = train(training, ens, k, TrainConfig([0.2] * 3, max_cycles=100))
    uncovered = list(ens.uncovered())
    assert np.array_equal(state.board.z[uncovered], training.labels[uncovered])


@pytest.mark.parametrize("seed", range(3))
def test_schedules_reach_the_same_values(seed):
    training, ens, k, lambdas = overlapping_instance(seed)
    X = training.points
    values = {}
    for schedule in Schedule:
        state = train(training, ens, k, TrainConfig(lambdas, max_cycles=20_000, stop_tol=1e-12,
                                                    schedule=schedule, seed=seed))
        assert state.converged
        values[schedule] = np.array([eval_expansion_many(f, X, X) for f in state.functions])
    for a, b in itertools.combinations(values.values(), 2):
        assert np.max(np.abs(a - b)) <= 1e-6


def test_random_permutation_is_seeded():
    training, ens, k, lambdas = overlapping_instance(7)
    cfg = TrainConfig(lambdas, max_cycles=5, schedule="random_permutation", seed=42)
    a, b = train(training, ens, k, cfg), train(training, ens, k, cfg)
    assert [r.order for r in a.history] == [r.order for r in b.history]
    assert np.array_equal(a.board.z, b.board.z)
    assert all(sorted(r.order) == list(range(ens.m)) for r in a.history)


def test_worker_threads_do_not_change_results():
    training = TrainingSet(np.random.default_rng(0).normal(size=(12, 2)), np.random.default_rng(1).normal(size=12))
    ens = Ensemble(12, ((0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 10, 11), (2, 5, 8, 11)))
    k = Kernel.gaussian()
    base = TrainConfig([0.3] * 5, max_cycles=30, schedule="colored_parallel")
    threaded = TrainConfig([0.3] * 5, max_cycles=30, schedule="colored_parallel", max_workers=4)
    assert np.array_equal(train(training, ens, k, base).board.z, train(training, ens, k, threaded).board.z)


def test_coloring_examples():
    t = TrainingSet(np.zeros((6, 1)), np.zeros(6))
    assert conflict_coloring(make_centralized(4, t)) == [[0], [1], [2], [3]]
    assert conflict_coloring(Ensemble(6, ((0, 1), (2, 3), (4, 5)))) == [[0, 1, 2]]


@pytest.mark.parametrize("seed", range(10))
def test_coloring_groups_are_disjoint(seed):
    training, ens, _, _ = overlapping_instance(seed, size=6)
    groups = conflict_coloring(ens)
    assert sorted(i for g in groups for i in g) == list(range(ens.m))
    for g in groups:
        for i, k in itertools.combinations(g, 2):
            assert not set(ens[i]) & set(ens[k])


def test_within_color_commutation_is_bit_exact():
    rng = np.random.default_rng(3)
    training = TrainingSet(rng.normal(size=(15, 2)), rng.normal(size=15))
    ens = Ensemble(15, ((0, 1, 2, 3), (4, 5, 6), (7, 8, 9, 10), (11, 12, 13, 14), (0, 4, 7, 11)))
    k = Kernel.gaussian(0.5)
    group = conflict_coloring(ens)[0]
    assert len(group) == 4
    board = train(training, ens, k, TrainConfig([0.2] * 5, max_cycles=3)).board
    fs = [KernelExpansion.zero(k)] * 5
    results = {i: local_update(fs[i], ens[i], board, training, k, 0.2) for i in group}
    boards = []
    for order in itertools.permutations(group):
        b = board
        for i in order:
            b = apply_update(b, results[i])
        boards.append(b.z)
    assert all(np.array_equal(boards[0], z) for z in boards)


def test_config_validation():
    with pytest.raises(InputError):
        TrainConfig([0.1, 0.0])
    with pytest.raises(InputError):
        TrainConfig([0.1], max_cycles=0)
    with pytest.raises(InputError):
        TrainConfig([0.1], schedule="round_robin")
    training, ens, k, _ = overlapping_instance(0)
    with pytest.raises(InputError):
        train(training, ens, k, TrainConfig([0.2, 0.2]))
