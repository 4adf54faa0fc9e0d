import numpy as np
import pytest

from collabkrr.ensemble import TrainingSet, init_board, make_centralized
from collabkrr.errors import InputError
from collabkrr.kernels import Kernel, KernelExpansion, eval_expansion_many, rkhs_norm_sq
from collabkrr.oracle import (
    centralized_objective,
    feasibility_residual,
    feasible_directions,
    perturb,
    relaxed_objective,
    solve_centralized,
    solve_relaxed,
    system_size,
    verify_against_trainer,
)
from collabkrr.trainer import TrainConfig, TrainState, train

from helpers import overlapping_instance, public_private_instance


def values(fs, training):
    X = training.points
    return np.array([eval_expansion_many(f, X, X) for f in fs])


def test_centralized_single_point():
    t = TrainingSet([[1.0]], [1.0])
    f = solve_centralized(t, Kernel.linear(), 1.0)
    assert f.coefficients[0] == pytest.approx(0.5, abs=1e-15)
    assert eval_expansion_many(f, t.points, t.points)[0] == pytest.approx(0.5, abs=1e-15)


def test_centralized_heavy_regularization_shrinks():
    rng = np.random.default_rng(0)
    t = TrainingSet(rng.uniform(-1, 1, size=(10, 2)), rng.uniform(-1, 1, size=10))
    f = solve_centralized(t, Kernel.gaussian(), 1e8)
    assert np.max(np.abs(eval_expansion_many(f, t.points, t.points))) <= 1e-6


def test_centralized_rejects_nonpositive_lambda():
    t = TrainingSet([[1.0]], [1.0])
    with pytest.raises(InputError):
        solve_centralized(t, Kernel.linear(), 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_centralized_perturbation_optimality(seed):
    rng = np.random.default_rng(seed)
    t = TrainingSet(rng.uniform(-1, 1, size=(5, 2)), rng.normal(size=5))
    k = Kernel.gaussian(0.8)
    f = solve_centralized(t, k, 0.3)
    best = centralized_objective(f, t, 0.3)
    for j in range(5):
        for eps in (1e-4, -1e-4):
            assert best <= centralized_objective(f + KernelExpansion([j], [eps], k), t, 0.3)


@pytest.mark.parametrize("m", [2, 4])
def test_relaxed_on_centralized_ensemble_is_ridge(m):
    training, _, k, _ = overlapping_instance(0, n=30)
    lam = 1.0
    sol = solve_relaxed(training, make_centralized(m, training), k, [lam / m] * m)
    f_c = eval_expansion_many(solve_centralized(training, k, lam), training.points, training.points)
    v = values(sol.f_stars, training)
    assert np.max(np.abs(v - f_c)) <= 1e-8


def test_relaxed_single_agent_is_ridge():
    training, _, k, _ = overlapping_instance(1, n=15)
    sol = solve_relaxed(training, make_centralized(1, training), k, [0.4])
    f_c = solve_centralized(training, k, 0.4)
    np.testing.assert_allclose(values(sol.f_stars, training)[0], values([f_c], training)[0], atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_relaxed_feasible_and_beats_feasible_perturbations(seed):
    training, ens, k, _ = overlapping_instance(seed, n=20, m=3, size=9)
    lambdas = [0.2, 0.5, 0.1]
    sol = solve_relaxed(training, ens, k, lambdas)
    assert sol.kkt_residual <= 1e-8
    assert feasibility_residual(sol, training, ens) <= 1e-8
    best = relaxed_objective(sol.z_star, sol.f_stars, training, lambdas)
    basis = feasible_directions(training, ens, k)
    rng = np.random.default_rng(seed)
    for _ in range(50):
        direction = basis @ rng.normal(size=basis.shape[1])
        direction *= 1e-3 / np.linalg.norm(direction)
        z, fs = perturb(sol, direction, ens)
        assert best <= relaxed_objective(z, fs, training, lambdas)


def test_feasible_directions_stay_feasible():
    training, ens, k, lambdas = overlapping_instance(2, n=20, m=3, size=9)
    sol = solve_relaxed(training, ens, k, lambdas)
    basis = feasible_directions(training, ens, k)
    z, fs = perturb(sol, basis @ np.ones(basis.shape[1]), ens)
    for f, ids in zip(fs, ens.assignments):
        np.testing.assert_allclose(eval_expansion_many(f, training.points, training.points[list(ids)]),
                                   z[list(ids)], atol=1e-9)


def test_row_order_does_not_change_values():
    # linear kernel with 8 examples per agent in R^3: every G_i is singular
    training, ens, k, lambdas = public_private_instance(0)
    a = solve_relaxed(training, ens, k, lambdas)
    perm = np.random.default_rng(0).permutation(system_size(ens))
    b = solve_relaxed(training, ens, k, lambdas, row_order=perm)
    np.testing.assert_allclose(a.z_star, b.z_star, atol=1e-8)
    np.testing.assert_allclose(values(a.f_stars, training), values(b.f_stars, training), atol=1e-8)


def test_relaxed_errors():
    training, ens, k, lambdas = overlapping_instance(0)
    with pytest.raises(InputError):
        solve_relaxed(training, ens, k, [0.2, 0.2, 0.2, 0.2, -1.0])
    with pytest.raises(InputError):
        solve_relaxed(training, ens, k, [0.2])
    with pytest.raises(InputError):
        solve_relaxed(training, ens, k, lambdas, row_order=[0, 0, 1])


def test_verify_against_trainer():
    training, ens, k, lambdas = overlapping_instance(3)
    sol = solve_relaxed(training, ens, k, lambdas)
    state = train(training, ens, k, TrainConfig(lambdas, max_cycles=20_000, stop_tol=1e-12))
    report = verify_against_trainer(sol, state, training)
    assert report.max_function_gap <= 1e-6
    assert report.board_gap <= 1e-6

    same = TrainState(list(sol.f_stars), init_board(training))
    same.board.z[:] = sol.z_star
    exact = verify_against_trainer(sol, same, training)
    assert exact.max_function_gap == 0.0 and exact.board_gap == 0.0

    zero = TrainState([KernelExpansion.zero(k) for _ in range(ens.m)], init_board(training))
    report0 = verify_against_trainer(sol, zero, training)
    assert report0.max_function_gap == np.max(np.abs(values(sol.f_stars, training)))


def test_rkhs_norms_of_relaxed_solution_are_unique():
    training, ens, k, lambdas = public_private_instance(1)
    a = solve_relaxed(training, ens, k, lambdas)
    b = solve_relaxed(training, ens, k, lambdas, row_order=np.random.default_rng(5).permutation(system_size(ens)))
    for fa, fb in zip(a.f_stars, b.f_stars):
        assert rkhs_norm_sq(fa, training.points) == pytest.approx(rkhs_norm_sq(fb, training.points), rel=1e-7)
