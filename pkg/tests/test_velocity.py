import numpy as np
import pytest

from cfisac.velocity import (EstimatorConfig, SearchBox, componentwise_error,
                             coarse_grid_init, estimate_velocity,
                             gradient_refine, grid_search, objective,
                             pso_search, relative_component_error)

from conftest import build_trial, quiet_config

BOX = SearchBox(150.0)
CFG = EstimatorConfig()


def noiseless(seed, velocity=None):
    cfg = quiet_config(noise_offset_db=-120.0)
    return build_trial(cfg, seed=seed, velocity=velocity)


class TestObjective:
    def test_noiseless_maximum_at_truth(self, noiseless_trial):
        ctx = noiseless_trial.context
        v_true = noiseless_trial.scene.target.velocity
        best = objective(v_true, ctx)
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.uniform(-150, 150, 3)
            assert objective(v, ctx) <= best * (1 + 1e-9)

    def test_h0_zero_velocity_is_doppler_free_statistic(self):
        data = build_trial(seed=7, present=False)
        ctx = data.context
        from cfisac.sensing import glrt_statistic
        stacks = [ctx.response_stack(m, np.zeros(3)) for m in range(ctx.n_raps)]
        assert objective(np.zeros(3), ctx) == pytest.approx(
            glrt_statistic(ctx.observations, stacks), rel=1e-10)

    def test_numerical_continuity(self, default_trial):
        ctx = default_trial.context
        rng = np.random.default_rng(2)
        scale = objective(default_trial.scene.target.velocity, ctx)
        for _ in range(20):
            v = rng.uniform(-140, 140, 3)
            f0 = objective(v, ctx)
            f1 = objective(v + np.array([1.0, 0, 0]), ctx)
            # bounded variation for a 1 m/s step
            assert abs(f1 - f0) < 0.5 * scale


class TestGridSearch:
    def test_exact_recovery_on_lattice(self, noiseless_trial):
        est = grid_search(noiseless_trial.context, BOX, 21)
        np.testing.assert_array_equal(est.velocity,
                                      noiseless_trial.scene.target.velocity)

    def test_evaluation_count_contract(self, default_trial):
        est = grid_search(default_trial.context, BOX, 5)
        assert est.evaluations == 5 ** 3 + 1

    def test_order_independence(self, default_trial):
        ctx = default_trial.context
        est = grid_search(ctx, BOX, 11)
        axis = np.linspace(-150, 150, 11)
        xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
        cands = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
        cands = np.vstack([cands, np.zeros(3)])
        rng = np.random.default_rng(3)
        perm = rng.permutation(len(cands))
        vals = [objective(cands[i], ctx) for i in perm]
        best = cands[perm[int(np.argmax(vals))]]
        np.testing.assert_allclose(est.velocity, best)

    def test_too_few_points_rejected(self, default_trial):
        with pytest.raises(ValueError):
            grid_search(default_trial.context, BOX, 1)


class TestCoarseGridInit:
    def test_recovers_lattice_point(self):
        # coarse 5-point lattice spans {-150, -75, 0, 75, 150}
        trial = noiseless(33, velocity=np.array([75.0, -150.0, 0.0]))
        init, _, _ = coarse_grid_init(trial.context, BOX, 5)
        np.testing.assert_array_equal(init, [75.0, -150.0, 0.0])

    def test_inside_box(self, default_trial):
        init, _, _ = coarse_grid_init(default_trial.context, BOX, 5)
        assert BOX.contains(init)

    def test_dominates_zero(self, default_trial):
        ctx = default_trial.context
        _, stat, _ = coarse_grid_init(ctx, BOX, 5)
        assert stat >= objective(np.zeros(3), ctx) * (1 - 1e-12)


class TestGradientRefine:
    def test_stationary_at_truth(self, noiseless_trial):
        ctx = noiseless_trial.context
        v_true = noiseless_trial.scene.target.velocity
        est = gradient_refine(ctx, BOX, v_true, CFG)
        np.testing.assert_allclose(est.velocity, v_true, atol=1.0)

    def test_statistic_not_below_init(self, default_trial):
        ctx = default_trial.context
        rng = np.random.default_rng(5)
        for _ in range(5):
            init = rng.uniform(-150, 150, 3)
            est = gradient_refine(ctx, BOX, init, CFG)
            assert est.statistic >= objective(init, ctx) * (1 - 1e-12)
            assert est.statistic >= objective(np.zeros(3), ctx) * (1 - 1e-12)
            assert BOX.contains(est.velocity)

    def test_basin_of_attraction(self):
        # noiseless: inits within 20 m/s of the truth converge to 1 m/s
        hits = 0
        total = 50
        rng = np.random.default_rng(6)
        for s in range(total):
            trial = noiseless(400 + s)
            v_true = trial.scene.target.velocity
            offset = rng.normal(size=3)
            offset *= rng.uniform(0, 20) / np.linalg.norm(offset)
            init = BOX.clip(v_true + offset)
            cfg = EstimatorConfig(grad_tol=1e-7, grad_max_iters=150)
            est = gradient_refine(trial.context, BOX, init, cfg)
            if np.all(np.abs(est.velocity - v_true) <= 1.0):
                hits += 1
        assert hits >= 0.9 * total


class TestPSO:
    def test_fine_grid_oracle(self, noiseless_trial):
        ctx = noiseless_trial.context
        fine = grid_search(ctx, BOX, 41)
        wins = 0
        for s in range(100):
            est = pso_search(ctx, BOX, "random", CFG, np.random.default_rng(s))
            if est.statistic >= 0.99 * fine.statistic:
                wins += 1
        assert wins >= 90

    def test_deterministic_under_seed(self, default_trial):
        ctx = default_trial.context
        e1 = pso_search(ctx, BOX, "random", CFG, np.random.default_rng(17))
        e2 = pso_search(ctx, BOX, "random", CFG, np.random.default_rng(17))
        np.testing.assert_array_equal(e1.velocity, e2.velocity)
        assert e1.statistic == e2.statistic

    def test_dominates_zero_seed(self, default_trial):
        ctx = default_trial.context
        est = pso_search(ctx, BOX, "random", CFG, np.random.default_rng(19))
        assert est.statistic >= objective(np.zeros(3), ctx) * (1 - 1e-12)

    def test_coarse_grid_mode_uses_seed(self, default_trial):
        ctx = default_trial.context
        est = pso_search(ctx, BOX, "coarse_grid", CFG, np.random.default_rng(23))
        init, stat, _ = coarse_grid_init(ctx, BOX, CFG.coarse_points)
        assert est.statistic >= stat * (1 - 1e-12)

    def test_bad_mode_rejected(self, default_trial):
        with pytest.raises(ValueError):
            pso_search(default_trial.context, BOX, "warm", CFG,
                       np.random.default_rng(1))

    def test_initialization_robustness(self):
        # RI and CGI agree in final statistic within 1% on >= 90% of
        # noiseless runs
        agree = 0
        total = 20
        for s in range(total):
            trial = noiseless(600 + s)
            ctx = trial.context
            ri = pso_search(ctx, BOX, "random", CFG, np.random.default_rng(s))
            cgi = pso_search(ctx, BOX, "coarse_grid", CFG,
                             np.random.default_rng(s + 1000))
            if abs(ri.statistic - cgi.statistic) <= 0.01 * max(ri.statistic,
                                                               cgi.statistic):
                agree += 1
        assert agree >= 0.9 * total


class TestDispatchAndCounts:
    def test_evaluation_count_ordering(self, default_trial):
        ctx = default_trial.context
        rng = np.random.default_rng(29)
        grid = estimate_velocity("grid", ctx, BOX, CFG, rng)
        pso = estimate_velocity("pso_ri", ctx, BOX, CFG, rng)
        grad = estimate_velocity("grad_ri", ctx, BOX, CFG, rng)
        assert grid.evaluations > pso.evaluations > grad.evaluations

    def test_unknown_method_rejected(self, default_trial):
        with pytest.raises(ValueError):
            estimate_velocity("newton", default_trial.context, BOX, CFG,
                              np.random.default_rng(1))

    def test_all_methods_return_in_box(self, default_trial):
        ctx = default_trial.context
        for m in ("grid", "grad_ri", "grad_cgi", "pso_ri", "pso_cgi"):
            est = estimate_velocity(m, ctx, BOX, EstimatorConfig(grid_points=5),
                                    np.random.default_rng(31))
            assert BOX.contains(est.velocity)
            assert est.statistic >= objective(np.zeros(3), ctx) * (1 - 1e-12)


class TestErrors:
    def test_exact_estimate_zero_error(self):
        v = np.array([10.0, -5.0, 2.0])
        np.testing.assert_array_equal(relative_component_error(v, v), 0.0)

    def test_zero_estimate_unit_error(self):
        v_true = np.array([120.0, 0.0, 0.0])
        err = relative_component_error(np.zeros(3), v_true)
        np.testing.assert_allclose(err, [1.0, 0.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(37)
        v_hat = rng.normal(size=3)
        v_true = rng.normal(size=3)
        e1 = relative_component_error(v_hat, v_true)
        e2 = relative_component_error(3.0 * v_hat, 3.0 * v_true)
        np.testing.assert_allclose(e1, e2, rtol=1e-12)

    def test_zero_speed_rejected(self):
        with pytest.raises(ValueError):
            relative_component_error(np.ones(3), np.zeros(3))

    def test_componentwise_error_infinite_when_component_zero(self):
        err = componentwise_error(np.array([1.0, 1.0, 1.0]),
                                  np.array([2.0, 0.0, 1.0]))
        assert err[0] == pytest.approx(0.5)
        assert np.isinf(err[1])
        assert err[2] == pytest.approx(0.0)
