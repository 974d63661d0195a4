"""Identification: target recovery, ridge fit, evaluation, sweeps."""

import numpy as np
import pytest

from coupled_do.basis import BasisConfig
from coupled_do.errors import ConfigError, DataError
from coupled_do.learner import (SweepConfig, TrajectoryDataset, evaluate, fit_rls,
                                rng_stream, split_dataset, sweep, synthesize_dataset,
                                targets_from_trajectory)
from coupled_do.oracles import gradient_descent_fit, projection_oracle
from coupled_do.sim import disturbance, rk4_step


def make_inspan_data(rng, cfg, theta, n=500, t_lo=-1.0, t_hi=1.0):
    x = rng.uniform(-1, 1, (n, cfg.n))
    t = rng.uniform(t_lo, t_hi, n)
    delta = cfg.design_rows(x, t) @ theta.T
    return TrajectoryDataset(t=t, x=x, u=np.zeros((n, 1)), delta=delta)


class TestDataset:
    def test_dimension_checks(self):
        with pytest.raises(DataError):
            TrajectoryDataset(t=[0, 1], x=[[1.0]], u=[[0.0], [0.0]])
        with pytest.raises(DataError):
            TrajectoryDataset(t=[0, 1], x=[[1.0], [2.0]], u=[[0.0], [0.0]],
                              delta=[[1.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            TrajectoryDataset(t=[0, 1], x=[[np.nan], [1.0]], u=[[0.0], [0.0]])

    def test_split_partition(self):
        rng = np.random.default_rng(0)
        data = TrajectoryDataset(t=np.arange(10.0), x=np.arange(10.0)[:, None],
                                 u=np.zeros((10, 1)))
        train, test = split_dataset(data, 0.5, rng)
        assert len(train) == len(test) == 5
        assert sorted(np.concatenate([train.x[:, 0], test.x[:, 0]])) == list(range(10))


class TestTargetsFromTrajectory:
    f_x = staticmethod(lambda x: np.zeros(1))
    f_u = staticmethod(lambda x: np.zeros((1, 1)))

    def test_constant_state_gives_zero(self):
        n = 41
        traj = TrajectoryDataset(t=np.linspace(0, 4, n), x=np.full((n, 1), 2.5),
                                 u=np.zeros((n, 1)))
        out = targets_from_trajectory(traj, self.f_x, self.f_u)
        assert np.abs(out.delta).max() < 1e-12
        assert len(out) == n - 8        # half-window dropped on both ends

    def test_exact_on_matching_degree(self):
        t = np.linspace(0, 2, 81)
        traj = TrajectoryDataset(t=t, x=(t**2)[:, None], u=np.zeros((81, 1)))
        out = targets_from_trajectory(traj, self.f_x, self.f_u, window=9, fit_order=2)
        assert np.abs(out.delta[:, 0] - 2 * out.t).max() < 1e-10

    def test_nonuniform_timestamps(self):
        rng = np.random.default_rng(5)
        t = np.sort(rng.uniform(0, 2, 101))
        traj = TrajectoryDataset(t=t, x=(t**3)[:, None], u=np.zeros((101, 1)))
        out = targets_from_trajectory(traj, self.f_x, self.f_u, window=9, fit_order=3)
        assert np.abs(out.delta[:, 0] - 3 * out.t**2).max() < 1e-8

    def test_recovers_plant_disturbance(self):
        # drive the point mass open loop and rebuild the disturbance from samples
        fn = disturbance("quad_drag_drift")
        dt, n = 1e-3, 4001
        state = np.array([0.0, 0.0])
        ts = dt * np.arange(n)
        xs = np.empty((n, 1))
        for k in range(n):
            xs[k, 0] = state[1]
            state = rk4_step(lambda tt, s: np.array([s[1], fn(s[1], tt)]), state, ts[k], dt)
        traj = TrajectoryDataset(t=ts, x=xs, u=np.zeros((n, 1)))
        out = targets_from_trajectory(traj, self.f_x, lambda x: np.ones((1, 1)))
        true = fn(out.x[:, 0], out.t)
        assert np.mean(np.abs(out.delta[:, 0] - true)) < 1e-6

    def test_too_short_rejected(self):
        traj = TrajectoryDataset(t=np.arange(5.0), x=np.zeros((5, 1)), u=np.zeros((5, 1)))
        with pytest.raises(DataError):
            targets_from_trajectory(traj, self.f_x, self.f_u, window=9)

    def test_bad_window_rejected(self):
        traj = TrajectoryDataset(t=np.arange(20.0), x=np.zeros((20, 1)), u=np.zeros((20, 1)))
        with pytest.raises(ConfigError):
            targets_from_trajectory(traj, self.f_x, self.f_u, window=8)
        with pytest.raises(ConfigError):
            targets_from_trajectory(traj, self.f_x, self.f_u, window=3, fit_order=3)

    def test_unordered_timestamps_rejected(self):
        traj = TrajectoryDataset(t=np.array([0.0, 2.0, 1.0] + list(range(3, 12))),
                                 x=np.zeros((12, 1)), u=np.zeros((12, 1)))
        with pytest.raises(DataError):
            targets_from_trajectory(traj, self.f_x, self.f_u)


class TestFitRls:
    def test_empty_rejected(self):
        cfg = BasisConfig(p=1, n=1)
        with pytest.raises(DataError):
            fit_rls(TrajectoryDataset(t=np.empty(0), x=np.empty((0, 1)),
                                      u=np.empty((0, 1)), delta=np.empty((0, 1))),
                    cfg, 0.01)

    def test_missing_targets_rejected(self):
        cfg = BasisConfig(p=1, n=1)
        data = TrajectoryDataset(t=[0.0], x=[[0.0]], u=[[0.0]])
        with pytest.raises(DataError):
            fit_rls(data, cfg, 0.01)

    def test_nonpositive_ridge_rejected(self):
        cfg = BasisConfig(p=1, n=1)
        data = TrajectoryDataset(t=[0.0], x=[[0.0]], u=[[0.0]], delta=[[1.0]])
        with pytest.raises(ConfigError):
            fit_rls(data, cfg, 0.0)

    def test_zero_targets_give_zero_theta(self):
        rng = np.random.default_rng(2)
        cfg = BasisConfig(p=2, n=1)
        data = make_inspan_data(rng, cfg, np.zeros((1, cfg.s1)))
        model, _ = fit_rls(data, cfg, 0.01)
        assert np.abs(model.theta).max() == 0.0

    def test_inspan_recovery(self):
        rng = np.random.default_rng(3)
        cfg = BasisConfig(p=2, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=500)
        model, report = fit_rls(data, cfg, 1e-9, theta_true=theta)
        assert np.linalg.norm(model.theta - theta) < 1e-6
        assert report.theta_error < 1e-12

    def test_optimality_gradient(self):
        rng = np.random.default_rng(4)
        cfg = BasisConfig(p=2, n=2)
        theta = rng.standard_normal((2, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=400)
        noisy = TrajectoryDataset(t=data.t, x=data.x, u=data.u,
                                  delta=data.delta + rng.normal(0, 0.1, data.delta.shape))
        delta_reg = 0.5
        model, _ = fit_rls(noisy, cfg, delta_reg)
        feats = cfg.design_rows(noisy.x, noisy.t)
        grad = (noisy.delta - feats @ model.theta.T).T @ feats - delta_reg * model.theta
        assert np.linalg.norm(grad) / np.linalg.norm(model.theta) < 1e-8

    def test_matches_gradient_descent(self):
        rng = np.random.default_rng(5)
        cfg = BasisConfig(p=1, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=60)
        noisy = TrajectoryDataset(t=data.t, x=data.x, u=data.u,
                                  delta=data.delta + rng.normal(0, 0.2, data.delta.shape))
        model, _ = fit_rls(noisy, cfg, 0.1)
        gd = gradient_descent_fit(cfg.design_rows(noisy.x, noisy.t), noisy.delta, 0.1)
        assert np.linalg.norm(model.theta - gd) < 1e-5

    def test_shrinkage_monotone(self):
        rng = np.random.default_rng(6)
        cfg = BasisConfig(p=2, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=300)
        norms = [np.linalg.norm(fit_rls(data, cfg, d)[0].theta)
                 for d in (1e-6, 1e-3, 1e-1, 10.0, 1e4)]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        cfg = BasisConfig(p=2, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=200)
        shuffled = data.subset(rng.permutation(len(data)))
        a = fit_rls(data, cfg, 0.01)[0].theta
        b = fit_rls(shuffled, cfg, 0.01)[0].theta
        assert np.abs(a - b).max() < 1e-12

    def test_benchmark_projection_recovery(self):
        # raw-variable fit on the benchmark disturbance reproduces the
        # dense-grid projection, not the recorded reference vector
        fn = disturbance("quad_drag_drift")
        rng = rng_stream(42, "dataset", 0)
        data = synthesize_dataset(fn, (-10, 10), (0, 100), 10000, rng)
        cfg = BasisConfig(p=2, n=1, x_box=(-10, 10), t_box=(0, 100), normalize=False)
        model, report = fit_rls(data, cfg, 0.01)
        oracle = projection_oracle(fn, 2, (-10, 10), (0, 100))
        assert np.sum((model.theta[0] - oracle) ** 2) < 1e-4
        assert report.gram_condition < 1e6     # equilibrated condition

    def test_huge_ridge_shrinks_to_zero(self):
        rng = np.random.default_rng(8)
        cfg = BasisConfig(p=2, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=200)
        model, report = fit_rls(data, cfg, 1e9)
        mean_norm = np.mean(np.linalg.norm(data.delta, axis=1))
        assert report.test_mae == pytest.approx(mean_norm, rel=1e-3)


class TestEvaluate:
    def test_self_consistency(self):
        rng = np.random.default_rng(9)
        cfg = BasisConfig(p=2, n=1)
        theta = rng.standard_normal((1, cfg.s1))
        data = make_inspan_data(rng, cfg, theta, n=300)
        model, _ = fit_rls(data, cfg, 1e-9)
        assert evaluate(model, data).test_mae < 1e-8

    def test_zero_model_constant_targets(self):
        cfg = BasisConfig(p=1, n=2)
        from coupled_do.learner import SeparatedModel
        model = SeparatedModel(theta=np.zeros((2, cfg.s1)), config=cfg)
        c = np.array([3.0, 4.0])
        data = TrajectoryDataset(t=np.zeros(10), x=np.zeros((10, 2)),
                                 u=np.zeros((10, 1)), delta=np.tile(c, (10, 1)))
        assert evaluate(model, data).test_mae == pytest.approx(5.0)

    def test_empty_rejected(self):
        cfg = BasisConfig(p=1, n=1)
        from coupled_do.learner import SeparatedModel
        model = SeparatedModel(theta=np.zeros((1, cfg.s1)), config=cfg)
        with pytest.raises(DataError):
            evaluate(model, TrajectoryDataset(t=np.empty(0), x=np.empty((0, 1)),
                                              u=np.empty((0, 1)), delta=np.empty((0, 1))))


class TestSweep:
    def test_inspan_cell_exact(self):
        base = SweepConfig(disturbance=disturbance("cubic_drift"),
                           n_samples=4000, delta=1e-9, seed=1)
        cells = sweep(base, [3], [0.0], max_workers=1)
        assert cells[0].report.test_mae < 1e-6

    def test_noise_trend(self):
        # mean test error over seeds grows with the noise level
        fn = disturbance("cubic_drift")
        means = []
        for sigma2 in (0.01, 0.25):
            maes = []
            for seed in range(5):
                base = SweepConfig(disturbance=fn, n_samples=2000, seed=seed)
                maes.append(sweep(base, [3], [sigma2], max_workers=1)[0].report.test_mae)
            means.append(np.mean(maes))
        assert means[0] < means[1]

    def test_deterministic_and_order_independent(self):
        base = SweepConfig(disturbance=disturbance("sine_product"), n_samples=1000, seed=3)
        serial = sweep(base, [1, 2], [0.0, 0.05], max_workers=1)
        threaded = sweep(base, [1, 2], [0.0, 0.05], max_workers=4)
        for a, b in zip(serial, threaded):
            assert a.report.test_mae == b.report.test_mae

    def test_failed_cell_reported_not_raised(self):
        def bad(x, t):
            return np.full_like(np.asarray(x, dtype=float), np.nan)
        base = SweepConfig(disturbance=bad, n_samples=100, seed=0)
        cells = sweep(base, [1], [0.0], max_workers=1)
        assert cells[0].report is None
        assert "DataError" in cells[0].error

    def test_empty_grid_rejected(self):
        base = SweepConfig(disturbance=disturbance("cubic_drift"))
        with pytest.raises(ConfigError):
            sweep(base, [], [0.0])
