"""Dataset handling and ridge identification of separable disturbance models.

The identification problem is

    minimize over Theta   1/2 [ sum_n ||delta_n - Theta B(x_n) xi(t_n)||^2
                                + delta * ||Theta||_F^2 ]

whose closed-form solution

    Theta* = (sum_n delta_n xi_n^T B_n^T) (sum_n B_n xi_n xi_n^T B_n^T + delta I)^{-1}

is computed here through a Cholesky solve of the diagonally equilibrated
regularized Gram matrix, never an explicit inverse.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .basis import BasisConfig, structure_matrices
from .errors import ConfigError, DataError, NumericalError


def rng_stream(seed: int, *key) -> np.random.Generator:
    """Derive an independent generator from a top-level seed and a key.

    Key parts may be ints or short strings; strings are folded in as
    their byte content, so streams are stable across runs and platforms.
    """
    words = [int(seed)]
    for part in key:
        if isinstance(part, str):
            words.append(int.from_bytes(part.encode(), "little") % (2**63))
        else:
            words.append(int(part))
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass
class TrajectoryDataset:
    """Time-stamped samples of (t, x, u) with optional disturbance targets.

    Attributes
    ----------
    t : ndarray, shape (N,)
        Sample times.  Strictly increasing when the records form a
        trajectory (required by :func:`targets_from_trajectory`);
        scrambled training sets carry arbitrary order.
    x : ndarray, shape (N, n)
    u : ndarray, shape (N, o)
    delta : ndarray, shape (N, n), optional
        Disturbance targets for learning and evaluation.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    delta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.u.ndim == 1:
            self.u = self.u[:, None]
        n = len(self.t)
        if self.x.shape[0] != n or self.u.shape[0] != n:
            raise DataError(f"record counts differ: t={n}, x={self.x.shape[0]}, u={self.u.shape[0]}")
        if self.delta is not None:
            self.delta = np.asarray(self.delta, dtype=float)
            if self.delta.ndim == 1:
                self.delta = self.delta[:, None]
            if self.delta.shape != self.x.shape:
                raise DataError(f"delta shape {self.delta.shape} must match x shape {self.x.shape}")
        for name, arr in (("t", self.t), ("x", self.x), ("u", self.u), ("delta", self.delta)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite values in {name}")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def o(self) -> int:
        return self.u.shape[1]

    def subset(self, idx) -> "TrajectoryDataset":
        return TrajectoryDataset(
            t=self.t[idx], x=self.x[idx], u=self.u[idx],
            delta=None if self.delta is None else self.delta[idx])


def split_dataset(data: TrajectoryDataset, train_fraction: float,
                  rng: np.random.Generator) -> tuple[TrajectoryDataset, TrajectoryDataset]:
    """Global shuffle followed by a train/test split."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    idx = rng.permutation(len(data))
    cut = int(round(train_fraction * len(data)))
    return data.subset(idx[:cut]), data.subset(idx[cut:])


@dataclass
class SeparatedModel:
    """Identified coefficients Theta with their basis configuration.

    Caches the structure matrices D (Chebyshev coefficients over
    monomials) and A (exosystem companion), which downstream observers
    need at every step.
    """

    theta: np.ndarray
    config: BasisConfig
    D: np.ndarray = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if self.theta.shape[1] != self.config.s1:
            raise ConfigError(
                f"theta has {self.theta.shape[1]} columns, basis requires s1={self.config.s1}")
        self.D, self.A = structure_matrices(self.config.s2)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def predict(self, x, t) -> np.ndarray:
        """Evaluate Theta B(x) xi(t) at a single sample."""
        cfg = self.config
        row = cfg.design_rows(np.atleast_1d(x)[None, :], np.atleast_1d(t)[None, :])
        return (row @ self.theta.T)[0]

    def predict_batch(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Vectorized prediction, shape (N, n)."""
        return self.config.design_rows(x, t) @ self.theta.T

    def output_map(self, x) -> np.ndarray:
        """C(x) = Theta B(x) D, the observer output matrix, shape (n, s2)."""
        cfg = self.config
        pi = cfg.pi_vector(np.atleast_1d(x))
        theta_b = self.theta.reshape(self.n, cfg.s2, cfg.state_block) @ pi
        return theta_b @ self.D


@dataclass
class FitReport:
    """Diagnostics of one identification run."""

    train_mae: float
    test_mae: float
    gram_condition: float
    residual_sup: float
    theta_error: Optional[float] = None

    def __post_init__(self):
        for name in ("train_mae", "test_mae", "gram_condition", "residual_sup"):
            v = getattr(self, name)
            if v < 0 or not np.isfinite(v):
                raise NumericalError(f"{name} must be finite and non-negative, got {v}")


def _poly_derivative_window(tw: np.ndarray, xw: np.ndarray, center: int, order: int) -> np.ndarray:
    """Derivative at the window center from a least-squares polynomial fit."""
    tau = tw - tw[center]
    vand = np.vander(tau, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vand, xw, rcond=None)
    return coef[1]


def targets_from_trajectory(traj: TrajectoryDataset, f_x: Callable, f_u: Callable,
                            window: int = 9, fit_order: int = 3) -> TrajectoryDataset:
    """Recover disturbance targets from a sampled trajectory.

    For each interior sample, the state derivative is taken at the
    center of a sliding least-squares polynomial fit over ``window``
    samples, and the target is  delta = dx/dt - f_x(x) - f_u(x) u.
    Samples without a full window are dropped.

    Parameters
    ----------
    traj : TrajectoryDataset
        Strictly time-ordered records.
    f_x, f_u : callable
        Plant mappings; f_x(x) -> (n,), f_u(x) -> (n, o).
    window : int
        Sliding window length, odd and larger than ``fit_order``.
    fit_order : int
        Polynomial degree of the local fit, >= 1.
    """
    if window % 2 == 0 or window <= fit_order or fit_order < 1:
        raise ConfigError(f"need odd window > fit_order >= 1, got window={window}, fit_order={fit_order}")
    if len(traj) < window:
        raise DataError(f"trajectory has {len(traj)} samples, window needs {window}")
    if np.any(np.diff(traj.t) <= 0):
        raise DataError("trajectory timestamps must be strictly increasing")

    half = window // 2
    keep = np.arange(half, len(traj) - half)
    deriv = np.empty((len(keep), traj.n))

    # uniform grids share one fit operator; nonuniform grids refit per window
    dt = np.diff(traj.t)
    uniform = np.allclose(dt, dt[0], rtol=1e-9, atol=0.0)
    if uniform:
        tau = (np.arange(window) - half) * dt[0]
        vand = np.vander(tau, fit_order + 1, increasing=True)
        op = np.linalg.pinv(vand)[1]          # row extracting the slope at the center
        for j, i in enumerate(keep):
            deriv[j] = op @ traj.x[i - half:i + half + 1]
    else:
        for j, i in enumerate(keep):
            sl = slice(i - half, i + half + 1)
            deriv[j] = _poly_derivative_window(traj.t[sl], traj.x[sl], half, fit_order)

    delta = np.empty_like(deriv)
    for j, i in enumerate(keep):
        delta[j] = deriv[j] - np.asarray(f_x(traj.x[i])) - np.asarray(f_u(traj.x[i])) @ traj.u[i]
    return TrajectoryDataset(t=traj.t[keep], x=traj.x[keep], u=traj.u[keep], delta=delta)


def fit_rls(data: TrajectoryDataset, config: BasisConfig, delta: float,
            test: Optional[TrajectoryDataset] = None,
            theta_true: Optional[np.ndarray] = None) -> tuple[SeparatedModel, FitReport]:
    """Solve the regularized least-squares identification in closed form.

    Parameters
    ----------
    data : TrajectoryDataset
        Training records with disturbance targets.
    config : BasisConfig
        Basis shape; data dimensions must match.
    delta : float
        Ridge weight, > 0.
    test : TrajectoryDataset, optional
        Held-out records for the reported test error (training records
        are reused when absent).
    theta_true : ndarray, optional
        Reference coefficients; when given, the squared Frobenius error
        is recorded in the report.

    Returns
    -------
    (SeparatedModel, FitReport)
    """
    if delta <= 0:
        raise ConfigError(f"ridge weight must be > 0, got {delta}")
    if len(data) < 1:
        raise DataError("cannot fit on an empty dataset")
    if data.delta is None:
        raise DataError("training data carries no disturbance targets")
    if data.n != config.n:
        raise ConfigError(f"data has n={data.n}, basis expects n={config.n}")

    feats = config.design_rows(data.x, data.t)          # rows are B_n @ xi_n
    gram = feats.T @ feats + delta * np.eye(config.s1)
    rhs = feats.T @ data.delta                          # = (sum delta_n xi_n^T B_n^T)^T

    # symmetric diagonal equilibration keeps the Cholesky solve accurate
    # on raw (unnormalized) bases whose feature scales span many decades
    scale = 1.0 / np.sqrt(np.diag(gram))
    gram_eq = gram * scale[:, None] * scale[None, :]
    try:
        cho = scipy.linalg.cho_factor(gram_eq, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"regularized Gram is not positive definite: {exc}") from exc
    theta = (scale[:, None] * scipy.linalg.cho_solve(cho, scale[:, None] * rhs)).T
    cond = float(np.linalg.cond(gram_eq))

    model = SeparatedModel(theta=theta, config=config)
    train_resid = np.linalg.norm(data.delta - feats @ theta.T, axis=1)
    eval_data = test if test is not None else data
    test_report = evaluate(model, eval_data)
    report = FitReport(
        train_mae=float(train_resid.mean()),
        test_mae=test_report.test_mae,
        gram_condition=cond,
        residual_sup=test_report.residual_sup,
        theta_error=None if theta_true is None
        else float(np.sum((np.atleast_2d(theta_true) - theta) ** 2)),
    )
    return model, report


def evaluate(model: SeparatedModel, data: TrajectoryDataset) -> FitReport:
    """Mean and sup of ||delta_i - Theta B(x_i) xi(t_i)|| over a dataset."""
    if len(data) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    if data.delta is None:
        raise DataError("evaluation data carries no disturbance targets")
    resid = np.linalg.norm(data.delta - model.predict_batch(data.x, data.t), axis=1)
    mae = float(resid.mean())
    return FitReport(train_mae=mae, test_mae=mae,
                     gram_condition=1.0, residual_sup=float(resid.max()))


def synthesize_dataset(disturbance: Callable, x_box, t_box, n_samples: int,
                       rng: np.random.Generator, noise_std: float = 0.0) -> TrajectoryDataset:
    """Sample (x, t) uniformly over a box and record disturbance targets.

    ``disturbance`` is vectorized: fn(x, t) with x of shape (N,) or
    (N, n) returning (N,) or (N, n).  Measurement corruption during
    collection surfaces in the recorded targets: zero-mean Gaussian
    noise of standard deviation ``noise_std`` is added to delta.
    """
    if n_samples < 1:
        raise DataError(f"need at least one sample, got {n_samples}")
    x_box = np.atleast_2d(np.asarray(x_box, dtype=float))
    t_box = np.asarray(t_box, dtype=float).ravel()
    if np.any(x_box[:, 0] >= x_box[:, 1]) or t_box[0] >= t_box[1]:
        raise ConfigError("sampling boxes must have lo < hi")
    x = rng.uniform(x_box[:, 0], x_box[:, 1], size=(n_samples, x_box.shape[0]))
    t = rng.uniform(t_box[0], t_box[1], size=n_samples)
    delta = np.asarray(disturbance(x[:, 0] if x.shape[1] == 1 else x, t), dtype=float)
    if delta.ndim == 1:
        delta = delta[:, None]
    if noise_std > 0:
        delta = delta + rng.normal(0.0, noise_std, size=delta.shape)
    return TrajectoryDataset(t=t, x=x, u=np.zeros((n_samples, 1)), delta=delta)


@dataclass(frozen=True)
class SweepConfig:
    """Shared setup of a (p, noise variance) learning sweep."""

    disturbance: Callable
    x_box: tuple = (-2.0, 2.0)
    t_box: tuple = (0.0, 4.0)
    n_samples: int = 10000
    train_fraction: float = 0.5
    delta: float = 0.01
    normalize: bool = True
    seed: int = 0


@dataclass
class SweepCell:
    """One grid cell of a sweep; ``error`` is set when the fit failed."""

    p: int
    noise_variance: float
    report: Optional[FitReport] = None
    error: Optional[str] = None


def _run_cell(base: SweepConfig, p: int, sigma2: float, cell_index: int, seed: int) -> SweepCell:
    rng = rng_stream(seed, "sweep", cell_index)
    try:
        data = synthesize_dataset(base.disturbance, base.x_box, base.t_box,
                                  base.n_samples, rng, noise_std=float(np.sqrt(sigma2)))
        train, test = split_dataset(data, base.train_fraction, rng)
        # test error is measured against the clean disturbance values
        clean = np.asarray(base.disturbance(
            test.x[:, 0] if test.x.shape[1] == 1 else test.x, test.t), dtype=float)
        test = TrajectoryDataset(t=test.t, x=test.x, u=test.u,
                                 delta=clean[:, None] if clean.ndim == 1 else clean)
        cfg = BasisConfig(p=p, n=train.n, x_box=base.x_box, t_box=base.t_box,
                          normalize=base.normalize)
        _, report = fit_rls(train, cfg, base.delta, test=test)
        return SweepCell(p=p, noise_variance=sigma2, report=report)
    except Exception as exc:  # a failed cell must not abort the grid
        return SweepCell(p=p, noise_variance=sigma2, error=f"{type(exc).__name__}: {exc}")


def max_workers_from_env(default: Optional[int] = None) -> int:
    """Parallelism cap from COUPLED_DO_THREADS (0 or unset means auto)."""
    raw = os.environ.get("COUPLED_DO_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"COUPLED_DO_THREADS must be an integer, got {raw!r}")
    if cap > 0:
        return cap
    return default if default is not None else min(8, os.cpu_count() or 1)


def sweep(base: SweepConfig, p_values: Sequence[int], noise_variances: Sequence[float],
          seed: Optional[int] = None, max_workers: Optional[int] = None) -> list[SweepCell]:
    """Grid of identification runs over polynomial order and noise level.

    Each cell regenerates its dataset from a generator stream derived
    from (seed, cell index), so results are identical regardless of
    execution order or parallelism degree.
    """
    if not p_values or not len(noise_variances):
        raise ConfigError("p_values and noise_variances must be non-empty")
    seed = base.seed if seed is None else seed
    cells = [(p, s2, i) for i, (p, s2) in enumerate(
        (p, s2) for p in p_values for s2 in noise_variances)]
    workers = max_workers if max_workers is not None else max_workers_from_env()
    if workers > 1 and len(cells) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_cell, base, p, s2, i, seed) for p, s2, i in cells]
            return [f.result() for f in futs]
    return [_run_cell(base, p, s2, i, seed) for p, s2, i in cells]
