"""Online disturbance estimation.

Two observers are provided.  The higher-order observer reconstructs the
monomial time-feature vector varsigma(t) of an identified separable
model through the exosystem

    d/dt varsigma = A varsigma,      delta = Theta B(x) D varsigma,

via the auxiliary dynamics

    dz/dt   = A sigma_hat - Gamma (f_x(x) + f_u(x) u + Theta B(x) D sigma_hat)
    sigma_hat = z + Gamma x
    delta_hat = Theta B(x) D sigma_hat,

with the gain Gamma resynthesized every step at the current state
(frozen-time design) so that A - Gamma C(x) carries prescribed stable
eigenvalues.  The estimation error then obeys
d/dt e = (A - Gamma C(x)) e and decays exponentially.

The first-order baseline treats the disturbance as a signal with
bounded derivative; it converges on constant disturbances and lags
behind time-varying ones.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import NumericalError
from .learner import SeparatedModel


class UnobservableError(NumericalError):
    """The observability matrix is too ill-conditioned to invert."""


def _pole_polynomial_of_a(A: np.ndarray, poles: np.ndarray) -> np.ndarray:
    """Evaluate the monic polynomial with the given roots at the matrix A."""
    q_coef = np.poly(poles)
    if np.abs(q_coef.imag).max() > 1e-9:
        raise ValueError("poles must be real or come in conjugate pairs")
    q_of_a = np.zeros_like(A)
    eye = np.eye(A.shape[0])
    for coef in q_coef.real:
        q_of_a = q_of_a @ A + coef * eye
    return q_of_a


def _observability(A: np.ndarray, c: np.ndarray) -> np.ndarray:
    s = A.shape[0]
    obs = np.empty((s, s))
    row = c
    for i in range(s):
        obs[i] = row
        row = row @ A
    return obs


def _gain_from_observability(q_of_a: np.ndarray, obs: np.ndarray,
                             cond_limit: float) -> np.ndarray:
    cond = np.linalg.cond(obs)
    if not np.isfinite(cond) or cond > cond_limit:
        raise UnobservableError(
            f"observability matrix condition {cond:.2e} exceeds {cond_limit:.2e}")
    e_last = np.zeros(obs.shape[0])
    e_last[-1] = 1.0
    return q_of_a @ np.linalg.solve(obs, e_last)


def placement_residual(A: np.ndarray, c: np.ndarray, gamma: np.ndarray, poles) -> float:
    """Certificate that A - gamma c carries exactly the requested poles.

    Returns ||q(A - gamma c)||_F for the monic polynomial q with the
    requested roots.  By Cayley-Hamilton this is zero in exact
    arithmetic whenever the spectrum (with multiplicities) equals the
    requested pole set; unlike an eigensolver comparison it stays sharp
    for repeated poles, whose eigenvalue problem is conditioned as
    eps**(1/multiplicity).
    """
    A = np.asarray(A, dtype=float)
    lam = A - np.outer(np.asarray(gamma, dtype=float).ravel(),
                       np.asarray(c, dtype=float).ravel())
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    return float(np.linalg.norm(_pole_polynomial_of_a(lam, poles)))


def ackermann_gain(A: np.ndarray, c: np.ndarray, poles,
                   cond_limit: float = 1e8) -> np.ndarray:
    """Place observer poles for a single-output pair (A, c).

    Builds the observability matrix O with rows c, cA, ..., cA^(s-1)
    and returns Gamma = q(A) O^{-1} e_s, where q is the monic
    polynomial with the requested roots and e_s the last standard basis
    vector.  The spectrum of A - Gamma c then equals ``poles`` exactly
    (up to conditioning of O).

    Raises
    ------
    UnobservableError
        When cond(O) exceeds ``cond_limit``.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float).ravel()
    s = A.shape[0]
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.shape != (s,):
        raise ValueError(f"need {s} poles, got {poles.shape}")
    if np.any(poles.real >= 0):
        raise ValueError("all poles must have strictly negative real part")
    if not np.all(np.isfinite(c)):
        raise NumericalError("output row contains non-finite entries")
    return _gain_from_observability(_pole_polynomial_of_a(A, poles), _observability(A, c), cond_limit)


def _rk4(rhs: Callable, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class Hodo:
    """Higher-order disturbance observer for a separated model.

    Parameters
    ----------
    model : SeparatedModel
        Identified coefficients and basis; supplies C(x) = Theta B(x) D
        and the exosystem matrix A.
    f_x, f_u : callable
        Plant mappings of the observed channel: f_x(x) -> (n,),
        f_u(x) -> (n, o).
    poles : sequence of s2 values
        Desired eigenvalues of the error dynamics, negative real parts.
    x0 : array_like, shape (n,)
        State at initialization (the first gain is designed here).
    sigma0 : array_like, shape (s2,), optional
        Initial feature estimate; zeros by default (offline and online
        time domains are unrelated, so no warm start is attempted).
    output_weights : array_like, shape (n,), optional
        Unit-norm aggregation weights turning the n-row output map into
        the single synthesis output w @ C(x); uniform by default.
    cond_limit : float
        Observability condition threshold; beyond it the previous valid
        gain is kept and ``gain_failures`` is incremented.
    verify_placement : bool
        Recompute the spectrum of A - Gamma c after each design and
        raise if it strayed from the request by more than 1e-8.
    """

    def __init__(self, model: SeparatedModel, f_x: Callable, f_u: Callable,
                 poles, x0, sigma0=None, output_weights=None,
                 cond_limit: float = 1e8, verify_placement: bool = False):
        self.model = model
        self.f_x = f_x
        self.f_u = f_u
        s2 = model.config.s2
        self.poles = np.atleast_1d(np.asarray(poles, dtype=complex))
        if self.poles.shape != (s2,):
            raise ValueError(f"need {s2} poles, got {self.poles.shape}")
        if np.any(self.poles.real >= 0):
            raise ValueError("all poles must have strictly negative real part")
        self.cond_limit = cond_limit
        self.verify_placement = verify_placement
        self.gain_failures = 0

        n = model.n
        if output_weights is None:
            w = np.ones(n) / np.sqrt(n)
        else:
            w = np.asarray(output_weights, dtype=float)
            w = w / np.linalg.norm(w)
        self.w = w

        self._A = model.A
        self._q_of_a = _pole_polynomial_of_a(self._A, self.poles)
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        sigma0 = np.zeros(s2) if sigma0 is None else np.asarray(sigma0, dtype=float)
        self.gamma = self._design(x0)           # (s2, n)
        self.z = sigma0 - self.gamma @ x0
        self.sigma_hat = sigma0

    def _design(self, x) -> np.ndarray:
        c = self.w @ self.model.output_map(x)
        col = _gain_from_observability(self._q_of_a, _observability(self._A, c),
                                       self.cond_limit)
        if self.verify_placement:
            lam = self._A - np.outer(col, c)
            resid = np.linalg.norm(_pole_polynomial_of_a(lam, self.poles))
            if resid > 1e-8 * (1.0 + np.linalg.norm(lam)) ** len(self.poles):
                raise NumericalError(
                    f"pole placement residual ||q(A - Gamma c)|| = {resid:.2e} too large")
        return np.outer(col, self.w)

    def step(self, x, u, dt: float) -> np.ndarray:
        """Advance the observer by dt and return the disturbance estimate.

        The measured state and control are held constant over the step
        (zero-order hold); the auxiliary state is integrated with a
        classical fourth-order Runge-Kutta update.  The gain is
        redesigned at the current state; on an ill-conditioned
        observability matrix the previous gain is kept.
        """
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise NumericalError("non-finite observer inputs")

        try:
            gamma_new = self._design(x)
        except UnobservableError:
            gamma_new = self.gamma
            self.gain_failures += 1
        # rebase the auxiliary state so sigma_hat is continuous across
        # the gain switch (the output identity holds with the new gain)
        sigma_here = self.z + self.gamma @ x
        self.gamma = gamma_new
        self.z = sigma_here - self.gamma @ x

        cmap = self.model.output_map(x)         # (n, s2), frozen over the step
        drive = np.asarray(self.f_x(x)) + np.asarray(self.f_u(x)) @ u
        gamma, A, z_frozen = self.gamma, self._A, self.gamma @ x

        def rhs(z):
            sig = z + z_frozen
            return A @ sig - gamma @ (drive + cmap @ sig)

        self.z = _rk4(rhs, self.z, dt)
        self.sigma_hat = self.z + z_frozen
        if not np.all(np.isfinite(self.sigma_hat)):
            raise NumericalError("observer state diverged to non-finite values")
        return cmap @ self.sigma_hat


class FirstOrderDo:
    """Classical first-order disturbance observer (comparison baseline).

    Assumes a bounded disturbance derivative:

        dz/dt = -G z - G (G x + f_x(x) + f_u(x) u),   delta_hat = z + G x.

    The estimation error obeys d/dt e = -G e + d(delta)/dt, so constant
    disturbances are recovered exactly while a ramp of slope r leaves a
    steady lag r / G.
    """

    def __init__(self, f_x: Callable, f_u: Callable, gain: float, n: int = 1):
        self.f_x = f_x
        self.f_u = f_u
        self.gain = float(gain)
        self.z = np.zeros(n)

    def step(self, x, u, dt: float) -> np.ndarray:
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise NumericalError("non-finite observer inputs")
        g = self.gain
        drive = np.asarray(self.f_x(x)) + np.asarray(self.f_u(x)) @ u

        def rhs(z):
            return -g * z - g * (g * x + drive)

        self.z = _rk4(rhs, self.z, dt)
        return self.z + g * x
