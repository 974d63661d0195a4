"""Chebyshev tensor-product bases for separable disturbance models.

A disturbance that couples the system state x with an external feature
(a disturbance vector d, or time t when d is an analytic function of t)
is represented as

    delta(x, d)  ~=  Theta @ B(x) @ xi(d)

where Theta is a constant coefficient matrix, B(x) is a block matrix
built from the state basis vector Pi(x), and xi(d) is the feature basis
vector.  All basis entries are products of Chebyshev polynomials of the
first kind, indexed by a flat base-(p+1) multi-index.

This module also provides the two structural matrices of the time-feature
case: the lower-triangular change of basis D with xi(t) = D @ varsigma(t)
for the monomial vector varsigma(t) = [1, t, ..., t^p], and the nilpotent
companion matrix A with d/dt varsigma = A varsigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


def cheb_eval(k: int, tau):
    """Evaluate the Chebyshev polynomial T_k at tau.

    Uses the three-term recurrence T_k = 2*tau*T_{k-1} - T_{k-2} with
    T_0 = 1, T_1 = tau.  Outside [-1, 1] the polynomial is evaluated
    as-is (no clamping); approximation guarantees do not apply there,
    but observers must stay total during transients.

    Parameters
    ----------
    k : int
        Polynomial order, >= 0.
    tau : float or ndarray
        Evaluation point(s).

    Returns
    -------
    float or ndarray
        T_k(tau), matching the shape of tau.
    """
    if k < 0:
        raise ValueError(f"order must be >= 0, got {k}")
    return cheb_series(k, tau)[k]


def cheb_series(p: int, tau) -> np.ndarray:
    """Stack [T_0(tau), ..., T_p(tau)] along a new leading axis."""
    tau = np.asarray(tau, dtype=float)
    out = np.empty((p + 1,) + tau.shape)
    out[0] = 1.0
    if p >= 1:
        out[1] = tau
    for k in range(2, p + 1):
        out[k] = 2.0 * tau * out[k - 1] - out[k - 2]
    return out


def flat_to_multi(h: int, p: int, dims: int) -> tuple[int, ...]:
    """Decode a flat index into per-dimension orders (k_1, ..., k_dims).

    The encoding is positional base-(p+1) with the least significant
    digit first: h = sum_i k_i * (p+1)**(i-1).  This ordering is the
    serialization contract for coefficient matrices and is frozen.
    """
    size = (p + 1) ** dims
    if not 0 <= h < size:
        raise ValueError(f"flat index {h} out of range [0, {size}) for p={p}, dims={dims}")
    digits = []
    for _ in range(dims):
        h, r = divmod(h, p + 1)
        digits.append(r)
    return tuple(digits)


def multi_to_flat(digits, p: int) -> int:
    """Inverse of :func:`flat_to_multi`."""
    h = 0
    for i, k in enumerate(digits):
        if not 0 <= k <= p:
            raise ValueError(f"digit {k} out of range [0, {p}]")
        h += k * (p + 1) ** i
    return h


class StructureMatrices(NamedTuple):
    """Monomial-to-Chebyshev change of basis D and companion matrix A."""

    D: np.ndarray
    A: np.ndarray


def structure_matrices(s2: int) -> StructureMatrices:
    """Build the s2 x s2 structure matrices of the time-feature model.

    Row i of D holds the monomial coefficients of T_{i-1}; rows follow
    the recurrence row_i = 2*rightshift(row_{i-1}) - row_{i-2}, where
    rightshift is a unit shift of the coefficient vector (multiplication
    by t).  A has A[i, j] = j on the first subdiagonal (i = j + 1,
    1-based) and zeros elsewhere, so that d/dt [1, t, ..., t^p] = A @ [.].
    """
    if s2 < 1:
        raise ValueError(f"s2 must be >= 1, got {s2}")
    D = np.zeros((s2, s2))
    D[0, 0] = 1.0
    if s2 > 1:
        D[1, 1] = 1.0
    for i in range(2, s2):
        D[i, 1:] = 2.0 * D[i - 1, :-1]
        D[i] -= D[i - 2]
    A = np.diag(np.arange(1.0, s2), k=-1)
    return StructureMatrices(D=D, A=A)


def _as_box(box, dims: int, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(box, dtype=float))
    if arr.shape == (1, 2) and dims > 1:
        arr = np.repeat(arr, dims, axis=0)
    if arr.shape != (dims, 2):
        raise ValueError(f"{name} must have shape ({dims}, 2), got {arr.shape}")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError(f"{name} lower bounds must be strictly below upper bounds")
    return arr


@dataclass(frozen=True)
class BasisConfig:
    """Shape and normalization of the tensor-product basis.

    Parameters
    ----------
    p : int
        Polynomial order, shared by every dimension.
    n : int
        State dimension.
    feature_dim : int
        Dimension of the external feature (1 for the time-feature case).
    x_box, t_box : array_like, shape (dims, 2) or (2,)
        Per-dimension affine ranges mapped onto [-1, 1] when
        ``normalize`` is set.  A single (lo, hi) pair is broadcast.
    normalize : bool
        Apply the affine map 2*(v - lo)/(hi - lo) - 1 before basis
        evaluation.  Off by default: identified coefficients then refer
        to Chebyshev polynomials of the raw variables.
    """

    p: int
    n: int
    feature_dim: int = 1
    x_box: np.ndarray = field(default=None)
    t_box: np.ndarray = field(default=None)
    normalize: bool = False

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        x_box = self.x_box if self.x_box is not None else [[-1.0, 1.0]]
        t_box = self.t_box if self.t_box is not None else [[-1.0, 1.0]]
        object.__setattr__(self, "x_box", _as_box(x_box, self.n, "x_box"))
        object.__setattr__(self, "t_box", _as_box(t_box, self.feature_dim, "t_box"))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BasisConfig):
            return NotImplemented
        return (self.p == other.p and self.n == other.n
                and self.feature_dim == other.feature_dim
                and self.normalize == other.normalize
                and np.array_equal(self.x_box, other.x_box)
                and np.array_equal(self.t_box, other.t_box))

    @property
    def s1(self) -> int:
        return (self.p + 1) ** (self.n + self.feature_dim)

    @property
    def s2(self) -> int:
        return (self.p + 1) ** self.feature_dim

    @property
    def state_block(self) -> int:
        """Length of Pi(x), the per-column block of B(x)."""
        return (self.p + 1) ** self.n

    def normalize_state(self, x: np.ndarray) -> np.ndarray:
        """Affine map of states onto [-1, 1]^n (identity when off)."""
        x = np.asarray(x, dtype=float)
        if not self.normalize:
            return x
        lo, hi = self.x_box[:, 0], self.x_box[:, 1]
        return 2.0 * (x - lo) / (hi - lo) - 1.0

    def normalize_feature(self, d: np.ndarray) -> np.ndarray:
        """Affine map of features onto [-1, 1]^feature_dim."""
        d = np.asarray(d, dtype=float)
        if not self.normalize:
            return d
        lo, hi = self.t_box[:, 0], self.t_box[:, 1]
        return 2.0 * (d - lo) / (hi - lo) - 1.0

    def pi_vector(self, x) -> np.ndarray:
        """State basis Pi(x): entry h_k is prod_i T_{k_i}(x_i).

        The flat index h_k follows the little-endian base-(p+1)
        encoding of :func:`flat_to_multi`.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise ValueError(f"state must have shape ({self.n},), got {x.shape}")
        return self._tensor_rows(self.normalize_state(x)[None, :])[0]

    def xi_vector(self, d) -> np.ndarray:
        """Feature basis xi(d); for feature_dim == 1 this is [T_0..T_p](d)."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if d.shape != (self.feature_dim,):
            raise ValueError(f"feature must have shape ({self.feature_dim},), got {d.shape}")
        return self._tensor_rows(self.normalize_feature(d)[None, :])[0]

    def b_matrix(self, x) -> np.ndarray:
        """Block matrix B(x) of shape (s1, s2).

        Column j holds Pi(x) in rows j*(p+1)^n .. (j+1)*(p+1)^n and is
        zero elsewhere; equivalently kron(I_{s2}, Pi(x) as a column).
        """
        pi = self.pi_vector(x)
        return np.kron(np.eye(self.s2), pi[:, None])

    def monomial_vector(self, t: float) -> np.ndarray:
        """Monomial feature vector [1, t, ..., t^p] (normalized t when on).

        Only defined for the scalar time-feature case (feature_dim == 1).
        """
        if self.feature_dim != 1:
            raise ValueError("monomial_vector requires feature_dim == 1")
        tn = float(self.normalize_feature(np.atleast_1d(t))[0])
        return tn ** np.arange(self.s2, dtype=float)

    def pi_rows(self, x: np.ndarray) -> np.ndarray:
        """Vectorized Pi over a batch of states, shape (N, (p+1)^n)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n:
            raise ValueError(f"state batch must have shape (N, {self.n}), got {x.shape}")
        return self._tensor_rows(self.normalize_state(x))

    def xi_rows(self, d: np.ndarray) -> np.ndarray:
        """Vectorized xi over a batch of features, shape (N, s2)."""
        d = np.asarray(d, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.shape[1] != self.feature_dim:
            raise ValueError(f"feature batch must have shape (N, {self.feature_dim}), got {d.shape}")
        return self._tensor_rows(self.normalize_feature(d))

    def design_rows(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Rows B(x_i) @ xi(d_i) = kron(xi_i, Pi_i), shape (N, s1).

        This is the regression feature map: Theta @ design_rows(...).T
        evaluates the separated model on a batch.
        """
        pi = self.pi_rows(x)
        xi = self.xi_rows(d)
        return (xi[:, :, None] * pi[:, None, :]).reshape(len(pi), self.s1)

    def _tensor_rows(self, v: np.ndarray) -> np.ndarray:
        # little-endian tensor product: digit of dim 1 varies fastest
        n_rows, dims = v.shape
        tables = cheb_series(self.p, v)          # (p+1, N, dims)
        acc = np.ones((n_rows, 1))
        for i in range(dims):
            ti = tables[:, :, i].T               # (N, p+1)
            acc = (ti[:, :, None] * acc[:, None, :]).reshape(n_rows, -1)
        return acc
