"""Anisotropic TV operators, their pseudoinverse synthesis operators and the
mean-adjustment machinery that makes synthesis exact.

Vectorization of images is column-major throughout: ``vec(X)`` stacks the
columns of ``X``, so ``X = x.reshape(n, n, order="F")``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidDimensionError, InvalidStrategyError, NumericalRankError

__all__ = [
    "BandedOperator",
    "SynthesisOperator",
    "KnownMean",
    "ZerothFourierCoefficient",
    "ZeroRegion",
    "NoisyDataMean",
    "ShiftStrategy",
    "build_tv_1d",
    "build_tv_2d",
    "pseudoinverse",
    "mean_adjust",
    "estimate_shift",
]


def _difference_matrix(n):
    """Sparse (n-1) x n forward difference matrix, -1 on the diagonal, +1 above."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


class BandedOperator:
    """First-order anisotropic TV operator in 1D or 2D.

    The operator is described by its side length ``n`` and dimensionality; it
    is applied with ``np.diff`` stencils and never densified unless
    :meth:`toarray` is called explicitly.

    Parameters
    ----------
    n : int
        Signal length (1D) or image side (2D).
    ndim : {1, 2}
    """

    def __init__(self, n: int, ndim: int = 1):
        if ndim not in (1, 2):
            raise InvalidDimensionError(f"ndim must be 1 or 2, got {ndim}")
        if int(n) != n or n < 2:
            raise InvalidDimensionError(f"TV operator needs side length >= 2, got {n}")
        self.n = int(n)
        self.ndim = ndim

    def __repr__(self):
        return f"BandedOperator(n={self.n}, ndim={self.ndim}, shape={self.shape})"

    @property
    def rows(self) -> int:
        n = self.n
        return n - 1 if self.ndim == 1 else 2 * n * (n - 1)

    @property
    def cols(self) -> int:
        return self.n if self.ndim == 1 else self.n * self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def signal_shape(self) -> tuple[int, ...]:
        return (self.n,) if self.ndim == 1 else (self.n, self.n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.cols:
            raise InvalidDimensionError(f"expected length {self.cols}, got {x.shape[0]}")
        if self.ndim == 1:
            return np.diff(x, axis=0)
        n = self.n
        X = x.reshape((n, n) + x.shape[1:], order="F")
        vert = np.diff(X, axis=0).reshape((n - 1) * n, *x.shape[1:], order="F")
        horz = np.diff(X, axis=1).reshape(n * (n - 1), *x.shape[1:], order="F")
        return np.concatenate([vert, horz], axis=0)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Apply the transpose (a negative divergence)."""
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows:
            raise InvalidDimensionError(f"expected length {self.rows}, got {y.shape[0]}")
        if self.ndim == 1:
            return _adjoint_diff(y, axis=0)
        n = self.n
        k = (n - 1) * n
        tail = y.shape[1:]
        V = y[:k].reshape((n - 1, n) + tail, order="F")
        H = y[k:].reshape((n, n - 1) + tail, order="F")
        out = _adjoint_diff(V, axis=0) + _adjoint_diff(H, axis=1)
        return out.reshape((n * n,) + tail, order="F")

    __matmul__ = matvec

    @property
    def T(self):
        return _Transposed(self)

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        """CSR matrix form, built from the stencil (1D) or Kronecker factors (2D)."""
        D = _difference_matrix(self.n)
        if self.ndim == 1:
            return D
        eye = sp.identity(self.n, format="csr")
        return sp.vstack([sp.kron(eye, D), sp.kron(D, eye)], format="csr")

    def toarray(self) -> np.ndarray:
        return self.sparse.toarray()

    @cached_property
    def synthesis(self) -> "SynthesisOperator":
        """Pseudoinverse of this operator, computed once per instance."""
        return pseudoinverse(self)


class _Transposed:
    def __init__(self, op):
        self.op = op
        self.shape = op.shape[::-1]

    def __matmul__(self, y):
        return self.op.rmatvec(y)


def _adjoint_diff(y, axis):
    # transpose of np.diff along `axis`: out_j = y_{j-1} - y_j with zero padding
    pad = [(0, 0)] * y.ndim
    pad[axis] = (1, 1)
    yp = np.pad(y, pad)
    return -np.diff(yp, axis=axis)


def build_tv_1d(n: int) -> BandedOperator:
    """(n-1) x n TV operator with -1 on the diagonal and +1 on the superdiagonal."""
    return BandedOperator(n, ndim=1)


def build_tv_2d(n: int) -> BandedOperator:
    """2n(n-1) x n^2 operator stacking vertical then horizontal differences of vec(X)."""
    return BandedOperator(n, ndim=2)


@dataclass(frozen=True, eq=False)
class SynthesisOperator:
    """Dense pseudoinverse ``V`` of a TV operator, shape ``cols(D) x rows(D)``."""

    matrix: np.ndarray
    op: BandedOperator = field(repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, s):
        return self.matrix @ s

    def projector(self) -> np.ndarray:
        """Dense ``V @ D``; for TV operators this is ``I - ones/N``."""
        # (D^T V^T)^T avoids densifying D
        return np.asarray((self.op.sparse.T @ self.matrix.T).T)

    @cached_property
    def projector_diagnostics(self) -> dict:
        P = self.projector()
        d = np.diag(P).copy()
        np.fill_diagonal(P, np.nan)
        return {
            "diag_min": float(d.min()),
            "diag_max": float(d.max()),
            "offdiag_min": float(np.nanmin(P)) if P.size > 1 else float("nan"),
            "offdiag_max": float(np.nanmax(P)) if P.size > 1 else float("nan"),
        }


def pseudoinverse(op: BandedOperator) -> SynthesisOperator:
    """Moore-Penrose pseudoinverse of a TV operator.

    In 1D ``D`` has full row rank and ``D^+ = D^T (D D^T)^{-1}`` is formed
    from a banded Cholesky solve of the tridiagonal Gram matrix. In 2D the
    stacked operator has more rows than rank (rank is ``n^2 - 1``), so the
    right-inverse formula does not exist; ``D^+ = L^+ D^T`` is used instead,
    with ``L = D^T D`` the grid Laplacian, solved through a sparse LU of the
    Laplacian grounded at its last node.
    """
    if op.ndim == 1:
        m = op.rows
        if m == 1:
            return SynthesisOperator(op.rmatvec(np.array([[0.5]])), op)
        ab = np.empty((2, m))
        ab[0, 0] = 0.0
        ab[0, 1:] = -1.0
        ab[1, :] = 2.0
        try:
            gram_inv = sla.solveh_banded(ab, np.eye(m), lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalRankError(f"Gram matrix D D^T is not positive definite: {exc}") from exc
        V = op.rmatvec(gram_inv)
        return SynthesisOperator(V, op)

    N = op.cols
    D = op.sparse
    L = (D.T @ D).tocsc()
    L_red = L[:-1, :-1].tocsc()
    try:
        lu = spla.splu(L_red)
    except RuntimeError as exc:
        raise NumericalRankError(f"grounded Laplacian is singular: {exc}") from exc
    # grounded generalized inverse, padded with a zero row/column
    Y = np.zeros((N, N))
    Y[:-1, :-1] = lu.solve(np.eye(N - 1))
    if not np.all(np.isfinite(Y)):
        raise NumericalRankError("non-finite values in grounded Laplacian solve")
    # Y D^T solves L w = d for each column d of D^T; centring picks the min-norm one
    W = np.asarray((D @ Y).T)
    del Y
    W -= W.mean(axis=0, keepdims=True)
    return SynthesisOperator(W, op)


def mean_adjust(synthesized: np.ndarray, shift: float) -> np.ndarray:
    """Add ``shift`` to every entry."""
    return np.asarray(synthesized, dtype=float) + shift


@dataclass(frozen=True)
class KnownMean:
    value: float


@dataclass(frozen=True)
class ZerothFourierCoefficient:
    """Unnormalized DC Fourier coefficient (the sum of the signal)."""

    value: float


@dataclass(frozen=True)
class ZeroRegion:
    """Indices (into the vectorized signal) known to have zero intensity."""

    indices: tuple

    def __init__(self, indices: Sequence[int]):
        idx = tuple(int(i) for i in np.atleast_1d(indices))
        if not idx:
            raise InvalidStrategyError("zero-region index set is empty")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True, eq=False)
class NoisyDataMean:
    data: np.ndarray


ShiftStrategy = Union[KnownMean, ZerothFourierCoefficient, ZeroRegion, NoisyDataMean]


def estimate_shift(transform_values: np.ndarray, strategy: ShiftStrategy) -> float:
    """Estimate the constant lost by ``D^+ D``.

    ``transform_values`` is the reconstructed ``D^+ D x`` (vectorized); only
    the zero-region strategy actually reads it.
    """
    v = np.asarray(transform_values, dtype=float).ravel()
    if isinstance(strategy, KnownMean):
        return float(strategy.value)
    if isinstance(strategy, ZerothFourierCoefficient):
        return float(strategy.value) / v.size
    if isinstance(strategy, ZeroRegion):
        idx = np.asarray(strategy.indices)
        if idx.size == 0:
            raise InvalidStrategyError("zero-region index set is empty")
        if idx.min() < -v.size or idx.max() >= v.size:
            raise InvalidStrategyError(f"zero-region index out of bounds for length {v.size}")
        return -float(v[idx].mean())
    if isinstance(strategy, NoisyDataMean):
        data = np.asarray(strategy.data, dtype=float)
        if data.size == 0:
            raise InvalidStrategyError("noisy data vector is empty")
        return float(data.mean())
    raise InvalidStrategyError(f"unknown shift strategy {strategy!r}")
