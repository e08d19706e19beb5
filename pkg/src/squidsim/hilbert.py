"""Truncated-basis operator algebra and a dense Hermitian eigensolver."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidDimension, NotHermitian, NumericalFailure, ShapeError

HERMITIAN_RTOL = 1e-12
RESIDUAL_RTOL = 1e-9


class Basis(enum.Enum):
    FOCK = "fock"
    CHARGE = "charge"
    EIGEN = "eigen"
    PRODUCT = "product"


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense square matrix tagged with the basis it is written in.

    Real input stays real; the dtype is only promoted to complex when an
    entry is genuinely complex. The matrix is made read-only on construction.
    """

    matrix: np.ndarray
    basis: Basis = Basis.FOCK

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.dtype.kind not in "fc":
            m = m.astype(float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] < 1:
            raise InvalidDimension("operator dimension must be positive")
        m = np.array(m, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def _wrap(cls, matrix: np.ndarray, basis: Basis = Basis.PRODUCT) -> "Operator":
        """Wrap an array this package owns without copying it."""
        op = object.__new__(cls)
        object.__setattr__(op, "matrix", matrix)
        object.__setattr__(op, "basis", basis)
        return op

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.basis)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return is_hermitian(self.matrix, rtol)

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix @ other.matrix, self.basis)

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix + other.matrix, self.basis)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix - other.matrix, self.basis)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.matrix * scalar, self.basis)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.matrix, self.basis)


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Lowest eigenpairs of a Hermitian operator, ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def _check_same_dim(a: Operator, b: Operator):
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return True
    return np.linalg.norm(m - m.conj().T) <= rtol * scale


def _as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, Operator) else np.asarray(op)


def identity(dim: int, basis: Basis = Basis.FOCK) -> Operator:
    return Operator(np.eye(dim), basis)


def make_ladder(dim: int) -> Operator:
    """Annihilation operator truncated to ``dim`` Fock levels."""
    if int(dim) != dim or dim < 2:
        raise InvalidDimension(f"ladder operator needs dim >= 2, got {dim}")
    return Operator(np.diag(np.sqrt(np.arange(1, int(dim), dtype=float)), 1))


def make_phase_charge_fock(dim: int, phi_zpf: float):
    """Phase and charge operators in a truncated oscillator basis.

    ``phi = phi_zpf (a + a^dag)`` and ``n = i (a^dag - a) / (2 phi_zpf)`` so
    that ``[phi, n] = i`` away from the truncation edge.

    Returns
    -------
    phi, n : Operator
    """
    if not phi_zpf > 0:
        raise ValueError("phi_zpf must be positive")
    a = make_ladder(dim).matrix
    phi = phi_zpf * (a + a.T)
    n = 1j * (a.T - a) / (2.0 * phi_zpf)
    return Operator(phi, Basis.FOCK), Operator(n, Basis.FOCK)


def make_charge_basis(n_max: int):
    """Charge operator and ``cos(phi)`` in the Cooper-pair number basis.

    The basis runs over ``-n_max .. n_max`` so the dimension is ``2 n_max + 1``.
    """
    if int(n_max) != n_max or n_max < 1:
        raise InvalidDimension(f"n_max must be >= 1, got {n_max}")
    n_max = int(n_max)
    dim = 2 * n_max + 1
    n = np.diag(np.arange(-n_max, n_max + 1, dtype=float))
    cos = 0.5 * (np.eye(dim, k=1) + np.eye(dim, k=-1))
    return Operator(n, Basis.CHARGE), Operator(cos, Basis.CHARGE)


def function_of(op: Operator, f: Callable[[np.ndarray], np.ndarray]) -> Operator:
    """Apply a scalar function to a Hermitian operator via its eigenbasis."""
    m = _as_matrix(op)
    if not is_hermitian(m):
        raise NotHermitian("matrix function requires a Hermitian operator")
    w, v = np.linalg.eigh(m)
    out = (v * f(w)) @ v.conj().T
    if out.dtype.kind == "c" and not np.any(out.imag):
        out = out.real
    return Operator(out, getattr(op, "basis", Basis.FOCK))


def cosine_of(op: Operator, offset: float = 0.0) -> Operator:
    """``cos(op + offset)`` from the spectral decomposition of ``op``."""
    return function_of(op, lambda w: np.cos(w + offset))


def sine_of(op: Operator, offset: float = 0.0) -> Operator:
    """``sin(op + offset)`` from the spectral decomposition of ``op``."""
    return function_of(op, lambda w: np.sin(w + offset))


def tensor(ops: Sequence[Operator]) -> Operator:
    """Kronecker product, evaluated left to right in the given order."""
    if len(ops) == 0:
        raise ShapeError("tensor of an empty list")
    mats = [_as_matrix(o) for o in ops]
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got shape {m.shape}")
    out = reduce(np.kron, mats)
    basis = Basis.PRODUCT if len(mats) > 1 else getattr(ops[0], "basis", Basis.FOCK)
    return Operator(out, basis)


def embed(op: Operator, slot: int, dims: Sequence[int]) -> Operator:
    """Place ``op`` at position ``slot`` with identities on the other modes."""
    dims = [int(d) for d in dims]
    if not 0 <= slot < len(dims):
        raise ShapeError(f"slot {slot} outside {len(dims)} modes")
    m = _as_matrix(op)
    if m.shape != (dims[slot], dims[slot]):
        raise ShapeError(f"operator of dim {m.shape[0]} does not fit slot of dim {dims[slot]}")
    left = int(np.prod(dims[:slot], dtype=int))
    right = int(np.prod(dims[slot + 1:], dtype=int))
    out = np.kron(np.kron(np.eye(left), m), np.eye(right))
    return Operator(out, Basis.PRODUCT)


def eigh(op: Operator, k: int | None = None, check: bool = True) -> EigenResult:
    """Lowest ``k`` eigenpairs of a Hermitian operator.

    Complex matrices whose imaginary part vanishes identically are solved in
    real arithmetic. Every pair is checked against the residual bound
    ``||H v - lam v|| <= 1e-9 ||H||_F`` unless ``check`` is false.

    Raises
    ------
    NotHermitian
        If the input is not Hermitian to 1e-12 relative Frobenius norm.
    NumericalFailure
        If LAPACK fails or a residual exceeds the bound.
    """
    m = _as_matrix(op)
    dim = m.shape[0]
    if k is None:
        k = dim
    if not 1 <= k <= dim:
        raise InvalidDimension(f"k must lie in [1, {dim}], got {k}")
    if not is_hermitian(m):
        raise NotHermitian("eigh requires a Hermitian operator")
    if m.dtype.kind == "c" and not np.any(m.imag):
        m = np.ascontiguousarray(m.real)
    try:
        if k == dim:
            w, v = scipy.linalg.eigh(m, check_finite=True)
        else:
            w, v = scipy.linalg.eigh(m, subset_by_index=[0, k - 1], check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    if check:
        scale = np.linalg.norm(m)
        res = np.linalg.norm(m @ v - v * w, axis=0)
        if scale > 0 and np.max(res) > RESIDUAL_RTOL * scale:
            raise NumericalFailure(f"eigen residual {np.max(res):.3g} exceeds bound")
    return EigenResult(w, v)
