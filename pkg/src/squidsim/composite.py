"""Multi-mode Hamiltonians, truncation control and dressed-state labels.

Each nonlinear mode is first diagonalized in a large native basis (displaced
Fock states for the IST, charge states for the transmon) and truncated to its
lowest ``dim`` eigenstates; linear modes are truncated Fock ladders. The
product of these single-mode bases is the bare basis used for labeling.

All coupling operators are brought to a purely imaginary form: the IST charge
operator already is one in a real eigenbasis, transmon odd-parity states get
a factor ``i``, and linear modes couple through the quadrature
``i (c^dag - c)``, which is unitarily equivalent to ``c + c^dag``. Products of
two such operators are real, so composite Hamiltonians are real symmetric.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .circuits import (CircuitParams, ModeKind, ist_operators, phi_zpf,
                       transmon_operators)
from .errors import (InvalidDimension, InvalidParams, LabelAmbiguous,
                     LabelMissing, NumericalFailure, ShapeError,
                     TruncationNotConverged)
from .hilbert import Basis, EigenResult, Operator, eigh

DEFAULT_TOL = 1e-6
DEFAULT_K = 12
START_NONLINEAR = 6
STEP_NONLINEAR = 2
START_LINEAR = 4
STEP_LINEAR = 2
MAX_ROUNDS = 8
LABEL_THRESHOLD = 0.05
TIE_TOL = 1e-9
NATIVE_TOL = 1e-10
NATIVE_STEP = 20
NATIVE_MAX = 800
# product dimension above which the sparse Lanczos solver is used
SPARSE_MIN = 1200
SPARSE_EXTRA = 4


class CouplingForm(enum.Enum):
    CHARGE_CHARGE = "charge-charge"
    CHARGE_LADDER = "charge-ladder"


@dataclass(frozen=True)
class Mode:
    name: str
    params: CircuitParams
    dim_hint: int | None = None

    @property
    def kind(self) -> ModeKind:
        return self.params.kind


@dataclass(frozen=True)
class Coupling:
    """Bilinear coupling ``strength * X_first * X_second``.

    ``X`` is the charge operator of a nonlinear mode and the quadrature of a
    linear one.
    """

    first: str
    second: str
    strength: float
    form: CouplingForm = CouplingForm.CHARGE_CHARGE

    def __post_init__(self):
        if isinstance(self.form, str):
            object.__setattr__(self, "form", CouplingForm(self.form))


@dataclass(frozen=True)
class SystemSpec:
    """Ordered modes plus pairwise couplings."""

    modes: tuple
    couplings: tuple = ()

    def __post_init__(self):
        modes = tuple(self.modes)
        couplings = tuple(self.couplings)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "couplings", couplings)
        if not modes:
            raise InvalidParams("system needs at least one mode")
        names = [m.name for m in modes]
        if len(set(names)) != len(names):
            raise InvalidParams(f"duplicate mode names in {names}")
        for c in couplings:
            for nm in (c.first, c.second):
                if nm not in names:
                    raise InvalidParams(f"coupling refers to unknown mode {nm!r}")
            if c.first == c.second:
                raise InvalidParams("a mode cannot couple to itself")
            if not math.isfinite(c.strength):
                raise InvalidParams("coupling strength must be finite")
            kinds = (self.mode(c.first).kind, self.mode(c.second).kind)
            if c.form is CouplingForm.CHARGE_CHARGE and ModeKind.LINEAR in kinds:
                raise InvalidParams("charge-charge coupling needs two nonlinear modes")
            if c.form is CouplingForm.CHARGE_LADDER and ModeKind.LINEAR not in kinds:
                raise InvalidParams("charge-ladder coupling needs a linear mode")

    @property
    def names(self) -> tuple:
        return tuple(m.name for m in self.modes)

    @property
    def nonlinear_names(self) -> tuple:
        return tuple(m.name for m in self.modes if m.params.nonlinear)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidParams(f"no mode named {name!r}") from None

    def mode(self, name: str) -> Mode:
        return self.modes[self.index(name)]

    def with_params(self, name: str, params: CircuitParams) -> "SystemSpec":
        i = self.index(name)
        modes = list(self.modes)
        modes[i] = replace(modes[i], params=params)
        return replace(self, modes=tuple(modes))

    def at_flux(self, name: str, flux: float) -> "SystemSpec":
        return self.with_params(name, self.mode(name).params.at_flux(flux))

    def without(self, names: Iterable[str]) -> "SystemSpec":
        drop = set(names)
        modes = tuple(m for m in self.modes if m.name not in drop)
        couplings = tuple(c for c in self.couplings
                          if c.first not in drop and c.second not in drop)
        return SystemSpec(modes, couplings)

    def subset(self, names: Iterable[str]) -> "SystemSpec":
        keep = set(names)
        return self.without([n for n in self.names if n not in keep])

    def uncoupled(self) -> "SystemSpec":
        return SystemSpec(self.modes, ())

    def with_coupling(self, first: str, second: str, strength: float) -> "SystemSpec":
        couplings = []
        found = False
        for c in self.couplings:
            if {c.first, c.second} == {first, second}:
                c = replace(c, strength=strength)
                found = True
            couplings.append(c)
        if not found:
            raise InvalidParams(f"no coupling between {first!r} and {second!r}")
        return replace(self, couplings=tuple(couplings))

    def coupling(self, first: str, second: str) -> Coupling:
        for c in self.couplings:
            if {c.first, c.second} == {first, second}:
                return c
        raise InvalidParams(f"no coupling between {first!r} and {second!r}")

    def permuted(self, order: Sequence[str]) -> "SystemSpec":
        if sorted(order) != sorted(self.names):
            raise InvalidParams("permutation must list every mode once")
        return SystemSpec(tuple(self.mode(n) for n in order), self.couplings)


@dataclass(frozen=True)
class Level:
    label: tuple
    energy: float
    overlap: float


@dataclass(frozen=True, eq=False)
class LabeledSpectrum:
    """Dressed levels in ascending energy with their bare-state labels."""

    mode_names: tuple
    levels: tuple
    dims: tuple
    ambiguous: bool = False
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_by_label", {lv.label: i for i, lv in enumerate(self.levels)})

    def __len__(self):
        return len(self.levels)

    @property
    def energies(self) -> np.ndarray:
        return np.array([lv.energy for lv in self.levels])

    @property
    def labels(self) -> list:
        return [lv.label for lv in self.levels]

    def label(self, excitations: Mapping[str, int] | Sequence[int] | None = None, **kw) -> tuple:
        """Full label from a partial ``{mode: n}`` mapping (others at 0)."""
        if excitations is None:
            excitations = kw
        if isinstance(excitations, Mapping):
            unknown = set(excitations) - set(self.mode_names)
            if unknown:
                raise LabelMissing(f"unknown modes {sorted(unknown)}")
            return tuple(int(excitations.get(n, 0)) for n in self.mode_names)
        lab = tuple(int(x) for x in excitations)
        if len(lab) != len(self.mode_names):
            raise LabelMissing(f"label {lab} has wrong length for modes {self.mode_names}")
        return lab

    def has(self, label) -> bool:
        try:
            return self.label(label) in self._by_label
        except LabelMissing:
            return False

    def rank(self, label) -> int:
        lab = self.label(label)
        try:
            return self._by_label[lab]
        except KeyError:
            raise LabelMissing(f"label {lab} not among the {len(self.levels)} labeled levels") from None

    def level(self, label) -> Level:
        return self.levels[self.rank(label)]

    def energy(self, label) -> float:
        return self.level(label).energy


# ---------------------------------------------------------------- mode bases

@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Truncated single-mode basis.

    ``coupler`` is the real matrix ``A`` such that the coupling operator of the
    mode equals ``1j * A`` in this basis.
    """

    energies: np.ndarray
    coupler: np.ndarray
    native_dim: int


def native_dim(params: CircuitParams, keep: int) -> int:
    """Size of the basis a mode is diagonalized in before truncation."""
    if params.kind is ModeKind.IST:
        return 2 * keep + 30
    if params.kind is ModeKind.TRANSMON:
        return 2 * (keep + 12) + 1
    return keep


def _fix_signs(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


@lru_cache(maxsize=256)
def mode_basis(params: CircuitParams, keep: int) -> ModeBasis:
    """Lowest ``keep`` eigenstates of one mode and its coupling operator."""
    keep = int(keep)
    if keep < 1:
        raise InvalidDimension("each mode needs at least one level")
    if params.kind is ModeKind.LINEAR:
        e = params.omega * np.arange(keep, dtype=float)
        c = np.diag(np.sqrt(np.arange(1, keep, dtype=float)), 1)
        return ModeBasis(e, c.T - c, keep)
    if params.kind is ModeKind.IST:
        n_dim = native_dim(params, keep)
        ops = ist_operators(params, n_dim)
        w, v = scipy.linalg.eigh(ops.hamiltonian.matrix, subset_by_index=[0, keep - 1])
        # grow the Fock basis until the kept levels no longer move
        while n_dim < NATIVE_MAX:
            bigger = ist_operators(params, n_dim + NATIVE_STEP)
            w2, v2 = scipy.linalg.eigh(bigger.hamiltonian.matrix, subset_by_index=[0, keep - 1])
            done = np.max(np.abs(w2 - w)) < NATIVE_TOL
            n_dim, ops, w, v = n_dim + NATIVE_STEP, bigger, w2, v2
            if done:
                break
        v = _fix_signs(v)
        a = v.T @ ops.charge.matrix.imag @ v
        return ModeBasis(w, 0.5 * (a - a.T), n_dim)
    n_max = native_dim(params, keep) // 2
    w, v, parity = _transmon_parity_eig(params, n_max, keep)
    while 2 * n_max + 1 < NATIVE_MAX:
        w2, v2, p2 = _transmon_parity_eig(params, n_max + NATIVE_STEP // 2, keep)
        done = np.max(np.abs(w2 - w)) < NATIVE_TOL
        n_max, w, v, parity = n_max + NATIVE_STEP // 2, w2, v2, p2
        if done:
            break
    nvals = np.arange(-n_max, n_max + 1)
    nmat = v.T @ (nvals[:, None] * v)
    # odd states carry a factor i: <e|n|o'> = i N, <o'|n|e> = -i N
    sign = parity[None, :] - parity[:, None]
    return ModeBasis(w, nmat * sign, 2 * n_max + 1)


def _transmon_parity_eig(params: CircuitParams, n_max: int, keep: int):
    """Transmon eigenstates of definite charge parity, in the charge basis."""
    h = transmon_operators(params, n_max).hamiltonian.matrix
    dim = 2 * n_max + 1
    # parity-adapted basis: even (|n> + |-n>)/sqrt2, odd (|n> - |-n>)/sqrt2
    even = np.zeros((dim, n_max + 1))
    odd = np.zeros((dim, n_max))
    even[n_max, 0] = 1.0
    r = 1.0 / math.sqrt(2.0)
    for m in range(1, n_max + 1):
        even[n_max + m, m] = even[n_max - m, m] = r
        odd[n_max + m, m - 1] = r
        odd[n_max - m, m - 1] = -r
    we, ve = np.linalg.eigh(even.T @ h @ even)
    wo, vo = np.linalg.eigh(odd.T @ h @ odd)
    w = np.concatenate([we, wo])
    v = np.concatenate([even @ ve, odd @ vo], axis=1)
    parity = np.concatenate([np.zeros(len(we)), np.ones(len(wo))])
    order = np.argsort(w, kind="stable")[:keep]
    return w[order], _fix_signs(v[:, order]), parity[order]


# ------------------------------------------------------------ Hamiltonians

def _kron_chain(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _check_dims(spec: SystemSpec, dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if len(dims) != len(spec.modes):
        raise ShapeError(f"{len(dims)} truncations given for {len(spec.modes)} modes")
    if any(d < 1 for d in dims):
        raise ShapeError(f"truncations must be positive, got {dims}")
    return dims


def _terms(spec: SystemSpec, dims):
    """Bare diagonal plus ``(strength, left, A_i, mid, A_j, right)`` per coupling."""
    bases = [mode_basis(m.params, d) for m, d in zip(spec.modes, dims)]
    diag = np.zeros(1)
    for b in bases:
        diag = np.add.outer(diag, b.energies).ravel()
    terms = []
    for c in spec.couplings:
        i, j = sorted((spec.index(c.first), spec.index(c.second)))
        # (i A_i)(i A_j) = -A_i A_j
        terms.append((-c.strength, int(np.prod(dims[:i])), bases[i].coupler,
                      int(np.prod(dims[i + 1:j])), bases[j].coupler,
                      int(np.prod(dims[j + 1:]))))
    return diag, terms


def _hamiltonian_matrix(spec: SystemSpec, dims) -> np.ndarray:
    dims = _check_dims(spec, dims)
    diag, terms = _terms(spec, dims)
    h = np.zeros((diag.size, diag.size))
    for g, left, a, mid, b, right in terms:
        h += g * _kron_chain([np.eye(left), a, np.eye(mid), b, np.eye(right)])
    h[np.diag_indices(diag.size)] += diag
    return h


def _hamiltonian_sparse(spec: SystemSpec, dims) -> sps.csr_matrix:
    dims = _check_dims(spec, dims)
    diag, terms = _terms(spec, dims)
    h = sps.diags(diag, format="csr")
    for g, left, a, mid, b, right in terms:
        t = sps.kron(sps.kron(sps.identity(left), a), sps.identity(mid))
        t = sps.kron(sps.kron(t, b), sps.identity(right))
        h = h + g * t
    return h.tocsr()


def build_hamiltonian(spec: SystemSpec, dims: Sequence[int]) -> Operator:
    """Composite Hamiltonian in the product of truncated mode eigenbases.

    Parameters
    ----------
    spec : SystemSpec
    dims : sequence of int
        Number of kept levels per mode, in mode order.
    """
    return Operator(_hamiltonian_matrix(spec, dims), Basis.PRODUCT)


def exchange_coupling(g_c: float, first: CircuitParams, second: CircuitParams) -> float:
    """Ladder-form exchange rate equivalent to a charge-charge coupling.

    With ``n = i (a^dag - a) / (2 phi_zpf)`` for each mode,
    ``g_c n_1 n_2 = -J (a^dag - a)(b^dag - b)`` where
    ``J = g_c / (4 phi_zpf,1 phi_zpf,2)``.
    """
    return g_c / (4.0 * phi_zpf(first) * phi_zpf(second))


# ------------------------------------------------------------------ labels

def label_states(eig: EigenResult, dims: Sequence[int], k: int,
                 mode_names: Sequence[str] | None = None,
                 threshold: float = LABEL_THRESHOLD, strict: bool = True,
                 info: Mapping | None = None) -> LabeledSpectrum:
    """Greedy one-to-one assignment of bare product labels to eigenstates.

    Eigenstates are processed in ascending energy; each takes the unassigned
    bare state with the largest overlap ``|<bare|dressed>|^2``. Overlaps
    within 1e-9 of the best are resolved in favour of the lexicographically
    smallest label.

    Raises
    ------
    LabelAmbiguous
        If ``strict`` and some state's best overlap is below ``threshold``.
        The complete greedy assignment is attached as ``spectrum``.
    """
    dims = tuple(int(d) for d in dims)
    vecs = np.asarray(eig.eigenvectors)
    if vecs.shape[0] != int(np.prod(dims)):
        raise ShapeError(f"eigenvectors of length {vecs.shape[0]} do not match dims {dims}")
    if not 1 <= k <= vecs.shape[1]:
        raise InvalidDimension(f"cannot label {k} states from {vecs.shape[1]} eigenpairs")
    if mode_names is None:
        mode_names = tuple(f"m{i}" for i in range(len(dims)))
    weights = np.abs(vecs[:, :k]) ** 2
    taken = np.zeros(weights.shape[0], dtype=bool)
    levels = []
    ambiguous = False
    for s in range(k):
        col = np.where(taken, -1.0, weights[:, s])
        best = col.max()
        # rows are in C order, so the smallest index is the smallest label
        row = int(np.flatnonzero(col >= best - TIE_TOL)[0])
        taken[row] = True
        if best < threshold:
            ambiguous = True
        label = tuple(int(x) for x in np.unravel_index(row, dims))
        levels.append(Level(label, float(eig.eigenvalues[s]), float(weights[row, s])))
    meta = dict(info or {})
    meta.setdefault("labeling", "greedy-ascending-max-overlap")
    spectrum = LabeledSpectrum(tuple(mode_names), tuple(levels), dims, ambiguous, meta)
    if ambiguous and strict:
        raise LabelAmbiguous("a dressed state has no bare state with overlap >= "
                             f"{threshold}", spectrum=spectrum)
    return spectrum


# ----------------------------------------------------------- diagonalizing

def _solve(spec: SystemSpec, dims, k: int, vectors: bool = True) -> EigenResult:
    total = int(np.prod(_check_dims(spec, dims)))
    k = min(k, total)
    if total >= SPARSE_MIN and k + SPARSE_EXTRA < total // 2:
        return _solve_sparse(spec, dims, k)
    h = _hamiltonian_matrix(spec, dims)
    try:
        if vectors:
            return eigh(Operator._wrap(h), k)
        w = scipy.linalg.eigh(h, subset_by_index=[0, k - 1], eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    return EigenResult(w, np.empty((h.shape[0], 0)))


def _solve_sparse(spec: SystemSpec, dims, k: int) -> EigenResult:
    """Lowest ``k`` pairs by a preconditioned block solver (LOBPCG).

    The block starts on the lowest bare product states, so exactly degenerate
    levels are all found; a few extra columns guard the window edge. The
    perturbation of the start block uses a fixed seed, keeping runs
    reproducible. If the residual bound is missed, the dense solver is used.
    """
    h = _hamiltonian_sparse(spec, dims)
    n = h.shape[0]
    m = k + SPARSE_EXTRA
    d = h.diagonal()
    start = np.argsort(d, kind="stable")[:m]
    x = np.zeros((n, m))
    x[start, np.arange(m)] = 1.0
    x += 1e-3 * np.random.default_rng(0).standard_normal(x.shape)
    precond = sps.diags(1.0 / (d - d.min() + 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            w, v = spla.lobpcg(h, x, M=precond, largest=False, tol=1e-12, maxiter=500)
        except (np.linalg.LinAlgError, ValueError):
            w = v = None
    if w is not None:
        order = np.argsort(w, kind="stable")[:k]
        w, v = w[order], v[:, order]
        res = np.linalg.norm(h @ v - v * w, axis=0)
        if np.max(res) <= 1e-9 * spla.norm(h):
            return EigenResult(w, v)
    return eigh(Operator._wrap(h.toarray()), k)


def _meta(spec: SystemSpec) -> dict:
    nl = spec.nonlinear_names
    return {"qubits": nl[:2] if len(nl) >= 2 else None,
            "primary": nl[0] if nl else spec.names[0]}


def start_dims(spec: SystemSpec, dims: Sequence[int] | None = None) -> tuple:
    if dims is not None:
        return _check_dims(spec, dims)
    out = []
    for m in spec.modes:
        if m.dim_hint:
            out.append(int(m.dim_hint))
        else:
            out.append(START_NONLINEAR if m.params.nonlinear else START_LINEAR)
    return tuple(out)


def _steps(spec: SystemSpec) -> tuple:
    return tuple(STEP_NONLINEAR if m.params.nonlinear else STEP_LINEAR for m in spec.modes)


def solve(spec: SystemSpec, dims: Sequence[int], k: int = DEFAULT_K,
          threshold: float = LABEL_THRESHOLD, strict: bool = False) -> LabeledSpectrum:
    """Labeled spectrum at a fixed truncation (no convergence loop)."""
    dims = _check_dims(spec, dims)
    k = min(int(k), int(np.prod(dims)))
    eig = _solve(spec, dims, k)
    return label_states(eig, dims, k, spec.names, threshold, strict,
                        info={**_meta(spec), "dims": dims, "converged": None})


def converge_dims(spec: SystemSpec, k: int = DEFAULT_K, tol: float = DEFAULT_TOL,
                  dims: Sequence[int] | None = None, max_rounds: int = MAX_ROUNDS):
    """Grow the truncation until the ``k`` lowest eigenvalues are stable.

    Each round bumps every mode separately (nonlinear modes by 2 levels,
    linear modes by 2 Fock states). Modes whose bump moves any of the ``k``
    lowest eigenvalues by ``tol`` or more are enlarged; the loop ends when no
    single bump does.

    Returns
    -------
    dims : tuple of int
    rounds : int
    delta : float
        Largest eigenvalue change among the bumps of the final round.
    """
    if k < 1:
        raise InvalidDimension("k must be >= 1")
    if not tol > 0:
        raise InvalidParams("tol must be positive")
    dims = start_dims(spec, dims)
    steps = _steps(spec)
    while int(np.prod(dims)) < k:
        dims = tuple(d + s for d, s in zip(dims, steps))
    cache = {}

    def values(ds):
        if ds not in cache:
            cache[ds] = _solve(spec, ds, k, vectors=False).eigenvalues[:k]
        return cache[ds]

    delta = float("inf")
    for rounds in range(1, max_rounds + 1):
        base = values(dims)
        changes = []
        for i, s in enumerate(steps):
            trial = tuple(d + (s if j == i else 0) for j, d in enumerate(dims))
            changes.append(float(np.max(np.abs(values(trial) - base))))
        delta = max(changes)
        if delta < tol:
            return dims, rounds, delta
        dims = tuple(d + (s if c >= tol else 0) for d, s, c in zip(dims, steps, changes))
    raise TruncationNotConverged(
        f"truncation not converged after {max_rounds} rounds (last change {delta:.3g} GHz)",
        last_delta=delta, dims=dims)


def diagonalize_converged(spec: SystemSpec, k: int = DEFAULT_K, tol: float = DEFAULT_TOL,
                          dims: Sequence[int] | None = None, max_rounds: int = MAX_ROUNDS,
                          threshold: float = LABEL_THRESHOLD,
                          strict: bool = False) -> LabeledSpectrum:
    """Labeled spectrum at a truncation where the lowest ``k`` levels are stable.

    ``info`` of the result records the final ``dims``, the number of
    ``rounds`` and the last eigenvalue change ``delta``. Ambiguous labels are
    flagged on the result; pass ``strict=True`` to raise instead.
    """
    dims, rounds, delta = converge_dims(spec, k, tol, dims, max_rounds)
    eig = _solve(spec, dims, k)
    return label_states(eig, dims, k, spec.names, threshold, strict,
                        info={**_meta(spec), "dims": dims, "rounds": rounds, "delta": delta,
                              "tol": tol, "converged": True})
