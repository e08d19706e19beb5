"""Single-mode circuit Hamiltonians and classical potential analysis.

Energies are in GHz (h = 1) and the external flux is carried as a reduced
phase ``phi_e = 2 pi Phi / Phi_0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DegeneratePotential, InvalidDimension, InvalidParams
from .hilbert import Basis, Operator, make_charge_basis, make_ladder

FOCK_PAD = 10


class ModeKind(enum.Enum):
    IST = "ist"
    TRANSMON = "transmon"
    LINEAR = "linear"


def flux_to_phase(flux: float) -> float:
    """Reduced external phase for a flux given in units of the flux quantum."""
    return 2.0 * math.pi * flux


@dataclass(frozen=True)
class CircuitParams:
    """Parameters of one circuit mode.

    Parameters
    ----------
    kind : ModeKind
    E_C, E_J, E_L : float
        Charging, Josephson (total) and inductive energies in GHz.
    d : float
        DC-SQUID junction asymmetry of a tunable transmon, in [0, 1].
    omega : float
        Frequency of a linear mode in GHz.
    phi_e : float
        Reduced external flux in radians.
    """

    kind: ModeKind
    E_C: float = 0.0
    E_J: float = 0.0
    E_L: float = 0.0
    d: float = 0.0
    omega: float = 0.0
    phi_e: float = 0.0

    def __post_init__(self):
        kind = self.kind
        if isinstance(kind, str):
            try:
                kind = ModeKind(kind.lower())
            except ValueError:
                raise InvalidParams(f"unknown mode kind {self.kind!r}") from None
            object.__setattr__(self, "kind", kind)
        if not isinstance(kind, ModeKind):
            raise InvalidParams(f"unknown mode kind {kind!r}")
        for name in ("E_C", "E_J", "E_L", "d", "omega", "phi_e"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidParams(f"{name} must be a number") from None
            if not math.isfinite(value):
                raise InvalidParams(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if kind is ModeKind.LINEAR:
            if self.omega <= 0:
                raise InvalidParams("linear mode needs omega > 0")
            return
        if self.E_C <= 0:
            raise InvalidParams("E_C must be positive")
        if self.E_J < 0:
            raise InvalidParams("E_J must be non-negative")
        if kind is ModeKind.IST and self.E_L <= 0:
            raise InvalidParams("IST needs E_L > 0")
        if kind is ModeKind.TRANSMON:
            if self.E_J <= 0:
                raise InvalidParams("transmon needs E_J > 0")
            if not 0.0 <= self.d <= 1.0:
                raise InvalidParams("asymmetry d must lie in [0, 1]")

    @classmethod
    def ist(cls, E_C, E_J, E_L, flux=0.5):
        return cls(ModeKind.IST, E_C=E_C, E_J=E_J, E_L=E_L, phi_e=flux_to_phase(flux))

    @classmethod
    def transmon(cls, E_C, E_J, d=0.0, flux=0.0):
        return cls(ModeKind.TRANSMON, E_C=E_C, E_J=E_J, d=d, phi_e=flux_to_phase(flux))

    @classmethod
    def linear(cls, omega):
        return cls(ModeKind.LINEAR, omega=omega)

    @property
    def flux(self) -> float:
        """External flux in units of the flux quantum."""
        return self.phi_e / (2.0 * math.pi)

    @property
    def single_well(self) -> bool:
        """True when E_L > E_J (recorded, never enforced)."""
        return self.kind is ModeKind.IST and self.E_L > self.E_J

    @property
    def nonlinear(self) -> bool:
        return self.kind is not ModeKind.LINEAR

    def at_flux(self, flux: float) -> "CircuitParams":
        return replace(self, phi_e=flux_to_phase(flux))

    def with_values(self, **values) -> "CircuitParams":
        return replace(self, **values)


class PotentialExpansion(NamedTuple):
    phi_min: float
    omega_h: float
    phi_zpf: float
    c3: float
    c4: float
    k2: float


class ModeOperators(NamedTuple):
    """Hamiltonian of one mode plus the operator it couples through."""

    hamiltonian: Operator
    charge: Operator
    phase: Operator | None = None


def _require(p: CircuitParams, kind: ModeKind):
    if not isinstance(p, CircuitParams) or p.kind is not kind:
        raise InvalidParams(f"expected {kind.value} parameters")


def _ist_force(p: CircuitParams, phi):
    return p.E_J * np.sin(phi + p.phi_e) + p.E_L * phi


def _ist_potential(p: CircuitParams, phi):
    return -p.E_J * np.cos(phi + p.phi_e) + 0.5 * p.E_L * phi ** 2


def potential_expansion(p: CircuitParams, n_scan: int = 64) -> PotentialExpansion:
    """Taylor expansion of the IST potential around its lowest minimum.

    Stationary points are bracketed by a sign-change scan of ``U'`` and
    polished with Brent's method. Every stationary point satisfies
    ``|phi| <= E_J / E_L``, so the scan covers ``[-pi, pi]`` widened to
    that bound when needed.

    Raises
    ------
    DegeneratePotential
        If no stationary point with positive curvature is found.
    """
    _require(p, ModeKind.IST)
    half = max(math.pi, p.E_J / p.E_L + 0.1)
    n = int(n_scan * math.ceil(half / math.pi))
    grid = np.linspace(-half, half, n + 1)
    f = _ist_force(p, grid)
    roots = []
    for i in range(n):
        lo, hi = grid[i], grid[i + 1]
        if f[i] == 0.0:
            roots.append(lo)
        elif f[i] * f[i + 1] < 0.0:
            roots.append(brentq(lambda x: _ist_force(p, x), lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    if f[-1] == 0.0:
        roots.append(grid[-1])
    minima = [r for r in roots if p.E_J * math.cos(r + p.phi_e) + p.E_L > 0.0]
    if not minima:
        raise DegeneratePotential("no confining minimum of the IST potential")
    phi_min = min(minima, key=lambda r: (_ist_potential(p, r), abs(r)))
    c, s = math.cos(phi_min + p.phi_e), math.sin(phi_min + p.phi_e)
    k2 = p.E_J * c + p.E_L
    if k2 <= 0.0:
        raise DegeneratePotential("non-positive curvature at the minimum")
    zpf = (2.0 * p.E_C / k2) ** 0.25
    c3 = (-p.E_J * s) * zpf ** 3 / 6.0
    c4 = (-p.E_J * c) * zpf ** 4 / 24.0
    return PotentialExpansion(phi_min, math.sqrt(8.0 * p.E_C * k2), zpf, c3, c4, k2)


def ist_operators(p: CircuitParams, dim: int, center: float | None = None,
                  pad: int = FOCK_PAD) -> ModeOperators:
    """IST Hamiltonian, charge and phase operators in a displaced Fock basis.

    ``phi = center + phi_zpf (a + a^dag)`` with ``phi_zpf`` from the harmonic
    confinement at the potential minimum. Products and the cosine are formed
    in ``dim + pad`` levels and cropped so the edge of the returned block is
    not polluted by truncation.
    """
    _require(p, ModeKind.IST)
    if int(dim) != dim or dim < 4:
        raise InvalidParams(f"IST truncation needs dim >= 4, got {dim}")
    dim = int(dim)
    exp = potential_expansion(p)
    if center is None:
        center = exp.phi_min
    z = exp.phi_zpf
    big = dim + int(pad)
    a = make_ladder(big).matrix
    x = z * (a + a.T)
    phi = x + center * np.eye(big)
    # n = i (a^dag - a) / 2z, so n^2 = -(a^dag - a)^2 / 4z^2 is real
    m = a.T - a
    n2 = -(m @ m) / (4.0 * z * z)
    w, v = np.linalg.eigh(phi)
    cos = (v * np.cos(w + p.phi_e)) @ v.T
    h = 4.0 * p.E_C * n2 - p.E_J * cos + 0.5 * p.E_L * (phi @ phi)
    h = h[:dim, :dim]
    h = 0.5 * (h + h.T)
    n = 1j * m[:dim, :dim] / (2.0 * z)
    return ModeOperators(Operator(h, Basis.FOCK), Operator(n, Basis.FOCK),
                         Operator(phi[:dim, :dim], Basis.FOCK))


def ist_hamiltonian(p: CircuitParams, dim: int, center: float | None = None) -> Operator:
    """``4 E_C n^2 - E_J cos(phi + phi_e) + E_L phi^2 / 2`` in a Fock basis."""
    return ist_operators(p, dim, center).hamiltonian


def ej_effective(p: CircuitParams) -> float:
    """Flux-tuned Josephson energy of an asymmetric DC SQUID."""
    _require(p, ModeKind.TRANSMON)
    half = 0.5 * p.phi_e
    return p.E_J * math.sqrt(math.cos(half) ** 2 + (p.d * math.sin(half)) ** 2)


def transmon_operators(p: CircuitParams, n_max: int) -> ModeOperators:
    """Cooper-pair-box Hamiltonian and charge operator at zero offset charge."""
    _require(p, ModeKind.TRANSMON)
    n, cos = make_charge_basis(n_max)
    h = 4.0 * p.E_C * (n.matrix @ n.matrix) - ej_effective(p) * cos.matrix
    return ModeOperators(Operator(h, Basis.CHARGE), n, None)


def transmon_hamiltonian(p: CircuitParams, n_max: int) -> Operator:
    """``4 E_C n^2 - E_J,eff cos(phi)`` in the charge basis."""
    return transmon_operators(p, n_max).hamiltonian


def linear_hamiltonian(omega: float, dim: int) -> Operator:
    """``omega c^dag c`` truncated to ``dim`` levels."""
    if not omega > 0:
        raise InvalidParams("omega must be positive")
    if int(dim) != dim or dim < 1:
        raise InvalidDimension(f"dim must be >= 1, got {dim}")
    return Operator(np.diag(omega * np.arange(int(dim), dtype=float)), Basis.FOCK)


def transmon_phi_zpf(p: CircuitParams) -> float:
    """``(2 E_C / E_J,eff)^(1/4)``."""
    ej = ej_effective(p)
    if ej <= 0.0:
        raise DegeneratePotential("transmon has no Josephson confinement at this flux")
    return (2.0 * p.E_C / ej) ** 0.25


def phi_zpf(p: CircuitParams) -> float:
    """Phase zero-point amplitude of a nonlinear mode at its current flux."""
    if p.kind is ModeKind.IST:
        return potential_expansion(p).phi_zpf
    if p.kind is ModeKind.TRANSMON:
        return transmon_phi_zpf(p)
    raise InvalidParams("linear modes have no phase zero-point amplitude")
