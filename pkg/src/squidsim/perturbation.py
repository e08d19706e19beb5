"""Closed-form perturbative results and the exact references they are tested against.

Covers the dispersive cross-Kerr of two coupled Duffing oscillators, the
sweet-spot expansion of the IST, and the cubic-nonlinearity sideband
couplings obtained from a Schrieffer-Wolff generator
``S = d (a - a^dag) + p (a^dag a^dag a - a^dag a a) + q (a^dag b - a b^dag)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np

from .circuits import CircuitParams, ModeKind
from .errors import DegenerateDetuning, DriveOnResonance, InvalidParams, QuartonRegime

# -------------------------------------------------------------- Duffing ZZ


@dataclass(frozen=True)
class DuffingPair:
    """Two Kerr oscillators with exchange coupling ``J (a^dag b + a b^dag)``."""

    omega1: float
    omega2: float
    alpha1: float
    alpha2: float
    J: float

    @property
    def delta(self) -> float:
        return self.omega1 - self.omega2


def duffing_zz(p: DuffingPair) -> float:
    """Second-order cross-Kerr ``2 J^2 (alpha1 + alpha2) / Delta^2``."""
    if p.delta == 0:
        raise DegenerateDetuning("oscillators are degenerate")
    return 2.0 * p.J ** 2 * (p.alpha1 + p.alpha2) / p.delta ** 2


def _rank_pick(values, bare, target):
    """Eigenvalue continuously connected to bare level ``target``."""
    order = sorted(range(len(bare)), key=lambda i: bare[i])
    return sorted(values)[order.index(target)]


def duffing_exact_zz(p: DuffingPair, dps: int = 50) -> float:
    """Exact ZZ shift of a Duffing pair in extended precision.

    The exchange coupling conserves the total excitation number, so the
    one- and two-excitation blocks (2x2 and 3x3) are diagonalized directly.
    Eigenvalues inside a block never cross, which lets each dressed level be
    identified by the rank of its bare energy.
    """
    if p.delta == 0:
        raise DegenerateDetuning("oscillators are degenerate")
    with mpmath.workdps(dps):
        w1, w2, a1, a2, J = (mpmath.mpf(x) for x in
                             (p.omega1, p.omega2, p.alpha1, p.alpha2, p.J))
        r2 = mpmath.sqrt(2)
        one = mpmath.matrix([[w1, J], [J, w2]])
        two = mpmath.matrix([[2 * w1 + a1, r2 * J, 0],
                             [r2 * J, w1 + w2, r2 * J],
                             [0, r2 * J, 2 * w2 + a2]])
        e1 = list(mpmath.eigsy(one, eigvals_only=True))
        e2 = list(mpmath.eigsy(two, eigvals_only=True))
        e10 = _rank_pick(e1, [w1, w2], 0)
        e01 = _rank_pick(e1, [w1, w2], 1)
        e11 = _rank_pick(e2, [2 * w1 + a1, w1 + w2, 2 * w2 + a2], 1)
        return float(e11 - e10 - e01)


def duffing_hamiltonian(p: DuffingPair, dim: int) -> np.ndarray:
    """Dense Duffing-pair Hamiltonian on ``dim x dim`` Fock levels."""
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    eye = np.eye(dim)
    n = a.T @ a
    kerr = a.T @ a.T @ a @ a
    h1 = p.omega1 * n + 0.5 * p.alpha1 * kerr
    h2 = p.omega2 * n + 0.5 * p.alpha2 * kerr
    hop = np.kron(a.T, a)
    return np.kron(h1, eye) + np.kron(eye, h2) + p.J * (hop + hop.T)


# ------------------------------------------------------------ sweet spots

class SweetSpot(enum.Enum):
    HALF_FLUX = "half"
    ZERO_FLUX = "zero"


class SweetSpotEstimate(NamedTuple):
    omega01: float
    alpha: float
    phi_zpf: float


def sweet_spot_formulas(p: CircuitParams, which: SweetSpot | str = SweetSpot.HALF_FLUX
                        ) -> SweetSpotEstimate:
    """First-order quartic estimates of the IST at a flux sweet spot.

    With ``k = E_L -/+ E_J`` (half / zero flux) the quartic term
    ``+/- E_J phi^4 / 24`` shifts the oscillator levels, giving
    ``omega01 = sqrt(8 E_C k) +/- E_C E_J / k`` and ``alpha = +/- E_C E_J / k``.
    """
    if isinstance(which, str):
        which = SweetSpot(which)
    if p.kind is not ModeKind.IST:
        raise InvalidParams("sweet-spot formulas apply to the IST")
    if which is SweetSpot.HALF_FLUX:
        k = p.E_L - p.E_J
        if k <= 0:
            raise QuartonRegime("E_L <= E_J: the quartic term is not a perturbation")
        sign = 1.0
    else:
        k = p.E_L + p.E_J
        sign = -1.0
    shift = sign * p.E_C * p.E_J / k
    return SweetSpotEstimate(math.sqrt(8.0 * p.E_C * k) + shift, shift,
                             (2.0 * p.E_C / k) ** 0.25)


# ------------------------------------------------------------- sidebands

@dataclass(frozen=True)
class SidebandInputs:
    """IST (mode a) with cubic term ``c3 (a + a^dag)^3`` coupled to mode b.

    ``beta`` is the anharmonicity of mode b; it does not enter the sideband
    strengths and is carried for completeness.
    """

    omega_a: float
    omega_b: float
    alpha: float
    c3: float
    J: float
    beta: float = 0.0

    @property
    def delta(self) -> float:
        return self.omega_a - self.omega_b

    def check(self):
        if self.omega_a == 0:
            raise DegenerateDetuning("omega_a must be nonzero")
        if self.omega_a == self.alpha:
            raise DegenerateDetuning("omega_a equals alpha")
        if self.delta == 0:
            raise DegenerateDetuning("omega_a equals omega_b")


class SWCoefficients(NamedTuple):
    d: float
    p: float
    q: float


class SidebandStrengths(NamedTuple):
    M1: float
    M2: float
    M1_closed: float
    M2_closed: float
    closed_form_rel_diff: float


def sw_coefficients(s: SidebandInputs) -> SWCoefficients:
    """Generator coefficients ``d = -3 c3 / w_a``,
    ``p = -2 c3 (1 - 3 alpha / (2 w_a)) / (w_a - alpha)`` and ``q = J / Delta``.
    """
    s.check()
    wa, al = s.omega_a, s.alpha
    d = -3.0 * s.c3 / wa
    p = -2.0 * s.c3 * (1.0 - 1.5 * al / wa) / (wa - al)
    return SWCoefficients(d, p, s.J / s.delta)


def cancelling_coefficients(s: SidebandInputs) -> SWCoefficients:
    """Coefficients that null the first-order terms exactly.

    ``d`` and ``q`` agree with :func:`sw_coefficients`. Nulling the
    ``a^dag a^dag a + a^dag a a`` term requires ``p = (3 c3 + d alpha) /
    (w_a + alpha)``, which differs from the value used for the sideband
    strengths; see :func:`sw_residuals`.
    """
    s.check()
    if s.omega_a == -s.alpha:
        raise DegenerateDetuning("omega_a equals -alpha")
    d = -3.0 * s.c3 / s.omega_a
    p = (3.0 * s.c3 + d * s.alpha) / (s.omega_a + s.alpha)
    return SWCoefficients(d, p, s.J / s.delta)


def _closed_forms(s: SidebandInputs):
    wa, al, dl = s.omega_a, s.alpha, s.delta
    pref = s.c3 * s.J / dl
    m1 = 2.0 * pref * ((-3.0 * wa + dl + 2.0 * al) / (wa - al)
                       + 3.0 * al / wa * (1.0 + 0.5 * (wa - dl) / (wa - al)))
    m2 = pref * ((-6.0 * wa - dl + 5.0 * al) / (wa - al)
                 + 3.0 * al / wa * (1.0 + 0.5 * (wa + dl) / (wa - al)))
    return m1, m2


def sideband_strengths(s: SidebandInputs) -> SidebandStrengths:
    """Strengths of ``M1 a^dag a (b + b^dag)`` and ``M2 (a^dag^2 b + a^2 b^dag)``.

    The coefficient forms
    ``M1 = (2 w_a - w_b) p q - 4 c3 q - 2 J p - 2 alpha d q`` and
    ``M2 = w_b p q / 2 - 5 c3 q + J p - alpha d q`` are returned as ``M1``,
    ``M2``. The fully substituted fractions are evaluated alongside, and their
    largest relative deviation from the coefficient forms is reported.
    """
    d, p, q = sw_coefficients(s)
    wa, wb, al, c3, J = s.omega_a, s.omega_b, s.alpha, s.c3, s.J
    m1 = (2.0 * wa - wb) * p * q - 4.0 * c3 * q - 2.0 * J * p - 2.0 * al * d * q
    m2 = 0.5 * wb * p * q - 5.0 * c3 * q + J * p - al * d * q
    c1, c2 = _closed_forms(s)
    diffs = [abs(x - y) / abs(x) for x, y in ((m1, c1), (m2, c2)) if x != 0]
    return SidebandStrengths(m1, m2, c1, c2, max(diffs) if diffs else 0.0)


def sideband_drive_factor(s: SidebandInputs, Omega: float, omega_d: float,
                          omega_a_dressed: float) -> float:
    """Proportionality factor ``Omega / (w_d - w_a~) * (M1 + M2)`` of a driven sideband."""
    if omega_d == omega_a_dressed:
        raise DriveOnResonance("drive is resonant with the dressed IST")
    st = sideband_strengths(s)
    return Omega / (omega_d - omega_a_dressed) * (st.M1 + st.M2)


def sw_residuals(s: SidebandInputs, coeffs: SWCoefficients | None = None,
                 dim: int = 10) -> dict:
    """First-order terms left after the transformation, from explicit matrices.

    ``K = H1 + [S, H0]`` is built on ``dim x dim`` Fock levels, where ``H0``
    holds the two Kerr oscillators and ``H1 = c3 (a + a^dag)^3 + J (a^dag b
    + a b^dag)``. The returned coefficients multiply ``a + a^dag``
    (``linear``), ``a^dag a^dag a + a^dag a a`` (``cubic``) and
    ``a^dag b + a b^dag`` (``exchange``). All vanish for a generator that
    cancels the first-order Hamiltonian.
    """
    if coeffs is None:
        coeffs = sw_coefficients(s)
    d, p, q = coeffs
    a1 = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    eye = np.eye(dim)
    a = np.kron(a1, eye)
    b = np.kron(eye, a1)
    ad, bd = a.T, b.T
    h0 = (s.omega_a * ad @ a + 0.5 * s.alpha * ad @ ad @ a @ a
          + s.omega_b * bd @ b + 0.5 * s.beta * bd @ bd @ b @ b)
    x = a + ad
    h1 = s.c3 * x @ x @ x + s.J * (ad @ b + a @ bd)
    gen = d * (a - ad) + p * (ad @ ad @ a - ad @ a @ a) + q * (ad @ b - a @ bd)
    k = h1 + gen @ h0 - h0 @ gen

    def idx(m, n):
        return m * dim + n

    # <n+1,0|K|n,0> = sqrt(n+1) (linear + cubic n)
    v = [k[idx(n + 1, 0), idx(n, 0)] / math.sqrt(n + 1) for n in range(2)]
    return {"linear": float(v[0]), "cubic": float(v[1] - v[0]),
            "exchange": float(k[idx(1, 0), idx(0, 1)])}
