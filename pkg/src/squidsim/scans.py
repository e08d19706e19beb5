"""Flux sweeps and parameter scans with deterministic parallel dispatch."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .circuits import ModeKind
from .composite import (DEFAULT_K, DEFAULT_TOL, LabeledSpectrum, SystemSpec, converge_dims,
                        solve)
from .errors import ConfigError, InvalidParams, LabelMissing, SquidsimError
from .observables import anharmonicity, frequency, transition_table, zz_shift


def parse_range(text: str) -> np.ndarray:
    """``"a:b:n"`` -> ``linspace(a, b, n)``; a bare number gives one point."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) != 3:
            raise ValueError
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"range must look like a:b:n, got {text!r}") from None
    if n < 2 or not a < b:
        raise ConfigError(f"range needs n >= 2 and a < b, got {text!r}")
    return np.linspace(a, b, n)


def pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Map ``fn`` over ``items``; results are ordered by index, not completion."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def sweep_dims(spec: SystemSpec, flux_mode: str, fluxes: Sequence[float],
               k: int = DEFAULT_K, tol: float = DEFAULT_TOL) -> tuple:
    """One truncation for a whole sweep: the largest needed at a few probe fluxes."""
    fl = np.sort(np.asarray(fluxes, dtype=float))
    idx = sorted({0, len(fl) // 4, len(fl) // 2, (3 * len(fl)) // 4, len(fl) - 1})
    dims = None
    for i in idx:
        d = converge_dims(spec.at_flux(flux_mode, float(fl[i])), k, tol)[0]
        dims = d if dims is None else tuple(max(x, y) for x, y in zip(dims, d))
    return dims


def _flux_mode(spec: SystemSpec, flux_mode: str | None) -> str:
    if flux_mode is not None:
        return flux_mode
    for kind in (ModeKind.IST, ModeKind.TRANSMON):
        for m in spec.modes:
            if m.kind is kind:
                return m.name
    raise InvalidParams("system has no flux-tunable mode")


# --------------------------------------------------------------- spectra

@dataclass(frozen=True)
class SpectrumRow:
    flux: float
    transition: str
    frequency: float
    overlap: float


def spectrum_sweep(spec: SystemSpec, fluxes: Sequence[float], flux_mode: str | None = None,
                   k: int = DEFAULT_K, tol: float = DEFAULT_TOL, sidebands: bool = False,
                   dims: Sequence[int] | None = None, threads: int = 1) -> list:
    """Transition tables along a flux grid, flattened to rows.

    A point whose diagonalization fails contributes a single row with
    ``nan`` frequency and a warning.
    """
    flux_mode = _flux_mode(spec, flux_mode)
    fluxes = [float(f) for f in fluxes]
    if dims is None:
        dims = sweep_dims(spec, flux_mode, fluxes, k, tol)

    def point(f):
        try:
            lab = solve(spec.at_flux(flux_mode, f), dims, k)
            table = transition_table(lab, include_sidebands=sidebands, primary=flux_mode, flux=f)
            return [SpectrumRow(f, t.name, t.frequency, t.overlap) for t in table]
        except SquidsimError as exc:
            warnings.warn(f"flux {f:.9g}: {exc}")
            return [SpectrumRow(f, "01", math.nan, math.nan)]

    return [row for rows in pmap(point, fluxes, threads) for row in rows]


# ---------------------------------------------------------------- ZZ sweep

@dataclass(frozen=True)
class ZZSweep:
    """ZZ shift along a flux grid.

    ``ranks`` holds, per point, the energy ranks of the labels 00, 10, 01, 11
    of the two qubits; a change between neighbours marks a level crossing
    involving one of these states.
    """

    flux: np.ndarray
    qubit_freq: np.ndarray
    zeta: np.ndarray
    ambiguous: np.ndarray
    ranks: tuple
    dims: tuple

    def crossings(self) -> list:
        """Index pairs ``(i, i+1)`` between which a labeled level crossing occurs."""
        return [(i, i + 1) for i in range(len(self.flux) - 1) if self.ranks[i] != self.ranks[i + 1]]

    def sign_changes(self, lo: float = -math.inf, hi: float = math.inf,
                     skip_crossings: bool = True) -> list:
        """Flux values (linear interpolation) where ZZ changes sign.

        Sign flips across a labeled level crossing are poles of the ZZ shift
        rather than zeros and are skipped unless ``skip_crossings`` is false.
        """
        out = []
        z, f = self.zeta, self.flux
        for i in range(len(f) - 1):
            if not (lo <= f[i] and f[i + 1] <= hi):
                continue
            if not (np.isfinite(z[i]) and np.isfinite(z[i + 1])):
                continue
            if skip_crossings and self.ranks[i] != self.ranks[i + 1]:
                continue
            if z[i] == 0.0:
                out.append(float(f[i]))
            elif z[i] * z[i + 1] < 0.0:
                out.append(float(f[i] - z[i] * (f[i + 1] - f[i]) / (z[i + 1] - z[i])))
        if len(f) and np.isfinite(z[-1]) and z[-1] == 0.0 and lo <= f[-1] <= hi:
            out.append(float(f[-1]))
        return out


def _zz_point(spec: SystemSpec, qubits, dims, k):
    lab = solve(spec, dims, k)
    a, b = qubits
    labels = [{}, {a: 1}, {b: 1}, {a: 1, b: 1}]
    ranks = tuple(lab.rank(x) for x in labels)
    return zz_shift(lab, qubits), frequency(lab, a), lab.ambiguous, ranks


def zz_sweep(spec: SystemSpec, fluxes: Sequence[float], qubits: Sequence[str] | None = None,
             flux_mode: str | None = None, k: int = DEFAULT_K, tol: float = DEFAULT_TOL,
             dims: Sequence[int] | None = None, threads: int = 1) -> ZZSweep:
    """ZZ shift of two qubits while the flux of ``flux_mode`` is swept.

    The truncation is converged once over probe fluxes (see
    :func:`sweep_dims`) and shared by all points. ``qubit_freq`` is the
    dressed 0-1 frequency of the first qubit.
    """
    flux_mode = _flux_mode(spec, flux_mode)
    if qubits is None:
        qubits = spec.nonlinear_names[:2]
    qubits = tuple(qubits)
    if len(qubits) != 2:
        raise InvalidParams("a ZZ sweep needs exactly two qubit modes")
    fluxes = [float(f) for f in fluxes]
    if dims is None:
        dims = sweep_dims(spec, flux_mode, fluxes, k, tol)
    dims = tuple(dims)

    def point(f):
        try:
            return _zz_point(spec.at_flux(flux_mode, f), qubits, dims, k)
        except (LabelMissing, SquidsimError) as exc:
            warnings.warn(f"flux {f:.9g}: {exc}")
            return math.nan, math.nan, True, (-1, -1, -1, -1)

    res = pmap(point, fluxes, threads)
    return ZZSweep(np.array(fluxes), np.array([r[1] for r in res]),
                   np.array([r[0] for r in res]), np.array([r[2] for r in res], dtype=bool),
                   tuple(r[3] for r in res), dims)


# ------------------------------------------------------------ 2-D scans

@dataclass(frozen=True)
class ScanRow:
    ej_ratio: float
    ec_ratio: float
    zeta: float
    delta: float
    alpha: float
    ambiguous: bool


def zz_scan2d(spec: SystemSpec, ej_ratios: Sequence[float], ec_ratios: Sequence[float],
              flux: float = 0.5, qubits: Sequence[str] | None = None,
              k: int = DEFAULT_K, tol: float = DEFAULT_TOL, threads: int = 1) -> list:
    """ZZ shift over IST ``E_J`` and ``E_C`` given as ratios to the partner qubit.

    The first qubit (an IST) is rescaled to ``E_J = r_J E_J,partner`` and
    ``E_C = r_C E_C,partner`` and held at ``flux``. Detuning and IST
    anharmonicity come from the uncoupled system. Rows are ordered with the
    ``E_C`` ratio as the slow index.
    """
    if qubits is None:
        qubits = spec.nonlinear_names[:2]
    a, b = qubits
    if spec.mode(a).kind is not ModeKind.IST:
        raise InvalidParams("the scanned qubit must be an IST")
    partner = spec.mode(b).params
    base = spec.at_flux(a, flux)
    grid = [(float(rj), float(rc)) for rc in ec_ratios for rj in ej_ratios]

    def point(pt):
        rj, rc = pt
        try:
            p = replace(base.mode(a).params, E_J=rj * partner.E_J, E_C=rc * partner.E_C)
            s = base.with_params(a, p)
            lab = solve(s, converge_dims(s, k, tol)[0], k)
            bare = s.with_coupling(a, b, 0.0)
            lab0 = solve(bare, converge_dims(bare, k, tol)[0], k)
            delta = frequency(lab0, a) - frequency(lab0, b)
            return ScanRow(rj, rc, zz_shift(lab, (a, b)), delta, anharmonicity(lab0, a),
                           lab.ambiguous)
        except (LabelMissing, SquidsimError) as exc:
            warnings.warn(f"E_J ratio {rj:.9g}, E_C ratio {rc:.9g}: {exc}")
            return ScanRow(rj, rc, math.nan, math.nan, math.nan, True)

    return pmap(point, grid, threads)
