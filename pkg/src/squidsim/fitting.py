"""Parameter extraction from spectroscopy and dephasing data."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .circuits import CircuitParams, ModeKind
from .composite import DEFAULT_K, DEFAULT_TOL, SystemSpec, converge_dims, solve
from .errors import (ConfigError, FitDiverged, InsufficientLeverage, InvalidParams,
                     SquidsimError)
from .observables import flux_dispersion, transition_table

REL_STEP = 1e-6
ABS_STEP = 1e-8
SQRT_LN2 = math.sqrt(math.log(2.0))
# Gamma [1/us] = sqrt(ln 2) A_phi |d omega / d Phi| with omega in rad/us
RAD_PER_US_PER_GHZ = 2.0 * math.pi * 1e3


@dataclass(frozen=True)
class SpectroscopyPoint:
    flux: float
    transition: str
    frequency: float
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.flux) and math.isfinite(self.frequency)):
            raise InvalidParams("spectroscopy point must be finite")
        if self.frequency <= 0:
            raise InvalidParams("transition frequency must be positive")
        if not self.weight > 0:
            raise InvalidParams("weight must be positive")


@dataclass(frozen=True)
class FitResult:
    params: dict
    residual_rms: float
    uncertainties: dict
    n_evals: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"params": dict(self.params), "residual_rms": self.residual_rms,
                "uncertainties": dict(self.uncertainties), "n_evals": self.n_evals,
                "converged": self.converged, "diagnostics": self.diagnostics}


# ------------------------------------------------------- parameter access

_CIRCUIT_FIELDS = ("E_C", "E_J", "E_L", "d")


class SpectrumModel:
    """Maps named parameters onto a template system and predicts transitions.

    Names refer to the flux-tuned mode directly (``E_C``, ``E_J``, ``E_L``,
    ``d``), to a linear mode ``X`` as ``omega_X``, and to the coupling
    between the tuned mode and ``X`` as ``g_X``. Any other field is reachable
    as ``mode.field``.
    """

    def __init__(self, template: SystemSpec, flux_mode: str | None = None,
                 dims: Sequence[int] | None = None, k: int = DEFAULT_K):
        self.template = template
        if flux_mode is None:
            tunable = [m.name for m in template.modes if m.params.nonlinear]
            if not tunable:
                raise InvalidParams("template has no flux-tunable mode")
            flux_mode = tunable[0]
        self.flux_mode = flux_mode
        self.dims = None if dims is None else tuple(int(d) for d in dims)
        self.k = int(k)

    def _locate(self, name: str):
        if name in _CIRCUIT_FIELDS:
            return ("mode", self.flux_mode, name)
        if "." in name:
            mode, attr = name.split(".", 1)
            if mode in self.template.names:
                return ("mode", mode, attr)
        if name.startswith("omega_") and name[6:] in self.template.names:
            return ("mode", name[6:], "omega")
        if name.startswith("g_") and name[2:] in self.template.names:
            return ("coupling", self.flux_mode, name[2:])
        raise InvalidParams(f"unknown fit parameter {name!r}")

    def get(self, spec: SystemSpec, name: str) -> float:
        where = self._locate(name)
        if where[0] == "mode":
            return float(getattr(spec.mode(where[1]).params, where[2]))
        return float(spec.coupling(where[1], where[2]).strength)

    def apply(self, values: Mapping[str, float], spec: SystemSpec | None = None) -> SystemSpec:
        spec = self.template if spec is None else spec
        for name, value in values.items():
            where = self._locate(name)
            if where[0] == "mode":
                p = spec.mode(where[1]).params
                spec = spec.with_params(where[1], replace(p, **{where[2]: float(value)}))
            else:
                spec = spec.with_coupling(where[1], where[2], float(value))
        return spec

    def names_available(self) -> list:
        out = [f for f in _CIRCUIT_FIELDS]
        for c in self.template.couplings:
            other = {c.first, c.second} - {self.flux_mode}
            if len(other) == 1:
                out.append("g_" + other.pop())
        out += ["omega_" + m.name for m in self.template.modes if m.kind is ModeKind.LINEAR]
        return out

    def ensure_dims(self, spec: SystemSpec, fluxes: Sequence[float], tol: float = DEFAULT_TOL):
        """Fix the truncation from the extreme and central flux points."""
        if self.dims is not None:
            return self.dims
        fl = sorted(set(float(f) for f in fluxes))
        probes = sorted({fl[0], fl[-1], fl[len(fl) // 2]})
        dims = None
        for f in probes:
            d = converge_dims(spec.at_flux(self.flux_mode, f), self.k, tol)[0]
            dims = d if dims is None else tuple(max(x, y) for x, y in zip(dims, d))
        self.dims = dims
        return dims

    def predict(self, spec: SystemSpec, fluxes: Sequence[float],
                transitions: Sequence[str]) -> np.ndarray:
        """Model frequency of each ``(flux, transition)`` pair, in input order."""
        fluxes = np.asarray(fluxes, dtype=float)
        dims = self.ensure_dims(spec, fluxes)
        out = np.empty(len(fluxes))
        for f in np.unique(fluxes):
            sel = np.flatnonzero(fluxes == f)
            lab = solve(spec.at_flux(self.flux_mode, float(f)), dims, self.k)
            table = transition_table(lab, primary=self.flux_mode)
            for i in sel:
                out[i] = table.frequency(transitions[i])
        return out


# ----------------------------------------------------------- spectrum fit

def _fd_jacobian(fun, x, f0):
    jac = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        h = max(REL_STEP * abs(x[i]), ABS_STEP)
        xi = x.copy()
        xi[i] += h
        fi = fun(xi)
        if not np.all(np.isfinite(fi)):
            xi[i] = x[i] - h
            fi = fun(xi)
            h = -h
            if not np.all(np.isfinite(fi)):
                raise FitDiverged(f"model fails on both sides of parameter {i}")
        jac[:, i] = (fi - f0) / h
    return jac


def _covariance(jac, resid, n_free):
    """Scaled pseudo-inverse covariance and the parameters it cannot resolve."""
    n = len(resid)
    dof = max(n - n_free, 1)
    s2 = float(np.dot(resid, resid)) / dof
    u, sv, vt = np.linalg.svd(jac, full_matrices=False)
    cut = sv.max() * 1e-10 if sv.size and sv.max() > 0 else 0.0
    keep = sv > cut
    inv = np.where(keep, 1.0 / np.where(keep, sv, 1.0) ** 2, 0.0)
    cov = (vt.T * inv) @ vt * s2
    weak = set()
    for j in np.flatnonzero(~keep):
        weak.update(np.flatnonzero(np.abs(vt[j]) > 0.1).tolist())
    return cov, sorted(weak)


def fit_spectrum(data: Sequence[SpectroscopyPoint], template: SystemSpec,
                 free: Sequence[str], init: Mapping[str, float] | None = None,
                 bounds: Mapping[str, tuple] | None = None, flux_mode: str | None = None,
                 dims: Sequence[int] | None = None, k: int = DEFAULT_K,
                 max_nfev: int = 200, tol: float = 1e-12) -> FitResult:
    """Weighted least-squares fit of circuit parameters to transition frequencies.

    Parameters
    ----------
    data : sequence of SpectroscopyPoint
    template : SystemSpec
        System whose non-free parameters stay fixed.
    free : sequence of str
        Parameter names to vary (see :class:`SpectrumModel`).
    init : mapping, optional
        Starting values; missing entries come from ``template``.
    bounds : mapping, optional
        ``name -> (lo, hi)`` boxes; unlisted parameters are unbounded above
        and non-negative.
    dims : sequence of int, optional
        Fixed truncation. By default it is converged once at the starting
        parameters and then kept for the whole fit.

    Returns
    -------
    FitResult
        ``uncertainties`` are 1-sigma values from ``s^2 (J^T J)^+`` with the
        residual variance ``s^2``.

    Raises
    ------
    FitDiverged
        If the model fails at the start point or the evaluation budget runs out.
    """
    data = list(data)
    free = list(free)
    if not free:
        raise InvalidParams("no free parameters")
    if len(data) < len(free):
        raise InvalidParams(f"{len(data)} points cannot constrain {len(free)} parameters")
    model = SpectrumModel(template, flux_mode, dims, k)
    init = dict(init or {})
    x0 = np.array([float(init.get(n, model.get(template, n))) for n in free])
    lo = np.array([float((bounds or {}).get(n, (0.0, np.inf))[0]) for n in free])
    hi = np.array([float((bounds or {}).get(n, (0.0, np.inf))[1]) for n in free])
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise InvalidParams("initial values lie outside the bounds")
    fluxes = np.array([p.flux for p in data])
    names = [p.transition for p in data]
    target = np.array([p.frequency for p in data])
    sw = np.sqrt(np.array([p.weight for p in data]))
    spec0 = model.apply(dict(zip(free, x0)))
    model.ensure_dims(spec0, fluxes)
    counter = {"n": 0}
    best = {"x": x0.copy(), "cost": np.inf}

    def resid(x):
        counter["n"] += 1
        try:
            pred = model.predict(model.apply(dict(zip(free, x))), fluxes, names)
        except SquidsimError:
            return np.full(len(target), np.nan)
        r = sw * (pred - target)
        c = float(np.dot(r, r))
        if c < best["cost"]:
            best["x"], best["cost"] = x.copy(), c
        return r

    r0 = resid(x0)
    if not np.all(np.isfinite(r0)):
        raise FitDiverged("model cannot be evaluated at the initial parameters",
                          last=dict(zip(free, x0.tolist())))
    cache = {}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = resid(x)
        return cache[key]

    def jac(x):
        return _fd_jacobian(resid, x, fun(x))

    try:
        sol = least_squares(fun, x0, jac=jac, bounds=(lo, hi), method="trf",
                            x_scale="jac", ftol=tol, xtol=tol, gtol=tol,
                            max_nfev=max_nfev)
    except FitDiverged as exc:
        exc.last = dict(zip(free, best["x"].tolist()))
        raise
    if sol.status <= 0:
        raise FitDiverged(f"optimizer stopped without converging: {sol.message}",
                          last=dict(zip(free, sol.x.tolist())))
    r = fun(sol.x)
    J = _fd_jacobian(resid, sol.x, r)
    cov, weak = _covariance(J, r, len(free))
    params = {n: float(v) for n, v in zip(free, sol.x)}
    unc = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(free)}
    raw = r / sw
    diag = {"status": int(sol.status), "message": sol.message,
            "gradient_norm": float(np.max(np.abs(J.T @ r))),
            "cost": float(0.5 * np.dot(r, r)),
            "dims": list(model.dims), "flux_mode": model.flux_mode,
            "unidentifiable": [free[i] for i in weak],
            "active_bounds": [free[i] for i in np.flatnonzero(sol.active_mask)]}
    return FitResult(params, float(math.sqrt(np.mean(raw ** 2))), unc,
                     counter["n"], True, diag)


def synthesize_spectrum(template: SystemSpec, fluxes: Sequence[float],
                        transitions: Sequence[str], flux_mode: str | None = None,
                        dims: Sequence[int] | None = None, k: int = DEFAULT_K,
                        noise: float = 0.0, rng=None) -> list:
    """Model-generated spectroscopy points with optional Gaussian noise (GHz)."""
    model = SpectrumModel(template, flux_mode, dims, k)
    fl = [float(f) for f in fluxes for _ in transitions]
    names = [t for _ in fluxes for t in transitions]
    freq = model.predict(template, fl, names)
    if noise:
        rng = np.random.default_rng(rng)
        freq = freq + rng.normal(0.0, noise, size=freq.shape)
    return [SpectroscopyPoint(float(f), n, float(v)) for f, n, v in zip(fl, names, freq)]


# ------------------------------------------------------------ decay fits

@dataclass(frozen=True)
class DecayTrace:
    """Population decay sampled at ``times`` (us)."""

    times: np.ndarray
    populations: np.ndarray
    gamma_exp_fixed: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.populations, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise InvalidParams("times and populations must be 1-D of equal length")
        if len(t) < 8:
            raise InvalidParams("a decay trace needs at least 8 points")
        if np.any(np.diff(t) <= 0):
            raise InvalidParams("times must be strictly increasing")
        if not self.gamma_exp_fixed >= 0:
            raise InvalidParams("fixed exponential rate must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "populations", p)


@dataclass(frozen=True)
class GaussianDecayFit:
    Gamma_G: float
    amplitude: float
    offset: float
    pinned: bool
    residual_rms: float
    uncertainty: float


def decay_model(t, amplitude, gamma_exp, Gamma_G, offset):
    """``A exp(-gamma_exp t - (Gamma_G t)^2) + B``."""
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-gamma_exp * t - (Gamma_G * t) ** 2) + offset


def fit_decay_gaussian(trace: DecayTrace) -> GaussianDecayFit:
    """Fit the Gaussian dephasing rate with the exponential part held fixed.

    ``Gamma_G`` is constrained to be non-negative; a result at zero is
    flagged as ``pinned``.
    """
    t, y, g = trace.times, trace.populations, trace.gamma_exp_fixed
    span = float(np.ptp(y))
    if span <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return GaussianDecayFit(0.0, 0.0, float(np.mean(y)), True, 0.0, 0.0)
    a0, b0 = float(y[0] - y[-1]), float(y[-1])
    # initial rate from the 1/e point of the normalized envelope
    env = (y - b0) / a0 * np.exp(g * t)
    below = np.flatnonzero(env < math.exp(-1.0))
    t_e = t[below[0]] if below.size else t[-1]
    x0 = np.array([a0, 1.0 / max(t_e, 1e-12), b0])

    def fun(x):
        return decay_model(t, x[0], g, x[1], x[2]) - y

    try:
        sol = least_squares(fun, x0, bounds=([-np.inf, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
                            method="trf", x_scale="jac", ftol=1e-14, xtol=1e-14, gtol=1e-14,
                            max_nfev=2000)
    except ValueError as exc:
        raise FitDiverged(f"decay fit failed: {exc}") from exc
    if sol.status <= 0:
        raise FitDiverged(f"decay fit did not converge: {sol.message}",
                          last={"Gamma_G": float(sol.x[1])})
    cov, _ = _covariance(sol.jac, sol.fun, 3)
    gam = float(sol.x[1])
    # a Gaussian factor that never departs from 1 by more than 1e-12 is unresolved
    pinned = bool(sol.active_mask[1] != 0 or gam * t[-1] <= 1e-6)
    return GaussianDecayFit(0.0 if pinned else gam, float(sol.x[0]), float(sol.x[2]), pinned,
                            float(math.sqrt(np.mean(sol.fun ** 2))),
                            float(math.sqrt(max(cov[1, 1], 0.0))))


# ------------------------------------------------------- flux-noise fit

@dataclass(frozen=True)
class FluxNoiseFit:
    """Through-origin fit ``Gamma_G = sqrt(ln 2) A_phi |d omega/d Phi|``.

    ``slope`` is in (1/us) per (GHz/Phi_0); ``pairs`` lists
    ``(flux, |df/dPhi| [GHz/Phi_0], Gamma_G [1/us])``.
    """

    A_phi: float
    slope: float
    r_squared: float
    rms_residual: float
    pairs: tuple

    def to_dict(self) -> dict:
        return {"A_phi": self.A_phi, "A_phi_uphi0": self.A_phi * 1e6, "slope": self.slope,
                "r_squared": self.r_squared, "rms_residual": self.rms_residual,
                "pairs": [{"flux_phi0": f, "dispersion_ghz_per_phi0": x, "gamma_per_us": y}
                          for f, x, y in self.pairs]}


def amplitude_from_slope(slope: float) -> float:
    """Flux-noise amplitude (Phi_0) from a Gamma-vs-dispersion slope."""
    return slope / (SQRT_LN2 * RAD_PER_US_PER_GHZ)


def gaussian_rate(A_phi: float, dispersion: float) -> float:
    """Gaussian dephasing rate (1/us) for a dispersion in GHz per flux quantum."""
    return SQRT_LN2 * A_phi * RAD_PER_US_PER_GHZ * abs(dispersion)


def fit_flux_noise(points: Sequence[tuple], dispersion_source,
                   min_dispersion: float = 1e-3) -> FluxNoiseFit:
    """Flux-noise amplitude from Gaussian dephasing rates.

    Parameters
    ----------
    points : sequence of (flux, Gamma_G)
        Flux in Phi_0 and rate in 1/us.
    dispersion_source : callable, sequence, CircuitParams or SystemSpec
        Supplies ``df01/dPhi`` in GHz/Phi_0 at each flux: a callable of flux,
        values aligned with ``points``, or a model passed to
        :func:`flux_dispersion`.

    Raises
    ------
    InsufficientLeverage
        If every dispersion is below ``min_dispersion`` GHz/Phi_0.
    """
    pts = [(float(f), float(gm)) for f, gm in points]
    if len(pts) < 3:
        raise InvalidParams("at least 3 points are needed")
    fl = [f for f, _ in pts]
    if isinstance(dispersion_source, (CircuitParams, SystemSpec)):
        disp = [flux_dispersion(dispersion_source, f) for f in fl]
    elif callable(dispersion_source):
        disp = [float(dispersion_source(f)) for f in fl]
    else:
        disp = [float(v) for v in dispersion_source]
        if len(disp) != len(pts):
            raise InvalidParams("dispersion values must align with points")
    x = np.abs(np.array(disp))
    y = np.array([gm for _, gm in pts])
    if np.max(x) < min_dispersion:
        raise InsufficientLeverage("all points sit at a flux sweet spot")
    slope = float(np.dot(x, y) / np.dot(x, x))
    resid = y - slope * x
    ss_tot = float(np.dot(y, y))
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    pairs = tuple((f, float(a), float(b)) for f, a, b in zip(fl, x, y))
    return FluxNoiseFit(amplitude_from_slope(slope), slope, r2,
                        float(math.sqrt(np.mean(resid ** 2))), pairs)


# ------------------------------------------------------------------- I/O

def _read_csv(path, required: Sequence[str], optional: Sequence[str] = ()):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, skipinitialspace=True)
            header = [h.strip() for h in (reader.fieldnames or [])]
            for col in required:
                if col not in header:
                    raise ConfigError(f"{path}: missing column '{col}'")
            extra = set(header) - set(required) - set(optional)
            if extra:
                raise ConfigError(f"{path}: unknown columns {sorted(extra)}")
            rows = []
            for line, row in enumerate(reader, start=2):
                rows.append((line, {k.strip(): (v or "").strip() for k, v in row.items()
                                    if k is not None}))
            return rows
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _number(value: str, path, line: int, col: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{path}:{line}: column '{col}' is not a number: {value!r}") from None


def read_spectroscopy_csv(path) -> list:
    """Read ``flux_phi0, transition, freq_ghz[, weight]`` rows."""
    out = []
    for line, row in _read_csv(path, ("flux_phi0", "transition", "freq_ghz"), ("weight",)):
        w = row.get("weight", "")
        try:
            out.append(SpectroscopyPoint(_number(row["flux_phi0"], path, line, "flux_phi0"),
                                         row["transition"],
                                         _number(row["freq_ghz"], path, line, "freq_ghz"),
                                         _number(w, path, line, "weight") if w else 1.0))
        except InvalidParams as exc:
            raise ConfigError(f"{path}:{line}: {exc}") from None
    if not out:
        raise ConfigError(f"{path}: no data rows")
    return out


def read_gamma_csv(path) -> list:
    """Read ``flux_phi0, gamma_per_us`` rows."""
    out = [(_number(r["flux_phi0"], path, ln, "flux_phi0"),
            _number(r["gamma_per_us"], path, ln, "gamma_per_us"))
           for ln, r in _read_csv(path, ("flux_phi0", "gamma_per_us"))]
    if not out:
        raise ConfigError(f"{path}: no data rows")
    return out


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
