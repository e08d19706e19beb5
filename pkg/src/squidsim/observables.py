"""Quantities derived from labeled spectra.

All values are returned in GHz (or GHz per flux quantum); unit conversion is
left to serialization.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .circuits import CircuitParams, ModeKind
from .composite import (DEFAULT_K, DEFAULT_TOL, LabeledSpectrum, Mode, SystemSpec,
                        converge_dims, solve)
from .errors import InvalidParams, LabelMissing


def _qubits(spec: LabeledSpectrum, qubits) -> tuple:
    if qubits is None:
        qubits = spec.info.get("qubits") or spec.mode_names[:2]
    qubits = tuple(qubits)
    if len(qubits) != 2 or qubits[0] == qubits[1]:
        raise LabelMissing(f"two distinct qubit modes are needed, got {qubits}")
    return qubits


def zz_shift(spec: LabeledSpectrum, qubits: Sequence[str] | None = None) -> float:
    """Static ZZ shift ``E11 - E10 - E01 + E00`` of two designated modes.

    Parameters
    ----------
    spec : LabeledSpectrum
    qubits : pair of mode names, optional
        Defaults to the nonlinear modes recorded on the spectrum, else the
        first two modes. All other modes are held in their ground state.
    """
    a, b = _qubits(spec, qubits)
    e = spec.energy
    return e({a: 1, b: 1}) - e({a: 1}) - e({b: 1}) + e({})


def frequency(spec: LabeledSpectrum, mode: str, n: int = 1) -> float:
    """``E_n - E_0`` of one mode with all others in the ground state."""
    return spec.energy({mode: n}) - spec.energy({})


def anharmonicity(spec: LabeledSpectrum, mode: str) -> float:
    """``(E2 - E1) - (E1 - E0)`` of one mode."""
    e0, e1, e2 = (spec.energy({mode: n}) for n in range(3))
    return (e2 - e1) - (e1 - e0)


def dispersive_shift(spec: LabeledSpectrum, qubit: str, resonator: str) -> float:
    """Resonator pull per qubit excitation,
    ``2 chi = [E(1,1) - E(1,0)] - [E(0,1) - E(0,0)]`` with labels (qubit, resonator).
    """
    e = spec.energy
    return (e({qubit: 1, resonator: 1}) - e({qubit: 1})) - (e({resonator: 1}) - e({}))


# ------------------------------------------------------------ dispersion

def _single_mode(p: CircuitParams) -> SystemSpec:
    return SystemSpec((Mode("q", p),))


def _builder(system, mode):
    """Return ``(flux -> SystemSpec, mode name)`` for the supported inputs."""
    if isinstance(system, CircuitParams):
        return (lambda f: _single_mode(system.at_flux(f))), "q"
    if isinstance(system, SystemSpec):
        if mode is None:
            nl = [m.name for m in system.modes if m.kind is ModeKind.IST]
            if not nl:
                raise InvalidParams("no flux-tunable mode to differentiate")
            mode = nl[0]
        return (lambda f: system.at_flux(mode, f)), mode
    if callable(system):
        if mode is None:
            raise InvalidParams("a mode name is needed with a system builder")
        return system, mode
    raise InvalidParams("expected CircuitParams, SystemSpec or a callable")


def qubit_frequency(system, flux: float, mode: str | None = None,
                    dims: Sequence[int] | None = None, k: int = 4,
                    tol: float = DEFAULT_TOL) -> float:
    """Dressed 0-1 frequency of ``mode`` at ``flux``."""
    build, mode = _builder(system, mode)
    spec = build(flux)
    if dims is None:
        dims = converge_dims(spec, k, tol)[0]
    return frequency(solve(spec, dims, k), mode)


def flux_dispersion(system, flux: float, h: float = 1e-4, mode: str | None = None,
                    dims: Sequence[int] | None = None, k: int = 4,
                    tol: float = DEFAULT_TOL) -> float:
    """Central-difference slope of the 0-1 frequency, in GHz per flux quantum.

    ``system`` is a single-mode ``CircuitParams``, a ``SystemSpec`` (the
    first IST mode is tuned unless ``mode`` is given) or a callable mapping
    flux to a ``SystemSpec``. Both evaluations share one truncation so that
    truncation changes cannot leak into the difference.
    """
    if not h > 0:
        raise InvalidParams("finite-difference step must be positive")
    build, mode = _builder(system, mode)
    if dims is None:
        dims = converge_dims(build(flux), k, tol)[0]
    up = frequency(solve(build(flux + h), dims, k), mode)
    down = frequency(solve(build(flux - h), dims, k), mode)
    return (up - down) / (2.0 * h)


# ------------------------------------------------------------ transitions

@dataclass(frozen=True)
class Transition:
    name: str
    from_label: tuple
    to_label: tuple
    frequency: float
    overlap: float


@dataclass(frozen=True)
class TransitionTable:
    entries: tuple
    flux: float | None = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> list:
        return [t.name for t in self.entries]

    def get(self, name: str) -> Transition:
        for t in self.entries:
            if t.name == name:
                return t
        raise LabelMissing(f"no transition named {name!r}")

    def frequency(self, name: str) -> float:
        return self.get(name).frequency


def transition_name(mode: str, n: int, primary: bool) -> str:
    """``"0n"`` for the primary mode, the mode name for other first levels."""
    if primary:
        return f"0{n}"
    return mode if n == 1 else f"{mode}:0{n}"


def transition_table(spec: LabeledSpectrum, include_sidebands: bool = False,
                     max_level: int = 3, primary: str | None = None,
                     flux: float | None = None) -> TransitionTable:
    """Upward transitions out of the ground state, optionally with sidebands.

    Single-mode transitions ``0 -> n`` are listed for every mode and every
    ``n <= max_level`` present in ``spec``. Sidebands are the sums and
    differences of every unordered pair of main transitions; differences are
    written ``hi-lo`` so that all frequencies are positive.
    """
    if primary is None:
        primary = spec.info.get("primary") or spec.mode_names[0]
    ground = spec.label({})
    if not spec.has(ground):
        raise LabelMissing("ground state is not labeled")
    e0 = spec.energy(ground)
    main = []
    for mode in spec.mode_names:
        for n in range(1, max_level + 1):
            lab = spec.label({mode: n})
            if not spec.has(lab):
                break
            lv = spec.level(lab)
            main.append(Transition(transition_name(mode, n, mode == primary),
                                   ground, lab, lv.energy - e0, lv.overlap))
    entries = list(main)
    if include_sidebands:
        for i in range(len(main)):
            for j in range(i + 1, len(main)):
                a, b = main[i], main[j]
                summed = tuple(x + y for x, y in zip(a.to_label, b.to_label))
                ov = min(a.overlap, b.overlap)
                entries.append(Transition(f"{a.name}+{b.name}", ground, summed,
                                          a.frequency + b.frequency, ov))
                hi, lo = (a, b) if a.frequency >= b.frequency else (b, a)
                entries.append(Transition(f"{hi.name}-{lo.name}", lo.to_label, hi.to_label,
                                          hi.frequency - lo.frequency, ov))
    return TransitionTable(tuple(entries), flux)
