import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from squidsim.circuits import CircuitParams
from squidsim.composite import Mode, SystemSpec, diagonalize_converged, solve
from squidsim.errors import InvalidParams, LabelMissing
from squidsim.observables import (anharmonicity, dispersive_shift, flux_dispersion, frequency,
                                  qubit_frequency, transition_name, transition_table, zz_shift)

IST = CircuitParams.ist(0.238, 19.4, 27.2, 0.5)


def test_device_a_readout_frozen(device_a):
    lab = diagonalize_converged(device_a.to_system())
    assert frequency(lab, "ist") == pytest.approx(4.1663573584877085, rel=1e-7)
    assert anharmonicity(lab, "ist") == pytest.approx(0.31478877340929046, rel=1e-6)
    # positive anharmonicity pulls the resonator up
    assert dispersive_shift(lab, "ist", "r") == pytest.approx(1.4458e-3, rel=1e-3)


def test_device_b_dispersive_shifts(device_b):
    s = device_b.to_system()
    ist = diagonalize_converged(s.subset(["ist", "p1", "p2", "r_ist"]))
    tr = diagonalize_converged(s.subset(["tr", "r_tr"]))
    assert dispersive_shift(ist, "ist", "r_ist") == pytest.approx(1.3974e-3, rel=1e-3)
    assert dispersive_shift(tr, "tr", "r_tr") == pytest.approx(-1.6006e-3, rel=1e-3)


def test_zz_needs_two_modes():
    lab = solve(SystemSpec((Mode("q", IST),)), (6,), 4)
    with pytest.raises(LabelMissing):
        zz_shift(lab)
    with pytest.raises(LabelMissing):
        zz_shift(lab, ("q", "q"))


def test_transition_table_names_and_sidebands():
    s = SystemSpec((Mode("q", IST), Mode("r", CircuitParams.linear(9.9))))
    lab = solve(s, (6, 4), 12)
    t = transition_table(lab, include_sidebands=True)
    assert t.names[:3] == ["01", "02", "03"]
    assert "r" in t.names and "r:02" in t.names
    assert t.frequency("01+r") == pytest.approx(t.frequency("01") + 9.9)
    assert t.frequency("r-01") == pytest.approx(9.9 - t.frequency("01"))
    assert all(x.frequency > 0 for x in t)
    m = len(transition_table(lab))
    assert len(t) == m + m * (m - 1)
    with pytest.raises(LabelMissing):
        t.get("nope")


def test_transition_name():
    assert transition_name("ist", 2, True) == "02"
    assert transition_name("r", 1, False) == "r"
    assert transition_name("r", 2, False) == "r:02"


def test_dispersion_vanishes_at_sweet_spot_and_is_odd():
    assert abs(flux_dispersion(IST, 0.5)) < 1e-6
    lo, hi = flux_dispersion(IST, 0.4), flux_dispersion(IST, 0.6)
    assert lo == pytest.approx(-20.8969310458, rel=1e-6)
    assert hi == pytest.approx(-lo, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.45))
def test_dispersion_matches_frequency_difference(flux):
    h = 1e-3
    d = flux_dispersion(IST, flux, h=h)
    f = (qubit_frequency(IST, flux + h) - qubit_frequency(IST, flux - h)) / (2 * h)
    assert d == pytest.approx(f, rel=1e-6)


def test_dispersion_input_checks():
    with pytest.raises(InvalidParams):
        flux_dispersion(IST, 0.4, h=0.0)
    with pytest.raises(InvalidParams):
        flux_dispersion(lambda f: None, 0.4)
    with pytest.raises(InvalidParams):
        flux_dispersion("ist", 0.4)
    spec = SystemSpec((Mode("ist", IST),))
    assert flux_dispersion(spec, 0.4) == pytest.approx(flux_dispersion(IST, 0.4), rel=1e-9)
    got = flux_dispersion(lambda f: spec.at_flux("ist", f), 0.4, mode="ist")
    assert got == pytest.approx(flux_dispersion(IST, 0.4), rel=1e-9)


def test_frequency_of_linear_mode_is_exact():
    s = SystemSpec((Mode("r", CircuitParams.linear(7.25)),))
    lab = solve(s, (5,), 4)
    assert frequency(lab, "r", 3) == pytest.approx(3 * 7.25)
    assert np.allclose(lab.energies, [0, 7.25, 14.5, 21.75])
