import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from squidsim.circuits import CircuitParams
from squidsim.composite import Mode, SystemSpec
from squidsim.errors import ConfigError, FitDiverged, InsufficientLeverage, InvalidParams
from squidsim.fitting import (DecayTrace, SpectroscopyPoint, SpectrumModel,
                              amplitude_from_slope, decay_model, fit_decay_gaussian,
                              fit_flux_noise, fit_spectrum, gaussian_rate, read_gamma_csv,
                              read_spectroscopy_csv, synthesize_spectrum)

IST = CircuitParams.ist(0.238, 19.4, 27.2, 0.5)
SINGLE = SystemSpec((Mode("ist", IST),))
FLUX = [0.3, 0.4, 0.45, 0.5]


@pytest.fixture(scope="module")
def clean_data():
    return synthesize_spectrum(SINGLE, FLUX, ["01", "02"], dims=(8,), k=4)


def test_point_validation():
    with pytest.raises(InvalidParams):
        SpectroscopyPoint(0.5, "01", -1.0)
    with pytest.raises(InvalidParams):
        SpectroscopyPoint(math.nan, "01", 1.0)
    with pytest.raises(InvalidParams):
        SpectroscopyPoint(0.5, "01", 1.0, weight=0.0)


def test_model_parameter_names():
    s = SystemSpec((Mode("ist", IST), Mode("r", CircuitParams.linear(9.9))))
    m = SpectrumModel(s)
    assert m.flux_mode == "ist"
    assert "omega_r" in m.names_available()
    assert m.get(m.apply({"omega_r": 9.5}), "omega_r") == 9.5
    assert m.get(s, "ist.E_L") == 27.2
    with pytest.raises(InvalidParams):
        m.get(s, "bogus")


def test_round_trip_exact(clean_data):
    res = fit_spectrum(clean_data, SINGLE, ["E_C", "E_J", "E_L"],
                       init={"E_C": 0.25, "E_J": 18.5, "E_L": 28.0}, dims=(8,), k=4)
    assert res.converged
    for name, ref in (("E_C", 0.238), ("E_J", 19.4), ("E_L", 27.2)):
        assert res.params[name] == pytest.approx(ref, rel=1e-6)
    assert res.residual_rms < 1e-8
    assert set(res.to_dict()) == {"params", "residual_rms", "uncertainties", "n_evals",
                                  "converged", "diagnostics"}


def test_unidentifiable_parameter_flagged(clean_data):
    # the SQUID asymmetry does not enter an IST
    res = fit_spectrum(clean_data, SINGLE, ["E_C", "d"], init={"d": 0.3},
                       bounds={"d": (0.0, 1.0)}, dims=(8,), k=4)
    assert "d" in res.diagnostics["unidentifiable"]


def test_budget_exhaustion_raises_with_last(clean_data):
    with pytest.raises(FitDiverged) as exc:
        fit_spectrum(clean_data, SINGLE, ["E_C", "E_J", "E_L"],
                     init={"E_C": 0.3, "E_J": 15.0, "E_L": 32.0}, dims=(8,), k=4, max_nfev=1)
    assert set(exc.value.last) == {"E_C", "E_J", "E_L"}


def test_fit_input_checks(clean_data):
    with pytest.raises(InvalidParams):
        fit_spectrum(clean_data, SINGLE, [])
    with pytest.raises(InvalidParams):
        fit_spectrum(clean_data[:1], SINGLE, ["E_C", "E_J"])
    with pytest.raises(InvalidParams):
        fit_spectrum(clean_data, SINGLE, ["E_C"], init={"E_C": 2.0}, bounds={"E_C": (0, 1)})


def test_decay_fit_recovers_rate():
    t = np.linspace(0, 10, 60)
    y = decay_model(t, 0.9, 0.05, 0.21, 0.05)
    fit = fit_decay_gaussian(DecayTrace(t, y, gamma_exp_fixed=0.05))
    assert fit.Gamma_G == pytest.approx(0.21, rel=1e-6)
    assert not fit.pinned


def test_decay_fit_pins_at_zero():
    t = np.linspace(0, 10, 40)
    fit = fit_decay_gaussian(DecayTrace(t, decay_model(t, 1.0, 0.3, 0.0, 0.0), 0.3))
    assert fit.pinned and fit.Gamma_G == 0.0
    flat = fit_decay_gaussian(DecayTrace(t, np.full(40, 0.4)))
    assert flat.pinned and flat.offset == pytest.approx(0.4)


def test_decay_trace_validation():
    with pytest.raises(InvalidParams):
        DecayTrace(np.arange(5.0), np.ones(5))
    with pytest.raises(InvalidParams):
        DecayTrace(np.arange(10.0)[::-1], np.ones(10))


@given(st.floats(1e-7, 1e-4), st.floats(0.1, 50.0))
def test_rate_and_amplitude_are_inverse(a, disp):
    assert amplitude_from_slope(gaussian_rate(a, disp) / disp) == pytest.approx(a, rel=1e-12)


def test_flux_noise_leverage():
    with pytest.raises(InsufficientLeverage):
        fit_flux_noise([(0.5, 0.1), (0.5, 0.2), (0.5, 0.1)], [0.0, 0.0, 1e-5])
    with pytest.raises(InvalidParams):
        fit_flux_noise([(0.4, 0.1), (0.3, 0.2)], [1.0, 2.0])
    res = fit_flux_noise([(0.3, 0.2), (0.4, 0.4), (0.45, 0.6)], lambda f: 10 * f)
    assert len(res.pairs) == 3 and res.slope > 0


def test_csv_readers(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("flux_phi0,transition,freq_ghz,weight\n0.5,01,3.8,2\n0.4,02,9.1,\n")
    pts = read_spectroscopy_csv(p)
    assert pts[0].weight == 2.0 and pts[1].weight == 1.0 and pts[1].transition == "02"
    bad = tmp_path / "b.csv"
    bad.write_text("flux_phi0,freq_ghz\n0.5,3.8\n")
    with pytest.raises(ConfigError, match="transition"):
        read_spectroscopy_csv(bad)
    bad.write_text("flux_phi0,transition,freq_ghz,extra\n0.5,01,3.8,1\n")
    with pytest.raises(ConfigError, match="extra"):
        read_spectroscopy_csv(bad)
    bad.write_text("flux_phi0,transition,freq_ghz\n0.5,01,abc\n")
    with pytest.raises(ConfigError, match="freq_ghz"):
        read_spectroscopy_csv(bad)
    g = tmp_path / "g.csv"
    g.write_text("flux_phi0,gamma_per_us\n0.3,0.2\n")
    assert read_gamma_csv(g) == [(0.3, 0.2)]
    with pytest.raises(ConfigError):
        read_gamma_csv(tmp_path / "missing.csv")
