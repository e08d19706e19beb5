import json
import sys

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from squidsim import cli
from squidsim.circuits import ModeKind
from squidsim.config import dump_config, fixture_path, load_config, parse_config
from squidsim.errors import ConfigError
from squidsim.fitting import gaussian_rate, synthesize_spectrum
from squidsim.observables import flux_dispersion
from squidsim.scans import parse_range

SMALL = """
[defaults]
flux_mode = "q"

[[modes]]
name = "q"
kind = "ist"
E_C = 0.238
E_J = 19.4
E_L = 27.2
flux_phi0 = 0.5
"""

PAIR = """
[defaults]
qubits = ["ist", "tr"]
flux_mode = "ist"

[[modes]]
name = "ist"
kind = "ist"
E_C = 0.238
E_J = 19.4
E_L = 27.2
flux_phi0 = 0.5

[[modes]]
name = "tr"
kind = "transmon"
E_C = 0.203
E_J = 21.2
d = 0.2

[[couplings]]
pair = ["ist", "tr"]
g = {g}
"""


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------ config

def test_fixtures_parse(device_a, device_b):
    assert device_b.qubits == ("ist", "tr")
    assert device_b.flux_mode == "ist"
    assert device_b.mode("p1").role == "parasitic"
    s = device_b.to_system(include_readout=False)
    assert "r_ist" not in s.names and "p1" in s.names
    assert device_a.mode("r").kind is ModeKind.LINEAR
    assert fixture_path("deviceB.toml").is_file()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"modes": [{"name": "q", "kind": "ist", "E_C": 1, "E_J": 1, "E_L": 2,
                                 "colour": "red"}]})
    with pytest.raises(ConfigError, match="bogus"):
        parse_config({"bogus": 1, "modes": [{"name": "r", "kind": "linear", "omega": 5.0}]})


@pytest.mark.parametrize("mode,msg", [
    ({"name": "q", "kind": "ist", "E_C": 1, "E_J": 1}, "E_L"),
    ({"name": "q", "kind": "qutrit"}, "kind"),
    ({"name": "a b", "kind": "linear", "omega": 1.0}, "identifier"),
    ({"name": "q", "kind": "linear", "omega": "fast"}, "number"),
    ({"name": "q", "kind": "linear", "omega": 1.0, "role": "boss"}, "role"),
    ({"name": "q", "kind": "ist", "E_C": -1, "E_J": 1, "E_L": 2}, "E_C"),
])
def test_bad_modes(mode, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config({"modes": [mode]})


def test_bad_couplings():
    modes = [{"name": "a", "kind": "ist", "E_C": 1, "E_J": 1, "E_L": 2},
             {"name": "r", "kind": "linear", "omega": 5.0}]
    with pytest.raises(ConfigError, match="charge-charge"):
        parse_config({"modes": modes, "couplings": [{"pair": ["a", "r"], "g": 0.1}]})
    with pytest.raises(ConfigError, match="unknown"):
        parse_config({"modes": modes, "couplings": [{"pair": ["a", "x"], "g": 0.1,
                                                     "form": "charge-ladder"}]})


def test_dump_roundtrip(device_b):
    assert parse_config(tomllib.loads(dump_config(device_b))) == device_b


def test_with_fit_writes_back(device_b):
    cfg = device_b.with_fit({"E_J": 19.0, "omega_p1": 11.0, "g_p1": 0.8, "tr.d": 0.3})
    assert cfg.mode("ist").E_J == 19.0 and cfg.mode("p1").omega == 11.0
    assert cfg.mode("tr").d == 0.3
    assert [c.g for c in cfg.couplings if set(c.pair) == {"ist", "p1"}] == [0.8]
    with pytest.raises(ConfigError):
        device_b.with_fit({"nonsense": 1.0})


def test_parse_range():
    np.testing.assert_allclose(parse_range("0:1:5"), [0, 0.25, 0.5, 0.75, 1.0])
    assert list(parse_range("0.5")) == [0.5]
    for bad in ("1:0:5", "0:1:1", "a:b:c", "0:1"):
        with pytest.raises(ConfigError):
            parse_range(bad)


# --------------------------------------------------------------------- CLI

def test_perturb_examples(capsys):
    code, out = run(["perturb", "--duffing", "J=0.01", "a1=-0.2", "a2=0.2", "delta=1",
                     "--sweetspot", "EC=0.2", "EJ=10", "EL=30",
                     "--sidebands", "wa=5", "wb=4.995", "alpha=0.005", "c3=0.01", "J=0.01"],
                    capsys)
    assert code == 0
    res = json.loads(out.out)
    assert res["duffing"]["zeta_ghz"] == 0.0
    assert res["sweetspot"]["omega01_ghz"] == pytest.approx(5.7569, abs=1e-4)
    assert res["sidebands"]["M1_over_asymptote"] == pytest.approx(1.0, abs=0.02)
    assert res["sidebands"]["M2_over_asymptote"] == pytest.approx(1.0, abs=0.02)


def test_perturb_domain_error_exit_3(capsys):
    code, out = run(["perturb", "--sweetspot", "EC=0.2", "EJ=30", "EL=10"], capsys)
    assert code == 3 and "QuartonRegime" in out.err
    code, out = run(["perturb", "--duffing", "J=0.01", "a1=-0.2", "a2=0.2", "delta=0"], capsys)
    assert code == 3 and "DegenerateDetuning" in out.err


def test_perturb_input_error_exit_2(capsys):
    assert run(["perturb", "--duffing", "J=0.01"], capsys)[0] == 2
    assert run(["perturb", "--duffing", "J=x", "a1=1", "a2=1", "delta=1"], capsys)[0] == 2
    assert run(["perturb"], capsys)[0] == 2


def test_config_errors_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "bad.toml", SMALL + "wobble = 1\n")
    code, out = run(["spectrum", "--config", bad, "--flux", "0.4:0.5:3"], capsys)
    assert code == 2 and "wobble" in out.err
    code, out = run(["spectrum", "--config", tmp_path / "none.toml"], capsys)
    assert code == 2


def test_env_tolerance(tmp_path, capsys, monkeypatch):
    cfg = write(tmp_path, "q.toml", SMALL)
    monkeypatch.setenv(cli.TOL_ENV, "not-a-number")
    assert run(["spectrum", "--config", cfg, "--flux", "0.4:0.5:2"], capsys)[0] == 2
    monkeypatch.setenv(cli.TOL_ENV, "1e-5")
    assert run(["spectrum", "--config", cfg, "--flux", "0.4:0.5:2"], capsys)[0] == 0


def test_spectrum_linear_only_is_flat(tmp_path, capsys):
    cfg = write(tmp_path, "lin.toml", '[[modes]]\nname = "r"\nkind = "linear"\nomega = 7.5\n')
    code, out = run(["spectrum", "--config", cfg, "--flux", "0:1:3"], capsys)
    assert code == 0
    rows = [ln.split(",") for ln in out.out.strip().splitlines()[1:]]
    # the only mode is the primary one, so its lines are named 01, 02, 03
    assert {r[1] for r in rows} == {"01", "02", "03"}
    assert {r[2] for r in rows if r[1] == "01"} == {"7.5"}
    assert {r[2] for r in rows if r[1] == "03"} == {"22.5"}


def test_spectrum_deterministic_and_parallel(tmp_path):
    cfg = write(tmp_path, "q.toml", SMALL)
    outs = []
    for threads in (1, 1, 3):
        path = tmp_path / f"s{len(outs)}.csv"
        assert run(["spectrum", "--config", cfg, "--flux", "0:1:11", "--sidebands",
                    "--threads", threads, "--out", path])[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    head = outs[0].decode().splitlines()
    assert head[0] == "flux_phi0,transition,freq_ghz,overlap"
    assert any(",01+02," in ln for ln in head)


def test_zz_sweep_zero_coupling(tmp_path, capsys):
    cfg = write(tmp_path, "p.toml", PAIR.format(g=0.0))
    code, out = run(["zz-sweep", "--config", cfg, "--flux", "0.45:0.5:3"], capsys)
    assert code == 0
    lines = out.out.strip().splitlines()
    assert lines[0] == "flux_phi0,ist_freq_ghz,zeta_khz,ambiguous,level_crossing"
    assert all(abs(float(ln.split(",")[2])) < 1e-6 for ln in lines[1:])


def test_zz_sweep_needs_two_qubits(tmp_path, capsys):
    cfg = write(tmp_path, "q.toml", SMALL)
    assert run(["zz-sweep", "--config", cfg, "--flux", "0.45:0.5:3"], capsys)[0] == 2


def test_zz_scan2d_zero_coupling_and_sign(tmp_path, capsys):
    cfg = write(tmp_path, "p.toml", PAIR.format(g=0.0))
    code, out = run(["zz-scan2d", "--config", cfg, "--ej-ratio", "0.8:1.0:2",
                     "--ec-ratio", "1.0:1.2:2"], capsys)
    assert code == 0
    lines = out.out.strip().splitlines()
    assert lines[0] == "ej_ratio,ec_ratio,zeta_khz,delta_ghz,alpha_ist_mhz,ambiguous"
    assert len(lines) == 5
    assert all(abs(float(ln.split(",")[2])) < 1e-6 for ln in lines[1:])
    assert run(["zz-scan2d", "--config", cfg, "--flux", "0:1:3"], capsys)[0] == 2


def test_fit_cli_round_trip_and_errors(tmp_path, capsys, device_a):
    spec = device_a.to_system()
    pts = synthesize_spectrum(spec, [0.3, 0.4, 0.45, 0.5], ["01", "02"], "ist")
    data = tmp_path / "d.csv"
    data.write_text("flux_phi0,transition,freq_ghz\n"
                    + "".join(f"{p.flux!r},{p.transition},{p.frequency!r}\n" for p in pts))
    out_cfg = tmp_path / "fit.toml"
    code, out = run(["fit", "--config", "deviceA.toml", "--data", data,
                     "--init", "E_C=0.25", "E_J=15.3", "E_L=21.8", "--out-config", out_cfg],
                    capsys)
    assert code == 0, out.err
    res = json.loads(out.out)
    for name, ref in (("E_C", 0.245), ("E_J", 14.9), ("E_L", 22.2)):
        assert res["params"][name] == pytest.approx(ref, rel=0.01)
    assert load_config(out_cfg).mode("ist").E_J == pytest.approx(14.9, rel=0.01)

    code, out = run(["fit", "--config", "deviceA.toml", "--data", data,
                     "--init", "E_C=0.3", "E_J=13", "E_L=25", "--max-evals", "1"], capsys)
    assert code == 4 and "FitDiverged" in out.err
    assert "last" in json.loads(out.out)

    bad = write(tmp_path, "bad.csv", "flux_phi0,freq_ghz\n0.5,3.8\n")
    code, out = run(["fit", "--config", "deviceA.toml", "--data", bad], capsys)
    assert code == 2 and "transition" in out.err


def test_fluxnoise_cli(tmp_path, capsys):
    cfg = write(tmp_path, "q.toml", SMALL)
    spec = load_config(cfg).to_system()
    rows = [(f, gaussian_rate(6.81e-6, flux_dispersion(spec, f, mode="q")))
            for f in (0.3, 0.35, 0.4, 0.45)]
    data = write(tmp_path, "g.csv", "flux_phi0,gamma_per_us\n"
                 + "".join(f"{f!r},{g!r}\n" for f, g in rows))
    code, out = run(["fluxnoise", "--config", cfg, "--data", data], capsys)
    assert code == 0
    res = json.loads(out.out)
    assert res["A_phi_uphi0"] == pytest.approx(6.81, rel=1e-3)
    assert len(res["pairs"]) == 4
    bad = write(tmp_path, "b.csv", "flux_phi0,rate\n0.3,1\n")
    code, out = run(["fluxnoise", "--config", cfg, "--data", bad], capsys)
    assert code == 2 and "gamma_per_us" in out.err
