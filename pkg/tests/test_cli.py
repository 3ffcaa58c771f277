import json

import numpy as np
import pytest

from fluxmech import io
from fluxmech.cli import main
from fluxmech.config import ConfigError, load_config

NETWORK = """\
[capacitance]
1 0 24.15
2 0 40.0
1 2 3.0
[potential]
1 0 inductor 0.7966
"""

SMALL_DIMS = "[dims]\nn_qudit_fock = 40\nn_qudit_kept = 3\nn_phonon = 3\n"


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_chi_json(tmp_path, capsys):
    code, out = run(capsys, "chi", "--flux", "0.4751", "--out", str(tmp_path))
    assert code == 0
    res = json.loads((tmp_path / "chi.json").read_text())
    assert res["two_chi_exact_mhz"] == pytest.approx(2.23, abs=0.1)
    assert json.loads(out.out) == res


def test_spectrum_decoupled(tmp_path, capsys):
    code, _ = run(capsys, "spectrum", "--joint", "--g-m", "0", "--grid", "0.47", "0.48", "3",
                  "--levels", "3", "--n-phonon", "3", "--out", str(tmp_path))
    assert code == 0
    header, data = io.read_csv(tmp_path / "spectrum.csv")
    assert header[0] == "flux_phi0" and data.shape == (3, 4)
    # lowest joint excitation of the uncoupled system: qubit or one phonon
    assert np.any(np.isclose(data[:, 1:], 691.75, atol=1e-6))


@pytest.mark.parametrize("argv", [
    ["spectrum"], ["chi"], ["chi", "--grid", "0.47", "0.478", "5"],
    ["numbersplit", "synth"], ["sim", "rabi"], ["sim", "t1m"], ["sim", "t2m"],
    ["decohere", "1f"], ["decohere", "thermal"], ["decohere", "coop"],
])
def test_dry_run_writes_nothing(tmp_path, capsys, argv):
    code, out = run(capsys, *argv, "--dry-run", "--out", str(tmp_path / "o"))
    assert code == 0
    resolved = json.loads(out.out)
    assert "device" in resolved and "resolved" in resolved
    assert not (tmp_path / "o").exists()


def test_dry_run_with_inputs(tmp_path, capsys):
    net = tmp_path / "net.txt"
    net.write_text(NETWORK)
    peaks = tmp_path / "peaks.csv"
    io.write_csv(peaks, ["flux_phi0", "freq_mhz"], [[0.47, 900.0], [0.48, 600.0]])
    for argv in (["circuit", "reduce", "--network", str(net), "--coord", "q:1:0"],
                 ["fit-tuning", "--peaks", str(peaks)],
                 ["decohere", "fit", "--input", str(peaks)]):
        code, out = run(capsys, *argv, "--dry-run")
        assert code == 0, argv
        json.loads(out.out)


def test_exit_codes(tmp_path, capsys):
    assert run(capsys, "chi", "--config", str(tmp_path / "missing.ini"))[0] == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[device]\nnot_a_key = 1\n")
    assert run(capsys, "chi", "--config", str(bad))[0] == 2
    assert run(capsys, "numbersplit", "fit", "--input", str(tmp_path / "none.csv"))[0] == 2
    junk = tmp_path / "junk.txt"
    junk.write_text("[capacitance]\n1 0\n")
    assert run(capsys, "circuit", "reduce", "--network", str(junk), "--coord", "q:1:0")[0] == 2
    # pure dephasing with T2 > 2 T1 is a physics failure
    worse = tmp_path / "worse.ini"
    worse.write_text("[device]\nt2eq_us = 10.0\n")
    code, out = run(capsys, "decohere", "coop", "--config", str(worse), "--out", str(tmp_path))
    assert code == 1 and "ValueError" in out.err
    with pytest.raises(SystemExit) as exc:
        main(["chi", "--jobs", "0"])
    assert exc.value.code == 2


def test_numbersplit_deterministic_and_fits(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        code, _ = run(capsys, "numbersplit", "synth", "--seed", "5", "--traces", "4",
                      "--out", str(d))
        assert code == 0
        outs.append((d / "numbersplit_synth.csv").read_bytes())
    assert outs[0] == outs[1]
    d = tmp_path / "a"
    code, _ = run(capsys, "numbersplit", "fit", "--input", str(d / "numbersplit_synth.csv"),
                  "--window", "813.5", "816.5", "--two-chi", "2.2", "--out", str(d))
    assert code == 0
    rep = json.loads((d / "numbersplit_fit.json").read_text())
    assert rep["two_chi_mhz"] == pytest.approx(2.23, abs=0.15)
    fit_bytes = (d / "numbersplit_fit.json").read_bytes()
    run(capsys, "numbersplit", "fit", "--input", str(d / "numbersplit_synth.csv"),
        "--window", "813.5", "816.5", "--two-chi", "2.2", "--out", str(d))
    assert (d / "numbersplit_fit.json").read_bytes() == fit_bytes


def test_numbersplit_fit_needs_window(tmp_path, capsys):
    run(capsys, "numbersplit", "synth", "--traces", "3", "--out", str(tmp_path))
    code, out = run(capsys, "numbersplit", "fit", "--input", str(tmp_path / "numbersplit_synth.csv"))
    assert code == 2 and "--window" in out.err


def test_circuit_reduce(tmp_path, capsys):
    net = tmp_path / "net.txt"
    net.write_text(NETWORK)
    code, _ = run(capsys, "circuit", "reduce", "--network", str(net), "--coord", "q:1:0",
                  "--coord", "m:2:0", "--f-mode", "690", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "circuit.json").read_text())
    assert rep["coordinates"] == ["q", "m"]
    assert rep["beta"]["qm"] > 0
    assert rep["g_mhz"]["m"] > 0


def test_decohere_fit_roundtrip(tmp_path, capsys):
    t = np.linspace(0, 5, 40)
    src = tmp_path / "decay.csv"
    io.write_csv(src, ["delay_us", "signal"], zip(t, np.exp(-t / 0.85)))
    code, _ = run(capsys, "decohere", "fit", "--input", str(src), "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "decohere_fit.json").read_text())
    assert rep["one_over_e_us"] == pytest.approx(0.85, rel=1e-4)


def test_sim_rabi_small_grid(tmp_path, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL_DIMS)
    argv = ["sim", "rabi", "--config", str(cfg), "--v0-grid", "0", "300", "2",
            "--fmod-grid", "150", "160", "2", "--dt", "0.2"]
    code, _ = run(capsys, *argv, "--out", str(tmp_path / "a"))
    assert code == 0
    header, data = io.read_csv(tmp_path / "a" / "rabi.csv")
    assert data.shape == (4, 5)
    assert np.all((data[:, 3] >= -1e-9) & (data[:, 3] <= 1 + 1e-9))
    run(capsys, *argv, "--out", str(tmp_path / "b"), "--jobs", "2")
    assert (tmp_path / "a" / "rabi.csv").read_bytes() == (tmp_path / "b" / "rabi.csv").read_bytes()


def test_config_layers(tmp_path):
    cfg = load_config()
    assert cfg.device.e_c_ghz == 0.8016 and cfg.device.t1m_us == (0.85, 4.11, 29.6)
    p = tmp_path / "c.ini"
    p.write_text("[pulse]\nf_mod = 150\n")
    assert load_config(p).pulse.f_mod == 150.0
    assert load_config(p, {"pulse": {"f_mod": 152}}).pulse.f_mod == 152.0
    p.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[dims]\nn_phonon = many\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(overrides={"run": {"colour": "blue"}})


def test_io_roundtrip(tmp_path):
    rows = [[0.1, 1 / 3, 7], [2.0, -1e-20, 8]]
    path = io.write_csv(tmp_path / "x.csv", ["a", "b", "c"], rows)
    header, data = io.read_csv(path)
    assert header == ["a", "b", "c"]
    assert np.allclose(data, rows, rtol=1e-11)
    assert json.loads(io.dumps({"x": np.float64(np.nan), "y": np.arange(2), "z": np.inf})) == \
        {"x": None, "y": [0, 1], "z": "inf"}
    (tmp_path / "r.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError):
        io.read_csv(tmp_path / "r.csv")
