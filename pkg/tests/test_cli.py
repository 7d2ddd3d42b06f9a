import json

import pytest

from kp2lab import cli
from kp2lab.field import RefinementError, SpectralField, write_field


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_linear_defaults_in_range(tmp_path):
    code, out = run(tmp_path, "strichartz-linear")
    s = summary(out)
    assert code == 0 and 0.105 <= s["results"]["slope"] <= 0.145
    # full resolved config is echoed, defaults included
    assert s["config"]["N_list"] == [64, 128, 256, 512, 1024, 2048, 4096]
    assert s["config"]["gamma"] == "1" and "wall_time" in s
    lines = (out / "results.csv").read_bytes().split(b"\n")
    assert lines[0] == b"abscissa,ratio,refinement_delta" and b"\r" not in b"".join(lines)
    assert (out / "figure.svg").read_text().startswith("<svg")


@pytest.mark.parametrize("body,extra", [
    ("[strichartz-linear]\nbogus = 1\n", []),
    ("[not-an-experiment]\nx = 1\n", []),
    ("this is not ini\n", []),
    ("[strichartz-linear]\nN_list = 64,abc\n", []),
    ("[strichartz-linear]\nN_list = 64,96,128,256\n", []),
    ("[strichartz-linear]\ngamma = 2\n", []),
    ("", ["--set", "nokey=3"]),
    ("", ["--set", "novalue"]),
])
def test_malformed_config_exit_2_no_artifacts(tmp_path, body, extra):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    code, out = run(tmp_path, "strichartz-linear", "--config", str(cfg), *extra)
    assert code == 2 and not out.exists()


def test_missing_config_and_unknown_experiment(tmp_path):
    code, out = run(tmp_path, "strichartz-linear", "--config", str(tmp_path / "nope.ini"))
    assert code == 2 and not out.exists()
    assert cli.main(["no-such-experiment"]) == 2


def test_config_file_and_set_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[counting-suite]\nn_cases = 50   ; fewer cases\nseed = 3\n\n[solve]\nnx = 32\n")
    code, out = run(tmp_path, "counting-suite", "--config", str(cfg), "--set", "seed=4")
    s = summary(out)
    assert code == 0 and s["config"]["n_cases"] == 50 and s["config"]["seed"] == 4


def test_rerun_and_thread_count_byte_identical(tmp_path, monkeypatch):
    args = [("strichartz-linear", "--set", "N_list=64,128,256,512"),
            ("bilinear-suite", "--set", "n_cases=40"),
            ("spaces-suite", "--set", "N_list=8,16", "--set", "slack_T_list=1/4,1/8",
             "--set", "n_seeds=1")]
    for a in args:
        blobs = []
        for i, th in enumerate(("1", "4", "4")):
            monkeypatch.setenv("KP2_THREADS", th)
            _, out = run(tmp_path, *a, name=f"{a[0]}-{i}")
            blobs.append((out / "results.csv").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]


def test_gate_failure_exit_1(tmp_path):
    code, out = run(tmp_path, "strichartz-linear", "--set", "N_list=64,128,256,512",
                    "--set", "slope_max=0.05")
    s = summary(out)
    assert code == 1 and not s["passed"] and not s["gates"]["slope"]["pass"]


def test_refinement_failure_exit_3(tmp_path, monkeypatch):
    def boom(p):
        raise RefinementError("quadrature did not settle")
    monkeypatch.setitem(cli.DISPATCH, "strichartz-linear", boom)
    code, out = run(tmp_path, "strichartz-linear")
    assert code == 3 and not out.exists()


def test_cover_writes_rectangles(tmp_path):
    code, out = run(tmp_path, "flatset-cover", "--set", "k_list=4,6")
    assert code == 0
    rect = (out / "rectangles.csv").read_text().splitlines()
    assert rect[0] == "xi0,xi1,eta0,eta1" and len(rect) > 1
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0].startswith("k,rectangles,misses,max_overlap") and len(rows) == 3


def test_solve_from_field_file(tmp_path):
    f = SpectralField([1, -1, 2, -2], [1, -1, 0, 0], [0.2, 0.2, 0.1j, -0.1j], real=True)
    path = tmp_path / "u0.txt"
    write_field(f, path)
    code, out = run(tmp_path, "solve", "--set", f"initial={path}", "--set", "nx=32",
                    "--set", "ny=32", "--set", "T_end=1/4", "--set", "dt=1/128")
    s = summary(out)
    assert code == 0 and s["results"]["mass_drift"] <= 1e-8
    head = (out / "results.csv").read_text().splitlines()[0]
    assert head.startswith("t,M,E,band_1")
    code, out = run(tmp_path, "solve", "--set", "initial=/no/such/file", name="missing")
    assert code == 2 and not out.exists()


def test_flatset_probe_gates(tmp_path):
    code, out = run(tmp_path, "flatset-probe", "--set", "k_min=8", "--set", "k_max=16")
    s = summary(out)
    assert code == 0 and set(s["gates"]) == {"generic_xi", "generic_eta", "degenerate_xi",
                                             "degenerate_null"}
