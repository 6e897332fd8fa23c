import json

import pytest

from main import EXIT_GATE, EXIT_IO, EXIT_OK, EXIT_USAGE, base_settings, dispatch
from results_store import ResultStore


def run(*argv):
    return dispatch([str(a) for a in argv])


class TestUsage:
    def test_help(self):
        assert run("--help") == EXIT_OK

    def test_missing_command(self):
        assert run() == EXIT_USAGE

    def test_unknown_flag(self, tmp_path):
        assert run("posterior", "--bogus", "--out", tmp_path) == EXIT_USAGE

    def test_bad_number_list(self, tmp_path):
        assert run("posterior", "--sigma-w-grid", "1,two", "--out", tmp_path) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert run("posterior", "--config", tmp_path / "nope.json", "--out", tmp_path) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 1, "colour": "blue"}))
        assert run("posterior", "--config", path, "--out", tmp_path) == EXIT_USAGE

    def test_two_values_where_one_is_needed(self, tmp_path):
        assert run("posterior", "--q", "0.02,0.05", "--out", tmp_path) == EXIT_USAGE

    def test_output_dir_is_a_file(self, tmp_path):
        blocker = tmp_path / "taken"
        blocker.write_text("")
        assert run("posterior", "--out", blocker) == EXIT_IO


def test_posterior_writes_density_per_noise_level(tmp_path):
    assert run("posterior", "--sigma-w-grid", "0.5,1,2,4", "--x0-grid", "2.5", "--out", tmp_path) == EXIT_OK
    densities = sorted(tmp_path.glob("posterior_q0.05_sx5_L4_sw*_x2.5.csv"))
    assert len(densities) == 4
    sidecar = ResultStore.load_sidecar(tmp_path / "posterior_q0.05_sx5_L4.json")
    assert sidecar["command"] == "posterior"
    assert sidecar["config"]["sigma_w_grid"] == "0.5,1,2,4"


def test_boundary_single_parameter_set(tmp_path):
    rc = run("boundary", "--q", "0.05", "--sigma-x", "5", "--sigma-w-grid", "linspace:0.5:6:8", "--out", tmp_path)
    assert rc == EXIT_OK
    sigma_w, columns = ResultStore.load_boundary(tmp_path / "boundary_q0.05_sx5_L4.csv")
    assert len(sigma_w) == 8
    assert set(columns) == {"x0_star_bht", "x0_star_csbp"}
    assert all(b <= c for b, c in zip(columns["x0_star_bht"], columns["x0_star_csbp"]))
    assert (tmp_path / "boundary_q0.05_sx5_L4_delta_sensitivity.csv").exists()


def test_boundary_bht_only(tmp_path):
    rc = run("boundary", "--q", "0.05", "--sigma-x", "5", "--sigma-w-grid", "1,2",
             "--detector", "bht", "--out", tmp_path)
    assert rc == EXIT_OK
    _, columns = ResultStore.load_boundary(tmp_path / "boundary_q0.05_sx5_L4.csv")
    assert set(columns) == {"x0_star_bht"}
    assert not (tmp_path / "boundary_q0.05_sx5_L4_delta_sensitivity.csv").exists()


def test_decoupled_sweep_replays_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run("sweep", "--out", first) == EXIT_OK
    stem = "heatmap_q0.02_sx10_L4_decoupled"
    assert run("sweep", "--config", first / f"{stem}.json", "--out", second) == EXIT_OK
    assert (first / f"{stem}.csv").read_bytes() == (second / f"{stem}.csv").read_bytes()


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"x0_grid": [1.0, 2.0], "sigma_w_grid": [1.0]}))
    assert run("sweep", "--config", path, "--x0-grid", "3", "--out", tmp_path) == EXIT_OK
    sidecar = ResultStore.load_sidecar(tmp_path / "heatmap_q0.02_sx10_L4_decoupled.json")
    assert sidecar["sweep"]["x0_grid"] == [3.0]
    assert sidecar["sweep"]["sigma_w_grid"] == [1.0]


def test_decode_small_instance(tmp_path):
    rc = run("decode", "--n", 64, "--m", 32, "--L", 3, "--grid-points", 512, "--seed", 5, "--out", tmp_path)
    assert rc in (EXIT_OK, EXIT_GATE)
    stem = "decode_q0.02_sx10_L3_sw1"
    lines = (tmp_path / f"{stem}.csv").read_text().splitlines()
    assert lines[0] == "index,x0,support,spike_mass,slab_mean,bht,csbp"
    assert len(lines) == 65
    assert (tmp_path / f"{stem}_iterations.csv").exists()
    assert (tmp_path / f"{stem}_matrix.txt").exists()
    assert "diagnostics" in ResultStore.load_sidecar(tmp_path / f"{stem}.json")


def test_base_settings_cover_every_flag():
    from main import FLAG_KEYS
    assert set(FLAG_KEYS.values()) <= set(base_settings())


def test_boundary_replays_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    flags = ("--q", "0.05", "--sigma-x", "5", "--sigma-w-grid", "linspace:0.5:6:8")
    assert run("boundary", *flags, "--out", first) == EXIT_OK
    stem = "boundary_q0.05_sx5_L4"
    assert run("boundary", "--config", first / f"{stem}.json", "--out", second) == EXIT_OK
    assert (first / f"{stem}.csv").read_bytes() == (second / f"{stem}.csv").read_bytes()


def test_sidecar_replay_without_out_keeps_original(tmp_path):
    stem = "heatmap_q0.02_sx10_L4_decoupled"
    assert run("sweep", "--x0-grid", "1,6", "--out", tmp_path) == EXIT_OK
    original = tmp_path / f"{stem}.csv"
    original.write_text(original.read_text() + "# marker\n")
    assert run("sweep", "--config", tmp_path / f"{stem}.json") == EXIT_OK
    assert original.read_text().endswith("# marker\n")
    assert (tmp_path / "replay" / f"{stem}.csv").exists()
