import json
import math
import struct
import textwrap

import numpy as np
import pytest
import yaml

from cbfed.cli import run_command
from cbfed.config import ConfigError, emit_config, load_config, parse_config
from cbfed.integrator import IntegratorConfig, integrate_period
from cbfed.io import (
    CSV_COLUMNS,
    CheckpointError,
    checkpoint_io,
    manifest_digest,
    read_checkpoint,
    read_diagnostics,
    read_manifest,
    write_checkpoint,
    write_diagnostics,
    write_manifest,
)
from cbfed.spectral import GridSpec, PhysicalParams, SpectralField, random_field

MINIMAL = """
params: {mu: 1.0, alpha: 1.0, beta: 1.0, r: 3}
grid: {n_per_axis: 16}
"""

CONTRACT_YAML = """
params: {mu: 1.0, alpha: 1.0, beta: 1.0, gamma: -0.5, r: 5, q: 2, box_length: 3.141592653589793}
grid: {n_per_axis: 16}
integrator: {n_steps: 64}
forcing:
  scale: 5.0
  profiles:
    - {wave_index: [1, 0], amplitude: [0.0, 1.0], temporal: [0.5, 0.5]}
    - {wave_index: [1, 1], amplitude: [1.0, -1.0], temporal: [0.0, [0.3, -0.2]]}
solver: {tol: 1.0e-9, max_iter: 50}
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


class TestConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.params.q == 1 and cfg.params.gamma == 0 and cfg.params.period_T == 1
        assert cfg.grid.dim == 2 and cfg.grid.box_length == pytest.approx(2 * math.pi)
        assert cfg.integrator == IntegratorConfig()
        assert cfg.solver.mode == "periodic" and cfg.solver.tol == 1e-9 and cfg.solver.max_iter == 50
        assert cfg.solver.acceleration == "none"
        assert cfg.forcing.profiles == () and cfg.forcing.random is None
        assert cfg.output.diagnostics == "diagnostics.csv"
        assert cfg.build_forcing().is_zero

    def test_r_must_exceed_q(self):
        with pytest.raises(ConfigError, match="r must exceed q"):
            parse_config("params: {mu: 1, alpha: 1, beta: 1, r: 2, q: 3}\ngrid: {n_per_axis: 16}\n")

    @pytest.mark.parametrize("doc", [MINIMAL, CONTRACT_YAML])
    def test_round_trip(self, doc):
        cfg = parse_config(doc)
        again = parse_config(emit_config(cfg))
        assert again == cfg
        assert emit_config(again) == emit_config(cfg)

    def test_random_forcing_round_trip(self):
        cfg = parse_config(MINIMAL + "forcing: {random: {seed: 18446744073709551615, amplitude: 2.0}}\nsweep: {beta: [0.5, 1.0]}\n")
        assert parse_config(emit_config(cfg)) == cfg
        assert cfg.build_forcing() == parse_config(emit_config(cfg)).build_forcing()

    @pytest.mark.parametrize(
        "extra,path",
        [
            ("solver: {tol: 1e-9, tolerance: 1}", "solver.tolerance"),
            ("integrator: {n_steps: 8}", "integrator.n_steps"),
            ("surprise: 1", "surprise"),
            ("solver: {acceleration: 'anderson(0)'}", "solver"),
            ("forcing: {profiles: [{wave_index: [1, 0], amplitude: [1.0, 'x']}]}", "forcing.profiles.0.amplitude"),
        ],
    )
    def test_errors_name_the_path(self, extra, path):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL + extra + "\n")
        assert path in str(info.value)

    def test_grid_inherits_geometry_and_checks_consistency(self):
        cfg = parse_config("params: {mu: 1, alpha: 1, beta: 1, r: 3, dim: 3, box_length: 2.0}\ngrid: {n_per_axis: 8}\n")
        assert cfg.grid.dim == 3 and cfg.grid.box_length == 2.0
        with pytest.raises(ConfigError, match="box_length"):
            parse_config("params: {mu: 1, alpha: 1, beta: 1, r: 3}\ngrid: {n_per_axis: 8, box_length: 2.0}\n")

    def test_exclusive_forcing(self):
        doc = MINIMAL + "forcing: {random: {seed: 1}, profiles: [{wave_index: [1, 0], amplitude: [0, 1]}]}\n"
        with pytest.raises(ConfigError, match="either"):
            parse_config(doc)

    def test_malformed_yaml_and_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("params: {mu: 1,")
        with pytest.raises(ConfigError, match="mapping"):
            parse_config("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")


@pytest.fixture(scope="module")
def short_traj():
    p = PhysicalParams(mu=0.5, alpha=0.3, beta=1.0, gamma=0.2, r=3, q=2)
    g = GridSpec(n_per_axis=8)
    from cbfed.forcing import random_forcing

    v0 = random_field(g, rng=np.random.default_rng(0))
    return integrate_period(v0, p, random_forcing(g, 1.0, seed=1), IntegratorConfig(n_steps=32))


class TestDiagnostics:
    def test_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        write_diagnostics(None, path)
        assert path.read_text().splitlines() == [",".join(CSV_COLUMNS)]

    def test_line_count_and_sums(self, tmp_path, short_traj):
        path = tmp_path / "d.csv"
        write_diagnostics(short_traj, path)
        assert len(path.read_text().splitlines()) == len(short_traj.times) + 1
        back = read_diagnostics(path)
        assert tuple(back) == CSV_COLUMNS
        assert abs(back["time"].sum() - short_traj.times.sum()) <= 1e-12
        for key in CSV_COLUMNS[1:-1]:
            assert abs(back[key].sum() - short_traj.diagnostics[key].sum()) <= 1e-12
        assert back["step_energy_residual"][0] == 0

    def test_unwritable_path(self, tmp_path, short_traj):
        with pytest.raises(OSError, match="nodir"):
            write_diagnostics(short_traj, tmp_path / "nodir" / "d.csv")


class TestManifest:
    def test_digest_ignores_wall_time(self, tmp_path):
        a = {"command": "x", "value": 1.5, "wall_time": 3.0, "nested": {"z": [1, 2]}}
        b = dict(a, wall_time=99.0)
        assert manifest_digest(a) == manifest_digest(b)
        assert manifest_digest(a) != manifest_digest(dict(a, value=1.6))
        d = write_manifest(a, tmp_path / "m.json")
        back = read_manifest(tmp_path / "m.json")
        assert back["digest"] == d == manifest_digest(back)
        assert back["value"] == 1.5


class TestCheckpoint:
    @pytest.mark.parametrize("grid", [GridSpec(n_per_axis=16), GridSpec(dim=3, n_per_axis=8, box_length=2.5)])
    def test_round_trip_bit_exact(self, tmp_path, grid, rng):
        for fld in (SpectralField.zeros(grid), random_field(grid, rng=rng)):
            path = tmp_path / "c.cbfd"
            checkpoint_io(fld, path, "write")
            back = checkpoint_io(None, path, "read")
            assert back.grid == grid
            assert back.coeffs.tobytes() == fld.coeffs.tobytes()
            write_checkpoint(back, tmp_path / "c2.cbfd")
            assert (tmp_path / "c2.cbfd").read_bytes() == path.read_bytes()

    def test_layout(self, tmp_path):
        grid = GridSpec(n_per_axis=8)
        c = np.zeros(grid.field_shape, complex)
        c[0, 1, 0] = c[0, -1, 0] = 0.5  # cos(x1) in the first component (not solenoidal; layout only)
        path = tmp_path / "c.cbfd"
        write_checkpoint(SpectralField(grid, c), path)
        raw = path.read_bytes()
        assert struct.unpack_from("<4sIIId", raw) == (b"CBFD", 1, 2, 8, grid.box_length)
        body = np.frombuffer(raw, "<f8", offset=24).reshape(2, 8, 8, 2)
        # lexicographic wave indices from -4 to 3 on each axis
        assert body[0, 4 + 1, 4, 0] == 0.5 and body[0, 4 - 1, 4, 0] == 0.5
        assert np.count_nonzero(body) == 2

    def test_header_mismatch(self, tmp_path, rng):
        path = tmp_path / "c.cbfd"
        write_checkpoint(random_field(GridSpec(n_per_axis=8), rng=rng), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checkpoint header mismatch"):
            read_checkpoint(path)

    def test_version_mismatch(self, tmp_path, rng):
        path = tmp_path / "c.cbfd"
        write_checkpoint(random_field(GridSpec(n_per_axis=8), rng=rng), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 7)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version mismatch"):
            read_checkpoint(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "c.cbfd"
        write_checkpoint(random_field(GridSpec(n_per_axis=8), rng=rng), path)
        raw = path.read_bytes()
        for cut in (10, len(raw) - 16):
            path.write_bytes(raw[:cut])
            with pytest.raises(CheckpointError, match="truncated"):
                read_checkpoint(path)

    def test_bad_direction(self, tmp_path):
        with pytest.raises(ValueError):
            checkpoint_io(None, tmp_path / "c", "append")


class TestCli:
    def test_thresholds(self, capsys):
        code = run_command("thresholds --mu 1 --beta 1 --gamma 0 --r 5 --q 1 --alpha 0 --lambda1 1".split())
        assert code == 0
        rep = yaml.safe_load(capsys.readouterr().out)
        assert rep["zeta"] == pytest.approx(0.5, rel=1e-14)
        assert rep["L"] == pytest.approx(0.5, rel=1e-14)

    def test_zero_forcing_solves_to_zero(self, tmp_path):
        cfg = write(tmp_path, MINIMAL + "integrator: {n_steps: 32}\n")
        out = tmp_path / "out"
        assert run_command(["solve-periodic", "--config", str(cfg), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.json")
        assert man["report"]["converged"] and man["report"]["final_h_norm"] <= 1e-9
        assert man["status"] == 0 and man["digest"] == manifest_digest(man)
        assert not read_checkpoint(out / "final_state.cbfd").coeffs.any()

    def test_max_iter_one_is_non_convergence(self, tmp_path):
        cfg = write(tmp_path, CONTRACT_YAML)
        out = tmp_path / "out"
        assert run_command(["solve-periodic", "--config", str(cfg), "--out", str(out), "--max-iter", "1"]) == 2
        man = read_manifest(out / "manifest.json")
        assert man["report"]["converged"] is False and man["status"] == 2
        assert read_diagnostics(out / "diagnostics.csv")["time"].size == 0

    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["solve-periodic"],
            ["thresholds", "--mu", "1"],
            ["thresholds", "--mu", "x", "--beta", "1", "--r", "5", "--lambda1", "1"],
            ["sweep", "--config", "c.yaml", "--jobs", "two"],
        ],
    )
    def test_bad_flags_exit_one(self, argv, capsys):
        assert run_command(argv) == 1
        assert "usage" in capsys.readouterr().err

    def test_errors_exit_one(self, tmp_path, capsys):
        assert run_command(["verify", "--config", str(tmp_path / "missing.yaml")]) == 1
        bad = write(tmp_path, MINIMAL + "oops: 1\n")
        assert run_command(["solve-linear", "--config", str(bad)]) == 1
        assert "oops" in capsys.readouterr().err
        assert run_command("thresholds --mu 1 --beta 0 --r 5 --lambda1 1".split()) == 1

    def test_deterministic_digest(self, tmp_path):
        cfg = write(tmp_path, MINIMAL + "integrator: {n_steps: 32}\nforcing: {random: {seed: 5, amplitude: 1.0}}\n")
        digests = []
        for name in ("a", "b"):
            assert run_command(["solve-periodic", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
            digests.append(read_manifest(tmp_path / name / "manifest.json")["digest"])
        assert digests[0] == digests[1]
        assert (tmp_path / "a" / "final_state.cbfd").read_bytes() == (tmp_path / "b" / "final_state.cbfd").read_bytes()

    def test_solve_linear_and_picard(self, tmp_path):
        cfg = write(tmp_path, CONTRACT_YAML.replace("scale: 5.0", "scale: 1.0"))
        assert run_command(["solve-linear", "--config", str(cfg), "--out", str(tmp_path / "lin")]) == 0
        lines = (tmp_path / "lin" / "diagnostics.csv").read_text().splitlines()
        assert len(lines) == 64 + 2
        assert run_command(["picard", "--config", str(cfg), "--out", str(tmp_path / "pic")]) == 0
        assert read_manifest(tmp_path / "pic" / "manifest.json")["report"]["method"] == "picard_strong"

    def test_verify(self, tmp_path):
        cfg = write(tmp_path, CONTRACT_YAML)
        assert run_command(["verify", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 0
        checks = read_manifest(tmp_path / "v" / "manifest.json")["checks"]
        assert set(checks) >= {"converged", "periodicity", "energy_balance", "apriori_bound", "invariant_ball", "contraction"}
        assert all(c["passed"] for c in checks.values())

    def test_sweep(self, tmp_path):
        doc = CONTRACT_YAML + "sweep: {beta: [1.0, 2.0], amplitude: [0.5, 1.0]}\n"
        cfg = write(tmp_path, doc)
        out = tmp_path / "sw"
        assert run_command(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == "index,beta,gamma,amplitude,status" and len(rows) == 5
        for i in range(4):
            man = json.loads((out / f"point_{i:03d}" / "manifest.json").read_text())
            assert man["status"] == 0
        assert read_manifest(out / "manifest.json")["status"] == 0

    def test_sweep_requires_section(self, tmp_path):
        cfg = write(tmp_path, CONTRACT_YAML)
        assert run_command(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")]) == 1
