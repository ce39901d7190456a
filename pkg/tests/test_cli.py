import json

import pytest

from phaselab.cli.commands import main
from phaselab.cli.runner import exit_code_for
from phaselab.models import ExperimentKind, ScanReport

POTENTIAL = "experiment.kind = potential_check\npotential.m = 3\npotential.c = 0.5\nscan.samples = 401\n"

GAMMA = """\
experiment.kind = gamma_sweep
params.s_list = 0.5, 0.999
grid.h = 0.00390625
grid.box_radius = 1.5
output.path = gamma.csv
"""

EPSILON = """\
experiment.kind = epsilon_examples
params.s = 0.25
grid.h = 0.05
grid.box_radius = 2
grid.omega_radius = 1
field.bump_scale = 0.5
certify.Q = 2
output.path = eps.csv
"""


def read_manifest(path):
    return json.loads(path.read_text())


class TestListAndValidate:
    def test_machine_listing(self, capsys):
        assert main(["list", "--machine"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == len(ExperimentKind)
        assert all(line.count("\t") == 2 for line in lines)
        assert lines[0].startswith("potential_check\t")

    def test_human_listing(self, capsys):
        assert main(["list"]) == 0
        assert "verifies:" in capsys.readouterr().out

    def test_validate_prints_resolved_config(self, write_config, capsys):
        assert main(["validate", str(write_config(POTENTIAL))]) == 0
        out = capsys.readouterr().out
        assert "experiment.kind = potential_check" in out
        assert "potential.m = 3.0" in out
        assert "grid.h = 0.1" in out

    def test_validate_reports_the_line(self, write_config, capsys):
        path = write_config("experiment.kind = minimize\nparams.s = 2\n")
        assert main(["validate", str(path)]) == 2
        assert f"{path}:2:" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.cfg")]) == 2

    def test_negative_threads(self, write_config, tmp_path):
        assert main(["--threads", "-1", "run", str(write_config(POTENTIAL))]) == 2


class TestRun:
    def test_potential_check_writes_table_and_manifest(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["--output-dir", str(out), "run", str(write_config(POTENTIAL))]) == 0
        table = (out / "result.csv").read_text()
        assert table.startswith("# experiment.kind = potential_check\n")
        assert "m,k,degree,identity_residual,recursion_exact" in table

        manifest = read_manifest(out / "result.manifest.json")
        assert manifest["exit_code"] == 0
        assert manifest["experiment"] == "potential_check"
        assert manifest["summary"]["passed"]
        assert manifest["summary"]["metrics"]["q"] > 0.0
        assert "numpy" in manifest["versions"]

    def test_rerun_is_byte_identical(self, write_config, tmp_path):
        config = str(write_config(POTENTIAL))
        assert main(["--output-dir", str(tmp_path / "a"), "run", config]) == 0
        assert main(["--output-dir", str(tmp_path / "b"), "run", config]) == 0
        assert (tmp_path / "a" / "result.csv").read_bytes() == (tmp_path / "b" / "result.csv").read_bytes()

    def test_seed_override_lands_in_the_manifest(self, write_config, tmp_path):
        assert main(["--output-dir", str(tmp_path), "--seed", "7", "run", str(write_config(POTENTIAL))]) == 0
        manifest = read_manifest(tmp_path / "result.manifest.json")
        assert manifest["seed"] == 7
        assert "# run.seed = 7" in (tmp_path / "result.csv").read_text()

    def test_unresolved_gamma_point_is_flagged_not_fatal(self, write_config, tmp_path):
        assert main(["--output-dir", str(tmp_path), "run", str(write_config(GAMMA))]) == 0
        manifest = read_manifest(tmp_path / "gamma.manifest.json")
        assert "unresolved_s=0.999" in manifest["summary"]["flags"]
        assert "resolved" in (tmp_path / "gamma.csv").read_text()

    def test_epsilon_examples(self, write_config, tmp_path):
        assert main(["--output-dir", str(tmp_path), "run", str(write_config(EPSILON))]) == 0
        table = (tmp_path / "eps.csv").read_text()
        assert "constant_-1@B_0.5" in table
        assert "min_epsilon" in table
        metrics = read_manifest(tmp_path / "eps.manifest.json")["summary"]["metrics"]
        assert 0.0 < metrics["min_epsilon"] <= metrics["energy"] * (1.0 + 1e-12)


class TestExitCodes:
    def test_divergence(self):
        report = ScanReport(experiment=ExperimentKind.MINIMIZE, rows=1, flags=["kinetic_diverged"])
        assert exit_code_for(report) == 3

    def test_failed_certificate(self):
        report = ScanReport(experiment=ExperimentKind.EPSILON_EXAMPLES, rows=2, passed=False)
        assert exit_code_for(report) == 4

    def test_flags_alone_do_not_fail(self):
        report = ScanReport(experiment=ExperimentKind.GAMMA_SWEEP, rows=2, flags=["unresolved_s=0.999"])
        assert exit_code_for(report) == 0


def test_density_radius_beyond_a_third_of_omega(write_config, capsys):
    path = write_config("experiment.kind = density_scan\nparams.s = 0.5\ngrid.box_radius = 6\nscan.radii = 1, 3\n")
    assert main(["run", str(path)]) == 2
    assert "B_3r" in capsys.readouterr().err
