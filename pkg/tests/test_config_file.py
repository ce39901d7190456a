import pytest

from phaselab.cli.config_file import build_config, dump_config, load_config, parse_lines
from phaselab.errors import ConfigError
from phaselab.models import ExperimentKind, Normalization

DENSITY = """\
# density run
experiment.kind = density_scan
params.s = 0.75

potential.m = 3
potential.normalization = appendix
scan.radii = 1, 2, 4
scan.thetas = 0.0, -0.2
grid.box_radius = 16
"""


class TestParse:
    def test_lists_and_comments(self):
        data, lines = parse_lines(DENSITY, "density.cfg")
        assert data["radii"] == ["1", "2", "4"]
        assert data["thetas"] == ["0.0", "-0.2"]
        assert lines["experiment"] == 2
        assert lines["radii"] == 7

    def test_typed_config(self):
        cfg = build_config(DENSITY, "density.cfg")
        assert cfg.experiment == ExperimentKind.DENSITY_SCAN
        assert cfg.radii == [1.0, 2.0, 4.0]
        assert cfg.thetas == (0.0, -0.2)
        assert cfg.normalization == Normalization.APPENDIX
        assert cfg.omega == 16.0

    @pytest.mark.parametrize("text,fragment", [
        ("experiment.kind = minimize\nnot a key\n", "cfg:2: expected"),
        ("experiment.kind = minimize\nparams.t = 3\n", "cfg:2: unknown key"),
        ("experiment.kind = minimize\nparams.s = 0.2\nparams.s = 0.3\n", "cfg:3: duplicate key"),
        ("experiment.kind = minimize\nparams.s =\n", "cfg:2: empty value"),
    ])
    def test_line_errors(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_lines(text, "cfg")


class TestValidation:
    def test_missing_kind(self):
        with pytest.raises(ConfigError, match="experiment.kind"):
            build_config("params.s = 0.5\n", "cfg")

    def test_field_error_points_at_its_line(self):
        with pytest.raises(ConfigError, match=r"^cfg:3: "):
            build_config("experiment.kind = minimize\n\nparams.s = 1.5\n", "cfg")

    def test_model_error_points_at_the_named_field(self):
        text = "experiment.kind = density_scan\nparams.s = 0.5\ngrid.box_radius = 8\nscan.radii = 1, 2, 4\n"
        with pytest.raises(ConfigError, match=r"^cfg:4: .*B_3r"):
            build_config(text, "cfg")

    def test_missing_requirement_blames_the_kind(self):
        with pytest.raises(ConfigError, match=r"^cfg:1: .*requires s"):
            build_config("experiment.kind = barrier_sweep\nscan.R_list = 2, 4\n", "cfg")

    def test_barrier_grid_resolution(self):
        text = "experiment.kind = barrier_sweep\nparams.s = 0.5\nscan.R_list = 2, 4\ngrid.h = 0.5\n"
        with pytest.raises(ConfigError, match="under-resolves"):
            build_config(text, "cfg")

    def test_two_phase_exterior_is_one_dimensional(self):
        text = "experiment.kind = minimize\nparams.s = 0.5\nparams.n = 2\n"
        with pytest.raises(ConfigError, match="one-dimensional"):
            build_config(text, "cfg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")


class TestDump:
    def test_resolved_config_reparses_to_itself(self):
        cfg = build_config(DENSITY, "density.cfg")
        assert build_config(dump_config(cfg), "dump") == cfg

    def test_booleans_are_lowercase(self):
        cfg = build_config("experiment.kind = potential_check\nscan.stable = true\n", "cfg")
        assert "scan.stable = true" in dump_config(cfg)

    def test_unset_optionals_are_skipped(self, write_config):
        cfg = load_config(write_config("experiment.kind = potential_check\n"))
        text = dump_config(cfg)
        assert "params.s =" not in text
        assert text.startswith("experiment.kind = potential_check\n")
