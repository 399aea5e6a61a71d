"""Tests for stage chaining, reference tables and comparisons."""
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from src.checkpoint import CheckpointManager
from src.errors import DriftError, StageError
from src.pipeline import (
    ReferenceTable,
    compare_reference,
    descriptor_label,
    run_pipeline,
    worst_row,
)
from src.pipeline_config import load_and_validate
from src.validators import ReferenceMismatchError, ValidationError

HOLE_1_1_2_2 = {"a": 1, "b": 1, "c": 2, "d": 2}


def _fake_state(modulus):
    return SimpleNamespace(modulus=modulus, capacity=1.0 / modulus)


def _write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return load_and_validate(path)


class TestReferenceTable:
    """Test ReferenceTable class."""

    def test_load_shipped_table(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        assert len(table.rows) == 20
        assert {row.source for row in table.rows} == {"this-method", "cited"}

    def test_lookup_by_source(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        rows = table.lookup(HOLE_1_1_2_2, "cited")
        assert len(rows) == 1
        assert rows[0].modulus == pytest.approx(0.19192677723893617, abs=1e-15)
        assert len(table.lookup({"d": 2.0, "c": 2.0, "b": 1.0, "a": 1.0})) == 2

    def test_sources_agree(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        ours, cited = (table.lookup(HOLE_1_1_2_2, s)[0] for s in ("this-method", "cited"))
        assert abs(ours.modulus - cited.modulus) <= 2e-9

    def test_shifted_holes_share_capacity(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        left = table.lookup({"a": 2, "b": 1, "c": 4, "d": 2}, "this-method")[0]
        right = table.lookup({"a": 3, "b": 1, "c": 5, "d": 2}, "this-method")[0]
        assert abs(left.capacity - right.capacity) <= 1e-7

    def test_unknown_source_tag(self):
        data = {"rows": [{"descriptor": {"a": 1}, "modulus": 0.5, "capacity": 2.0, "source": "guess"}]}
        with pytest.raises(ValidationError) as exc_info:
            ReferenceTable.from_dict(data)
        assert exc_info.value.path == "rows[0].source"

    def test_capacity_must_invert_modulus(self):
        data = {"rows": [{"descriptor": {"a": 1}, "modulus": 0.5, "capacity": 2.001, "source": "cited"}]}
        with pytest.raises(ValidationError) as exc_info:
            ReferenceTable.from_dict(data)
        assert exc_info.value.path == "rows[0]"

    def test_incomplete_row(self):
        with pytest.raises(ValidationError):
            ReferenceTable.from_dict({"rows": [{"descriptor": {"a": 1}, "modulus": 0.5}]})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            ReferenceTable.load(tmp_path / "absent.yaml")


class TestCompareReference:
    """Test compare_reference and worst_row."""

    def test_deviations(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        df = compare_reference([(HOLE_1_1_2_2, _fake_state(0.1919267753916537))], table)
        assert len(df) == 2
        ours = df.set_index("source").loc["this-method"]
        assert ours["modulus_abs_dev"] == pytest.approx(0.0, abs=1e-15)
        assert ours["capacity_abs_dev"] < 1e-10
        cited = df.set_index("source").loc["cited"]
        assert cited["modulus_abs_dev"] == pytest.approx(1.847e-9, rel=1e-3)

    def test_worst_row(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        df = compare_reference([(HOLE_1_1_2_2, _fake_state(0.19192677723893617))], table)
        assert worst_row(df)["source"] == "this-method"

    def test_missing_descriptor(self, reference_table_path):
        table = ReferenceTable.load(reference_table_path)
        with pytest.raises(ReferenceMismatchError) as exc_info:
            compare_reference([({"a": 9, "b": 1, "c": 10, "d": 2}, _fake_state(0.1))], table)
        assert "a=9" in str(exc_info.value)

    def test_descriptor_label_is_sorted(self):
        assert descriptor_label({"c": 2, "a": 1}) == "a=1,c=2"


class TestRunPipeline:
    """Test run_pipeline without continuation stages."""

    def test_initial_map_only(self, tmp_path, minimal_config, rect_solution):
        config = _write_config(tmp_path, minimal_config)
        result = run_pipeline(config, out_dir=tmp_path / "out")
        assert result.stage_reports == []
        assert result.modulus == pytest.approx(rect_solution.modulus, abs=1e-14)
        assert [p.name for p in result.outputs] == ["state.json", "state_parameters.csv"]
        assert (tmp_path / "out" / "state.json").exists()

    def test_no_outputs_without_directory(self, tmp_path, minimal_config):
        config = _write_config(tmp_path, minimal_config)
        assert run_pipeline(config).outputs == []

    def test_fresh_run_clears_stale_checkpoints(self, tmp_path, minimal_config, rect_solution):
        config = _write_config(tmp_path, {**minimal_config, "name": "stale"})
        manager = CheckpointManager(str(tmp_path / "checkpoints"))
        manager.save_checkpoint(
            manager.create_checkpoint("stale", 0, 1, rect_solution.state, rect_solution.spec)
        )
        result = run_pipeline(config, checkpoint_dir=tmp_path / "checkpoints")
        assert result.resumed_after is None
        assert manager.get_latest_checkpoint("stale") is None

    def test_parameter_table_is_reproducible(self, tmp_path, minimal_config):
        config = _write_config(tmp_path, minimal_config)
        first = run_pipeline(config, out_dir=tmp_path / "first")
        second = run_pipeline(config, out_dir=tmp_path / "second")
        assert first.outputs[1].read_bytes() == second.outputs[1].read_bytes()

    def test_grid_output(self, tmp_path, minimal_config):
        data = {**minimal_config, "outputs": {"state": False, "grid": {"n_radii": 2, "n_rays": 3}}}
        result = run_pipeline(_write_config(tmp_path, data), out_dir=tmp_path / "out")
        assert [p.name for p in result.outputs] == ["grid.svg"]
        root = ET.parse(result.outputs[0]).getroot()
        polylines = [el for el in root.iter() if el.tag.endswith("polyline")]
        assert len(polylines) == 2 + 3 + 2

    def test_resume_after_last_stage(self, tmp_path, config_dir, short_slit_solution):
        config = load_and_validate(config_dir / "moving_ends_1.json")
        manager = CheckpointManager(str(tmp_path / "checkpoints"))
        manager.save_checkpoint(
            manager.create_checkpoint(
                config.name, 0, 1, short_slit_solution.state, short_slit_solution.spec
            )
        )
        result = run_pipeline(config, resume=True, checkpoint_dir=tmp_path / "checkpoints")
        assert result.resumed_after == 0
        assert result.stage_reports == []
        assert result.modulus == pytest.approx(short_slit_solution.modulus, abs=1e-14)

    def test_stage_failure_is_wrapped(self, tmp_path, config_dir, mocker):
        config = load_and_validate(config_dir / "moving_ends_1.json")
        cause = DriftError("imaginary part too large")
        mocker.patch("src.pipeline.integrate_stage", side_effect=cause)
        with pytest.raises(StageError) as exc_info:
            run_pipeline(config, out_dir=tmp_path / "out")
        assert exc_info.value.stage_index == 0
        assert exc_info.value.__cause__ is cause
        assert not (tmp_path / "out" / "state.json").exists()


@pytest.mark.slow
@pytest.mark.integration
class TestWorkedExamples:
    """End-to-end runs of the shipped multi-stage configs."""

    def test_two_slits_close_a_triangle(self, config_dir):
        result = run_pipeline(load_and_validate(config_dir / "triangle_hole.json"))
        assert result.modulus == pytest.approx(0.21029028897501653, abs=1e-6)
        assert result.state.omega2.imag == pytest.approx(2.6425857078607464, abs=1e-5)
        expected = [0.185196737529923, 3.4688730938781616, 3.8320979743892862, 6.105157164198392]
        x = np.sort(np.mod(result.state.x_outer, 2 * math.pi))
        assert list(x) == pytest.approx(expected, abs=1e-5)
        assert abs(result.state.C1) == pytest.approx(
            abs(0.1299350302810949 + 0.11027609828928062j), abs=1e-5
        )
        assert result.state.c == pytest.approx(-0.1455922673170743 - 1.2449331197330842j, abs=1e-4)

        # Both tips and the two inner base copies meet at the apex.
        (apex,) = result.stage_reports[0].merges
        members = np.sort(np.mod(apex.members, 2 * math.pi))
        expected = [1.8206037902233696, 1.8270349032507693, 1.8270349281572866, 1.8334660411846952]
        assert list(members) == pytest.approx(expected, abs=1e-4)
        assert apex.spread <= 1.3e-2
        inner = np.sort(np.mod(result.state.x_inner, 2 * math.pi))
        expected = [apex.x % (2 * math.pi), 3.827612510793681, 6.109642627793988]
        assert list(inner) == pytest.approx(expected, abs=1e-4)

    def test_four_steps_carve_a_rectangle(self, config_dir):
        result = run_pipeline(load_and_validate(config_dir / "carved_rectangle.json"))
        assert result.modulus == pytest.approx(0.22376354710663857, abs=1e-6)
        assert abs(result.state.C1) == pytest.approx(
            abs(-0.04708877454319929 + 0.12479568610390228j), abs=1e-4
        )
        assert len(result.stage_reports) == 4
        assert result.spec.n_inner == 4

    def test_carved_rectangle_before_the_last_merge(self, config_dir):
        config = load_and_validate(config_dir / "carved_rectangle.json")
        config.stages[-1] = replace(config.stages[-1], merges=[])
        state = run_pipeline(config).state

        assert state.modulus == pytest.approx(0.22376354710663857, abs=1e-6)
        assert state.omega2.imag == pytest.approx(2.8118956629256373, abs=1e-5)
        outer = [0.49730142210229983, 4.088563026275288, 4.217943920435873, 5.9070565839553115]
        assert list(np.sort(np.mod(state.x_outer, 2 * math.pi))) == pytest.approx(outer, abs=1e-5)
        inner = sorted(
            [
                6.171115702928762,
                6.16112894071675,
                6.161128842028749,
                6.1611288420232455,
                6.157826022407041,
                4.303856804569505,
                3.408905071936863,
                0.8254470359051237,
            ]
        )
        # The five prevertices of the closing corner converge slowly.
        assert list(np.sort(np.mod(state.x_inner, 2 * math.pi))) == pytest.approx(inner, abs=1e-4)
        assert state.c == pytest.approx(-0.000055631445885073245 - 1.169959854131041j, abs=1e-4)

    @pytest.mark.parametrize(
        "name, modulus",
        [
            ("rect_hole_1_1_2_2", 0.1919267753916537),
            ("rect_hole_2_1_4_2", 0.16046010545976827),
            ("rect_hole_3_1_5_2", 0.16046010585211312),
            ("rect_hole_4_1_5_2", 0.21312544095079175),
        ],
    )
    def test_rectangular_hole_matches_reference(self, config_dir, tmp_path, name, modulus):
        config = load_and_validate(config_dir / f"{name}.json")
        result = run_pipeline(config, out_dir=tmp_path / "out")
        assert result.modulus == pytest.approx(modulus, abs=1e-7)
        assert (tmp_path / "out" / "comparison.csv").exists()
