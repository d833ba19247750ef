"""WGL1 fields, CSV tables and JSON summaries."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from willmore_lab import __version__
from willmore_lab.artifacts import (
    ArtifactMeta,
    read_table,
    read_wgl,
    write_field_csv,
    write_json,
    write_rows_csv,
    write_wgl,
)
from willmore_lab.errors import GridError
from willmore_lab.field import Grid, ScalarField


### Fixtures


@pytest.fixture
def ramp():
    g = Grid(nx=6, ny=5, h=0.25, x0=-1.0, y0=0.5)
    return ScalarField.from_function(g, lambda x, y: x + 10 * y)


@pytest.fixture
def meta():
    return ArtifactMeta(config_hash="abc123")


class TestWgl:
    def test_header(self, tmp_path, ramp, meta):
        path = write_wgl(tmp_path / "f.wgl", ramp, meta)
        header = path.read_bytes().split(b"\n", 1)[0].decode()
        tokens = header.split()
        assert tokens[:7] == ["WGL1", "6", "5", "0.25", "-1.0", "0.5", "one_sided"]
        assert f"version={__version__}" in tokens
        assert "config=abc123" in tokens

    def test_payload_is_row_major_little_endian(self, tmp_path, ramp):
        path = write_wgl(tmp_path / "f.wgl", ramp)
        payload = path.read_bytes().split(b"\n", 1)[1]
        assert len(payload) == 8 * 30
        first, second = np.frombuffer(payload[:16], dtype="<f8")
        assert first == ramp.values[0, 0]
        assert second == ramp.values[0, 1]

    def test_read_back(self, tmp_path, ramp, meta):
        f = read_wgl(write_wgl(tmp_path / "nested" / "f.wgl", ramp, meta))
        assert f.grid == ramp.grid
        assert np.array_equal(f.values, ramp.values)

    def test_periodic_grid_survives(self, tmp_path):
        f = ScalarField.constant(Grid.periodic_square(8), 1.5)
        assert read_wgl(write_wgl(tmp_path / "p.wgl", f)).grid.is_periodic

    def test_truncated_payload(self, tmp_path, ramp):
        path = write_wgl(tmp_path / "f.wgl", ramp)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(GridError, match="expected 30 values"):
            read_wgl(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.wgl"
        path.write_bytes(b"XYZ 1 2\n")
        with pytest.raises(GridError):
            read_wgl(path)


class TestCsv:
    def test_field_csv_order(self, tmp_path, ramp, meta):
        path = write_field_csv(tmp_path / "f.csv", ramp, meta)
        lines = path.read_text().splitlines()
        assert lines[0] == f"# tool=willmore_lab version={__version__} config=abc123"
        assert lines[1] == "x,y,value"
        frame = read_table(path)
        assert len(frame) == 30
        assert frame["value"].iloc[1] == pytest.approx(ramp.values[0, 1])
        assert frame["y"].iloc[6] == pytest.approx(0.75)

    def test_rows_csv_keeps_column_order(self, tmp_path):
        records = [{"satisfied": True, "param": 1.0, "measured": 2.0, "bound": 3.0}]
        path = write_rows_csv(tmp_path / "r.csv", records, ["param", "measured", "bound", "satisfied"])
        frame = read_table(path)
        assert list(frame.columns) == ["param", "measured", "bound", "satisfied"]
        assert bool(frame["satisfied"].iloc[0])

    def test_no_comment_without_meta(self, tmp_path):
        path = write_rows_csv(tmp_path / "r.csv", [{"a": 1}], ["a"])
        assert path.read_text().startswith("a\n")


class TestJson:
    def test_meta_block(self, tmp_path, meta):
        body = json.loads(write_json(tmp_path / "s.json", {"status": "ok"}, meta).read_text())
        assert body["meta"] == {"tool": "willmore_lab", "version": __version__, "config_hash": "abc123"}

    def test_non_finite_become_null(self, tmp_path):
        payload = {"orders": [2.0, math.inf, math.nan], "x": np.float64(1.5), "flag": np.bool_(True)}
        body = json.loads(write_json(tmp_path / "s.json", payload).read_text())
        assert body == {"orders": [2.0, None, None], "x": 1.5, "flag": True}

    def test_keys_are_sorted(self, tmp_path):
        text = write_json(tmp_path / "s.json", {"b": 1, "a": 2}).read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_frames_round_trip_through_pandas(self, tmp_path):
        frame = pd.DataFrame({"time": [0.0, 0.1], "W": [1.0, 0.5]})
        body = write_json(tmp_path / "s.json", {"rows": frame.to_dict(orient="records")})
        assert json.loads(body.read_text())["rows"][1]["W"] == 0.5
