import numpy as np
import pytest

from helper_script.file_reader_helper import read_from_file, read_lines, require_file, write_to_file
from helper_script.func_timer import MultipleTimer, SingleTimer, format_runtime
from helper_script.json_helper import read_json, to_json, write_json
from modules_script.m_errors import StageDependencyError


class TestFileHelpers:
    def test_missing_file_reads_as_none(self, tmp_path):
        assert read_from_file(str(tmp_path / "absent")) is None
        assert read_lines(str(tmp_path / "absent")) is None

    def test_write_creates_directories(self, tmp_path):
        path = str(tmp_path / "a" / "b.txt")
        write_to_file(path, "x\ny\n")
        assert read_lines(path) == ["x", "y"]

    def test_no_silent_overwrite(self, tmp_path):
        path = str(tmp_path / "b.txt")
        write_to_file(path, "x")
        with pytest.raises(FileExistsError):
            write_to_file(path, "y")
        write_to_file(path, b"z", overwrite=True)
        assert read_from_file(path, binary=True) == b"z"

    def test_require_file_names_stage(self, tmp_path):
        with pytest.raises(StageDependencyError, match="fl-train"):
            require_file(str(tmp_path / "trace.fltr"), "fl-train")


class TestJson:
    def test_sorted_and_numpy(self):
        assert to_json({"b": np.arange(2), "a": np.float64(0.5)}) == '{"a":0.5,"b":[0,1]}'

    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "r.json")
        write_json(path, {"accuracy": 0.75, "epochs": [1, 2]})
        assert read_json(path) == {"accuracy": 0.75, "epochs": [1, 2]}


class TestTimer:
    def test_stop_required(self):
        t = SingleTimer()
        with pytest.raises(ValueError):
            t.get_start_to_stop()
        t.stop()
        assert t.get_start_to_stop() >= 0

    def test_stopped_times(self):
        timers = MultipleTimer(["evaluate", "costs"])
        timers.timer["evaluate"].stop()
        assert set(timers.stopped_times()) == {"evaluate"}

    @pytest.mark.parametrize("ms,expected", [(12.345, "12.35 ms"), (12_500.0, "12.500 s")])
    def test_format_runtime(self, ms, expected):
        assert format_runtime(ms) == expected
