"""Tests for configuration, logging and utility helpers."""

import logging
import time

import numpy as np
import pytest

from src.macbeath_dag.config import AnnConfig, BenchConfig, HierarchyConfig
from src.macbeath_dag.exceptions import InputError
from src.macbeath_dag.logging_config import (
    ContextFilter,
    ContextFormatter,
    get_logger,
    log_context,
)
from src.macbeath_dag.utils import (
    as_float_list,
    batch_items,
    config_hash,
    map_ordered,
    measure_execution_time,
    parse_vector,
    read_json,
    write_json,
)


class TestConfig:
    """Test cases for environment-driven configuration."""

    def test_hierarchy_from_env(self, monkeypatch):
        """Test typed values read from MACBEATH_* variables."""
        monkeypatch.setenv("MACBEATH_COVERAGE_RAYS", "123")
        monkeypatch.setenv("MACBEATH_STRICT_CONSTANTS", "yes")
        monkeypatch.setenv("MACBEATH_CONE_SLACK", "0.01")
        monkeypatch.setenv("MACBEATH_LAMBDA0", "0.1")

        config = HierarchyConfig.from_env()

        assert config.coverage_rays == 123
        assert config.strict_constants is True
        assert config.cone_slack == 0.01
        assert config.lambda0 == 0.1

    def test_overrides_win(self, monkeypatch):
        """Test that explicit overrides beat the environment."""
        monkeypatch.setenv("MACBEATH_SEED", "7")

        assert HierarchyConfig.from_env(seed=9).seed == 9
        assert HierarchyConfig.from_env().seed == 7

    def test_defaults_without_env(self, monkeypatch):
        """Test that unset variables keep the defaults."""
        monkeypatch.delenv("MACBEATH_LAMBDA0", raising=False)
        monkeypatch.delenv("MACBEATH_WITNESS_MODE", raising=False)

        config = HierarchyConfig.from_env()

        assert config.lambda0 is None
        assert config.witness_mode == "facets"

    def test_ann_from_env(self, monkeypatch):
        """Test ANN variables and the nested hierarchy config."""
        monkeypatch.setenv("MACBEATH_ANN_BRUTE_THRESHOLD", "4")
        monkeypatch.setenv("MACBEATH_CAP_SAMPLES", "300")

        config = AnnConfig.from_env()

        assert config.brute_threshold == 4
        assert config.hierarchy.cap_samples == 300
        assert config.to_dict()["hierarchy"]["cap_samples"] == 300

    def test_bench_formats(self, monkeypatch):
        """Test that tuple settings split on commas."""
        monkeypatch.setenv("MACBEATH_BENCH_FORMATS", "json")

        assert BenchConfig.from_env().formats == ("json",)


class TestLogging:
    """Test cases for logger naming and context."""

    def test_strips_src_prefix(self):
        """Test that test imports and installed imports share loggers."""
        assert get_logger("src.macbeath_dag.hierarchy").name == "macbeath_dag.hierarchy"

    def test_main_module(self):
        """Test the name given to scripts."""
        assert get_logger("__main__").name == "macbeath_dag.main"

    def test_context_filter(self):
        """Test that context keys become record attributes."""
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "msg", None, None)

        assert ContextFilter({"dag_level": 3}).filter(record)
        assert record.dag_level == 3

    def test_formatter_appends_context(self):
        """Test that known context attributes become trailing tags."""
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "packed", None, None)
        record.dag_level = 2

        text = ContextFormatter("%(message)s").format(record)

        assert text == "packed [dag_level=2]"

    def test_formatter_without_context(self):
        """Test that plain records are left alone."""
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "packed", None, None)

        assert ContextFormatter("%(message)s").format(record) == "packed"

    def test_log_context_scope(self, caplog):
        """Test that records are tagged only inside the block."""
        logger = get_logger("context_scope")

        with caplog.at_level(logging.INFO, logger="macbeath_dag"):
            with log_context(logger, dag_level=1):
                logger.info("inside")
            logger.info("outside")

        inside, outside = caplog.records
        assert inside.dag_level == 1
        assert not hasattr(outside, "dag_level")


class TestParseVector:
    """Test cases for parse_vector."""

    def test_valid(self):
        """Test a well-formed coordinate list."""
        assert np.allclose(parse_vector("0.1, -2,3"), [0.1, -2.0, 3.0])

    @pytest.mark.parametrize("text", ["a,b", "", "nan,1", "1,inf"])
    def test_malformed(self, text):
        """Test that malformed text is an input error."""
        with pytest.raises(InputError):
            parse_vector(text)

    def test_wrong_dimension(self):
        """Test the dimension check."""
        with pytest.raises(InputError) as exc_info:
            parse_vector("1,2", dim=3)

        assert exc_info.value.details["dim"] == 3


class TestJsonFiles:
    """Test cases for JSON helpers."""

    def test_write_and_read(self, tmp_path):
        """Test that parents are created and content survives."""
        path = write_json(tmp_path / "a" / "b.json", {"x": [1.0, 2.5]})

        assert read_json(path) == {"x": [1.0, 2.5]}

    def test_string_path_with_indent(self, tmp_path):
        """Test a plain string path and an explicit indent."""
        path = write_json(str(tmp_path / "c.json"), {"y": 1}, indent=2)

        assert path.read_text() == '{\n  "y": 1\n}\n'
        assert read_json(str(path)) == {"y": 1}

    def test_missing_file(self, tmp_path):
        """Test that a missing file is an input error."""
        with pytest.raises(InputError):
            read_json(tmp_path / "none.json")

    def test_invalid_json(self, tmp_path):
        """Test that unparsable content is an input error."""
        path = tmp_path / "bad.json"
        path.write_text("{not json")

        with pytest.raises(InputError):
            read_json(path)


class TestHelpers:
    """Test cases for small helpers."""

    def test_config_hash(self):
        """Test that the hash ignores key order and honors the length."""
        a = config_hash({"seed": 1, "eps": 0.1})
        b = config_hash({"eps": 0.1, "seed": 1})

        assert a == b
        assert len(a) == 10
        assert len(config_hash({"seed": 1}, length=8)) == 8
        assert config_hash({"seed": 2}) != config_hash({"seed": 1})

    def test_map_ordered_keeps_order(self):
        """Test that threaded mapping returns results in input order."""

        def slow_square(x):
            time.sleep(0.001 * (5 - x))
            return x * x

        assert map_ordered(slow_square, list(range(5)), workers=4) == [0, 1, 4, 9, 16]
        assert map_ordered(slow_square, [3]) == [9]

    def test_batch_items(self):
        """Test batching with a short last batch."""
        assert list(batch_items([1, 2, 3, 4, 5], 2)) == [[1, 2], [3, 4], [5]]

    def test_as_float_list(self):
        """Test conversion to plain floats."""
        values = as_float_list(np.array([[1, 2], [3, 4]]))

        assert values == [1.0, 2.0, 3.0, 4.0]
        assert all(type(v) is float for v in values)

    def test_measure_execution_time(self, caplog):
        """Test that the decorator keeps the name and return value and logs timing."""

        @measure_execution_time
        def add(a, b):
            return a + b

        with caplog.at_level(logging.DEBUG, logger="macbeath_dag"):
            assert add(2, 3) == 5

        assert add.__name__ == "add"
        assert "add completed in" in caplog.text
