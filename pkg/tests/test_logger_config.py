"""Tests for the logging setup and helpers."""

import logging
import logging.handlers

import numpy as np
import pytest

import logger_config
from logger_config import LogContext, describe_argument, log_function_call, setup_logging


@pytest.fixture(autouse=True)
def restore_root():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)
    logger_config._installed.clear()


def installed_file_handlers():
    return [h for h in logging.getLogger().handlers if isinstance(h, logging.handlers.RotatingFileHandler)]


class TestSetupLogging:
    def test_file_named_after_run_records_debug(self, tmp_path):
        setup_logging(logging.WARNING, str(tmp_path / "logs"), run_name="dart2_tree")
        logging.getLogger("dart2.test").debug("layer detail")
        for handler in installed_file_handlers():
            handler.flush()
        files = list((tmp_path / "logs").glob("dart2_tree_*.log"))
        assert len(files) == 1
        text = files[0].read_text(encoding="utf-8")
        assert "layer detail" in text
        assert "[MainThread]" in text

    def test_second_call_keeps_foreign_handlers(self, tmp_path):
        foreign = logging.NullHandler()
        root = logging.getLogger()
        root.addHandler(foreign)
        setup_logging(logging.INFO, str(tmp_path / "a"))
        setup_logging(logging.INFO, str(tmp_path / "b"))
        assert foreign in root.handlers
        assert len(installed_file_handlers()) == 1
        assert len(logger_config._installed) == 2

    def test_unusable_directory_leaves_console_only(self, tmp_path):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("x")
        setup_logging(logging.INFO, str(blocker / "logs"))
        assert installed_file_handlers() == []
        assert len(logger_config._installed) == 1


class TestLogContext:
    def test_records_elapsed(self, caplog):
        caplog.set_level(logging.INFO)
        with LogContext("Screening layer 2", logging.getLogger("dart2.test")) as ctx:
            pass
        assert ctx.elapsed >= 0.0
        assert "Completed: Screening layer 2" in caplog.text

    def test_failure_logged_and_raised(self, caplog):
        with pytest.raises(ValueError):
            with LogContext("Refining", logging.getLogger("dart2.test")):
                raise ValueError("bad node")
        assert "Failed: Refining" in caplog.text
        assert "ValueError: bad node" in caplog.text


class TestLogFunctionCall:
    def test_arguments_summarised(self, caplog, seven_tree):
        caplog.set_level(logging.DEBUG)

        @log_function_call
        def count_nodes(d, tree, label="x"):
            return len(tree.layer(2))

        assert count_nodes(np.zeros((4, 4)), seven_tree, label="ok") == 4
        assert "Calling count_nodes(array(4, 4), AggregationTree(m=7), label='ok')" in caplog.text
        assert "count_nodes returned in" in caplog.text

    def test_failure_reraised(self, caplog):
        @log_function_call
        def broken():
            raise RuntimeError("no threshold")

        with pytest.raises(RuntimeError):
            broken()
        assert "broken failed after" in caplog.text

    def test_long_repr_truncated(self):
        text = describe_argument("g" * 100)
        assert len(text) == 40 and text.endswith("...")
