from __future__ import annotations

import json
import logging
import sys

import numpy as np

from semiweak_mil.observability.logs import JsonFormatter, configure_logging


def _record(**extra) -> logging.LogRecord:
    record = logging.LogRecord("semiweak_mil.test", logging.INFO, __file__, 1, "Built plan %s", ("now",), None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_formatter_emits_message_and_extras() -> None:
    payload = json.loads(JsonFormatter().format(_record(labeled=np.int64(3), confidence=np.float32(0.5))))

    assert payload["message"] == "Built plan now"
    assert payload["level"] == "INFO"
    assert payload["logger"] == "semiweak_mil.test"
    assert payload["extra"] == {"labeled": 3, "confidence": 0.5}


def test_formatter_serialises_arrays_and_unknown_objects() -> None:
    payload = json.loads(JsonFormatter().format(_record(order=np.array([2, 0, 1]), where=object())))

    assert payload["extra"]["order"] == [2, 0, 1]
    assert isinstance(payload["extra"]["where"], str)


def test_formatter_without_extras_has_no_extra_key() -> None:
    assert "extra" not in json.loads(JsonFormatter().format(_record()))


def test_formatter_includes_exceptions() -> None:
    try:
        raise RuntimeError("bad step")
    except RuntimeError:
        record = logging.LogRecord("x", logging.ERROR, __file__, 1, "failed", (), sys.exc_info())

    assert "bad step" in json.loads(JsonFormatter().format(record))["exc_info"]


def test_configure_logging_honours_the_environment(monkeypatch) -> None:
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    monkeypatch.setenv("LOG_LEVEL", "warning")
    try:
        configure_logging()

        assert root.level == logging.WARNING
        assert len(root.handlers) == 1
        assert isinstance(root.handlers[0].formatter, JsonFormatter)

        configure_logging("debug")
        assert root.level == logging.DEBUG
    finally:
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)
