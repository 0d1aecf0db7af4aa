from __future__ import annotations

import json

import jsonschema
import pytest

import geoplan


def validate(name: str, doc) -> None:
    schema = json.loads(geoplan.schema_path(name).read_text())
    jsonschema.Draft202012Validator(schema).validate(doc)


@pytest.fixture
def schema_check():
    return validate


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(criterion: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[criterion] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
