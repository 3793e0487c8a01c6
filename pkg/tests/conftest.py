import contextlib

import numpy as np
import pytest

from tbp_attack.synthetic import gen_synthetic_sequence, preset

_CRITERIA: dict[str, tuple[str, bool, str]] = {}


@contextlib.contextmanager
def _record(key: str, title: str, detail: dict):
    ok = False
    try:
        yield detail
        ok = True
    finally:
        # parametrized criteria share a key: any failing case fails the criterion
        prev = _CRITERIA.get(key)
        info = detail.get("info", "")
        if prev is not None:
            ok = ok and prev[1]
            info = "; ".join(x for x in (prev[2], info) if x)
        _CRITERIA[key] = (title, ok, info)


@pytest.fixture
def criterion():
    """``with criterion("C5", "memory corruption") as d: ...; d["info"] = "..."``"""
    return lambda key, title: _record(key, title, {})


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[1:])):
        title, ok, info = _CRITERIA[key]
        line = f"{key:>3} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{info}]" if info else ""))


@pytest.fixture(scope="session")
def sparse_seq():
    return gen_synthetic_sequence(preset("sparse", 0))


@pytest.fixture(scope="session")
def crossing_seq():
    return gen_synthetic_sequence(preset("crossing", 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
