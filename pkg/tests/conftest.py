import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """Twenty synthetic cases written to disk, shared by the data and CLI tests."""
    from dualview.synth import synth_generate

    root = tmp_path_factory.mktemp("synth20")
    cases = synth_generate(20, seed=5, image_size=256, out_dir=root)
    return root, cases


# ------------------------------------------------------------ acceptance report

ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion():
    """record(n, ok, detail) stores one line for the end-of-run acceptance summary."""
    def record(n: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = (bool(ok), detail)
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and rep.failed and marker.args[0] not in ACCEPTANCE:
        reason = str(call.excinfo.value).splitlines()[0] if call.excinfo else rep.when
        ACCEPTANCE[marker.args[0]] = (False, f"error in {rep.when}: {reason[:160]}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
