import pytest

from corpus import FUNCTIONS, write_corpus
from mlap2seq.dataset import build_dataset
from mlap2seq.ingest import read_corpus


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    """The 32-function toy corpus, one function per file."""
    return write_corpus(tmp_path_factory.mktemp("toy_corpus"), FUNCTIONS[:32])


@pytest.fixture(scope="session")
def toy32(toy_corpus_dir):
    graphs, _ = read_corpus(toy_corpus_dir)
    return build_dataset(graphs, seed=0)


# --- acceptance summary -------------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line each in the terminal
# summary; a ``detail`` user property, if recorded, is appended to the line, and a
# ``status`` property replaces PASS for informational criteria.

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    props = dict(item.user_properties)
    prev = _criteria.get(number)
    ok = rep.passed and (prev is None or prev[1])
    status = props.get("status", "PASS") if ok else "FAIL"
    _criteria[number] = (title, status, props.get("detail") or (prev[2] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, detail = _criteria[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
