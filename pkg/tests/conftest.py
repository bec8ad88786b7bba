import pytest

from suffixgan.encoding import TimeNormalizer, Vocabulary, build_vocabulary, fit_normalizer, make_dataset
from suffixgan.eventlog import split_log
from suffixgan.synthetic import branching_model, generate_synthetic_log


@pytest.fixture
def abcd_vocab():
    return Vocabulary(("a", "b", "c", "d", "<EOS>"))


@pytest.fixture
def unit_norm():
    return TimeNormalizer(1.0)


@pytest.fixture(scope="session")
def branching_log():
    return generate_synthetic_log(branching_model(), 60, seed=7)


@pytest.fixture(scope="session")
def branching_data(branching_log):
    train, test, val = split_log(branching_log, (0.8, 0.15, 0.05), seed=0)
    vocab = build_vocabulary(branching_log)
    norm = fit_normalizer(train)
    return {
        "vocab": vocab,
        "norm": norm,
        "train": make_dataset(train, vocab, norm),
        "test": make_dataset(test, vocab, norm),
        "val": make_dataset(val, vocab, norm),
    }


# -- acceptance summary ------------------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed and not report.skipped):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "notes": [], "seconds": 0.0})
    entry["seconds"] += report.duration
    if hasattr(report, "wasxfail"):
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: expected failure, {report.wasxfail}")
    elif report.failed or report.skipped:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {report.outcome}")
    entry["notes"].extend(v for k, v in item.user_properties if k == "detail" and report.when == "call")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"[{status}] {number:2d} {e['title']} ({e['seconds']:.1f} s) {notes}")
