import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
sys.path.insert(0, str(Path(__file__).resolve().parent))


def write_config(tmp_path: Path, **overrides) -> Path:
    """A config pointing at the committed fixtures, writing into tmp_path/out."""
    paths = {
        "instruction_dataset": FIXTURES / "instructions.jsonl",
        "abstract_corpus": FIXTURES / "abstracts.jsonl",
        "gold_set": FIXTURES / "eval_gold.jsonl",
        "expected_results": FIXTURES / "cq_expected",
        "output_dir": tmp_path / "out",
    }
    paths.update(overrides.pop("paths", {}))
    sections = {
        "retrieval": {"k": "3", "embedder": "hashing", "dimension": "256"},
        "backend": {"type": "mock"},
        "kg": {"base_iri": "https://example.org/qcl/"},
        "run": {"seed": "20240601"},
    }
    for name, values in overrides.items():
        sections.setdefault(name, {}).update(values)
    lines = ["[paths]"] + [f"{k} = {v}" for k, v in paths.items() if v is not None]
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in values.items()]
    path = tmp_path / "run.ini"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def config_path(tmp_path):
    return write_config(tmp_path)


@pytest.fixture
def acceptance(request):
    """Print one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def check(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        print(line)
        lines.append(line)
        assert ok, line

    return check


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
