import json
import sys
from pathlib import Path

import pytest

from iris_ir import dataset
from iris_ir.toolchain import ToolchainConfig

FIXTURES = Path(__file__).parent / "fixtures"
PROGRAMS = FIXTURES / "programs"

ADD_MAIN = """int add(int a, int b)
{
    return a + b;
}

int main(void)
{
    int x = add(2, 3);
    return x;
}
"""


@pytest.fixture(scope="session")
def toolchain() -> ToolchainConfig:
    return ToolchainConfig.resolve()


def load_program(c_file: Path) -> tuple[str, list[dataset.IoTest], str | None]:
    tests = [
        dataset.IoTest(t["stdin"].encode(), t["expected_stdout"].encode())
        for t in json.loads(c_file.with_suffix(".tests.json").read_text())
    ]
    wrapper = c_file.with_suffix(".wrapper.cpp")
    return c_file.read_text(), tests, wrapper.read_text() if wrapper.exists() else None


@pytest.fixture(scope="session")
def program_corpus(toolchain) -> list[dataset.SampleRecord]:
    """Every committed fixture program built into a record (both IR dumps)."""
    records = []
    for c_file in sorted(PROGRAMS.glob("*.c")):
        src, tests, wrapper = load_program(c_file)
        records.append(
            dataset.build_pair(src, toolchain, io_tests=tests, wrapper_cpp=wrapper, meta={"path": c_file.name})
        )
    return records


@pytest.fixture(scope="session")
def add_main_record(toolchain) -> dataset.SampleRecord:
    return dataset.build_pair(ADD_MAIN, toolchain, meta={"path": "add_main.c"})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.verdict_lines():
        terminalreporter.write_line(line)
