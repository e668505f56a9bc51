import pytest

from famcl.cli import main


@pytest.fixture(scope="session")
def sim_files(tmp_path_factory):
    """Sibling dataset with one associated SNP and four null SNPs."""
    d = tmp_path_factory.mktemp("sim")
    prefix = str(d / "sib")
    rc = main(["simulate", "--design", "sibling", "--n-families", "150", "--beta1", "1.0",
               "--null-snps", "4", "--seed", "3", "--out-prefix", prefix])
    assert rc == 0
    return prefix + ".ped.tsv", prefix + ".geno.tsv", prefix + ".map.tsv"


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append((number, line))
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
