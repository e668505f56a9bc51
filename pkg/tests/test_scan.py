import math

import numpy as np
import pytest

from famcl import io as fio
from famcl.likelihood import CLKind
from famcl.model import InvalidArgumentError
from famcl.profile import default_grid
from famcl.scan import DEFAULT_K, cell_counts, scan_region, scan_snp

GRID = default_grid(1 / 20, 20, 81)


@pytest.fixture(scope="module")
def dataset(sim_files):
    return fio.parse_dataset(*sim_files)


@pytest.fixture(scope="module")
def records(dataset):
    return scan_region(dataset, grid=GRID)


def test_one_record_per_snp_in_order(dataset, records):
    assert [r.snp_id for r in records] == dataset.snp_ids
    assert [r.position for r in records] == [1, 2, 3, 4, 5]


def test_associated_snp_detected(records):
    r = records[0]
    assert not r.flags
    assert r.max_adjusted_lr > 1000
    assert r.strongest_exclusion() == 1000
    assert [iv.k for iv in r.intervals] == list(DEFAULT_K)
    for a, b in zip(r.intervals, r.intervals[1:]):
        assert b.lower_or <= a.lower_or and a.upper_or <= b.upper_or


def test_null_snps_contain_one(records):
    for r in records[1:]:
        assert r.intervals[0].k == 8 and r.intervals[-1].contains_null
        assert 0 < r.adjustment


def test_monomorphic_snp_flagged(tmp_path):
    lines = ["family_id\tindividual_id\tfather_id\tmother_id\tphenotype"]
    geno = ["individual_id\tmono"]
    for i in range(40):
        lines.append(f"S{i}\tS{i}\t0\t0\t{i % 2}")
        geno.append(f"S{i}\t0")
    (tmp_path / "p.tsv").write_text("\n".join(lines) + "\n")
    (tmp_path / "g.tsv").write_text("\n".join(geno) + "\n")
    ds = fio.parse_dataset(tmp_path / "p.tsv", tmp_path / "g.tsv")
    rec = scan_snp(ds, "mono", grid=GRID)
    assert "sparse_cells" in rec.flags
    assert cell_counts(ds.packed("mono"))[1:].sum() == 0


def test_deterministic_and_subset_consistent(dataset, records):
    again = scan_region(dataset, grid=GRID)
    assert again == records
    sub = scan_region(dataset, ["null3", "snp1"], grid=GRID)
    assert sub[0] == records[3] and sub[1] == records[0]


def test_thread_count_independent(dataset, records):
    assert scan_region(dataset, grid=GRID, threads=3) == records


def test_pairwise_scan_runs(dataset):
    rec = scan_snp(dataset, "snp1", kind=CLKind.PAIRWISE_WEIGHTED, grid=GRID)
    assert rec.mcle_or > 1 and math.isfinite(rec.adjustment)


def test_bad_arguments(dataset):
    with pytest.raises(InvalidArgumentError):
        scan_region(dataset, ["nope"])
    with pytest.raises(InvalidArgumentError):
        scan_region(dataset, k_values=[1.0])


def test_cell_counts():
    class P:
        x = np.array([0, 1, 1, 2, 2, 2.0])
        y = np.array([0, 1, 0, 1, 1, 0.0])

    np.testing.assert_array_equal(cell_counts(P), [[1, 0], [1, 1], [1, 2]])
