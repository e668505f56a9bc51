"""Per-SNP evidence summaries across a region."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .evidence import adjusted_lr, support_interval
from .likelihood import CLKind, DegenerateCellError, NonConvergenceError
from .model import InvalidArgumentError
from .profile import default_grid, profile_cl

DEFAULT_K = (8.0, 32.0, 100.0, 1000.0)
#: A genotype-by-phenotype cell with fewer observations than this is sparse.
SPARSE_CELL_COUNT = 5

FLAG_SEPARATION = "separation"
FLAG_SPARSE = "sparse_cells"
FLAG_FAILURE = "fit_failure"


@dataclass(frozen=True)
class ScanRecord:
    snp_id: str
    position: int
    mcle_or: float
    max_adjusted_lr: float
    adjustment: float
    intervals: tuple = ()
    flags: frozenset = field(default_factory=frozenset)

    def strongest_exclusion(self) -> Optional[float]:
        """Largest ``k`` whose interval excludes OR = 1, if any."""
        ks = [iv.k for iv in self.intervals if not iv.contains_null]
        return max(ks) if ks else None


def cell_counts(pk) -> np.ndarray:
    """3 x 2 table of genotype (rows) by phenotype (columns) counts."""
    table = np.zeros((3, 2), dtype=np.int64)
    np.add.at(table, (pk.x.astype(int), pk.y.astype(int)), 1)
    return table


def scan_snp(dataset, snp: str, k_values: Sequence[float] = DEFAULT_K,
             kind: CLKind = CLKind.INDEPENDENCE, grid: Optional[np.ndarray] = None) -> ScanRecord:
    ks = sorted(float(k) for k in k_values)
    pos = int(dataset.positions[snp])
    flags = set()
    nan = math.nan
    try:
        pk = dataset.packed(snp)
    except InvalidArgumentError:
        return ScanRecord(snp, pos, nan, nan, nan, (), frozenset({FLAG_FAILURE}))
    if len(pk.y) and cell_counts(pk).min() < SPARSE_CELL_COUNT:
        flags.add(FLAG_SPARSE)
    try:
        curve = profile_cl(pk, kind, grid=default_grid() if grid is None else grid)
    except (NonConvergenceError, DegenerateCellError, InvalidArgumentError,
            np.linalg.LinAlgError, FloatingPointError):
        flags.add(FLAG_FAILURE)
        return ScanRecord(snp, pos, nan, nan, nan, (), frozenset(flags))
    if curve.separation:
        flags.add(FLAG_SEPARATION)
    if curve.adjustment is None or np.any(curve.failed):
        flags.add(FLAG_FAILURE)
    if curve.adjustment is None:
        return ScanRecord(snp, pos, curve.mcle_or, nan, nan, (), frozenset(flags))
    try:
        lr = adjusted_lr(curve, curve.mcle_or, 1.0)
    except InvalidArgumentError:
        lr = nan
    intervals = []
    for k in ks:
        try:
            intervals.append(support_interval(curve, k))
        except (InvalidArgumentError, NonConvergenceError, DegenerateCellError):
            flags.add(FLAG_FAILURE)
    return ScanRecord(snp, pos, curve.mcle_or, lr, curve.adjustment, tuple(intervals),
                      frozenset(flags))


def scan_region(dataset, snps: Optional[Sequence[str]] = None,
                k_values: Sequence[float] = DEFAULT_K, kind: CLKind = CLKind.INDEPENDENCE,
                grid: Optional[np.ndarray] = None, threads: int = 1) -> list[ScanRecord]:
    """One :class:`ScanRecord` per SNP, in the order of ``snps``.

    Failures are recorded as flags; the scan itself never stops on a SNP.
    """
    if any(not (k > 1) for k in k_values):
        raise InvalidArgumentError("every k must exceed 1")
    snps = list(dataset.snp_ids if snps is None else snps)
    unknown = [s for s in snps if s not in dataset.snp_index]
    if unknown:
        raise InvalidArgumentError(f"unknown SNPs: {', '.join(unknown[:5])}")

    def task(s):
        return scan_snp(dataset, s, k_values, kind, grid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(task, snps))
    return [task(s) for s in snps]
