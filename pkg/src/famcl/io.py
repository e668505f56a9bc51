"""Reading pedigree/genotype files and writing results.

Pedigree file (tab-separated, optional header line starting ``family_id``)::

    family_id  individual_id  father_id  mother_id  phenotype

``0`` marks an unknown parent; phenotype is ``0``, ``1`` or ``NA``.

Genotype file (tab-separated)::

    individual_id  snp_1  snp_2  ...
    id             0|1|2|NA ...

Optional SNP map (tab-separated, optional header ``snp_id``)::

    snp_id  position
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .likelihood import PackedData, pack
from .model import FamilyData, InvalidArgumentError, Member, Pedigree

SCHEMA_VERSION = 1
MISSING = {"NA", "na", "NaN", "nan", "."}


class DataError(ValueError):
    """Base class of input data problems."""


class ParseError(DataError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ReferentialIntegrityError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


@dataclass
class PedigreeFamily:
    """One family of the input: member ids, phenotypes and relationship classes."""

    family_id: str
    member_ids: list
    phenotypes: list
    pair_classes: dict
    rows: list  # genotype-matrix row of each member, -1 when untyped


@dataclass
class Dataset:
    """Families plus a genotype matrix ``(individuals, snps)`` with NaN for missing."""

    families: list
    snp_ids: list
    snp_index: dict
    positions: dict
    genotypes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.genotypes.ndim != 2 or self.genotypes.shape[1] != len(self.snp_ids):
            raise InvalidArgumentError("genotype matrix needs one column per indexed SNP")

    def family_data(self, snp: str) -> list[FamilyData]:
        col = self.snp_index[snp]
        out = []
        for fam in self.families:
            geno = [None if r < 0 or np.isnan(self.genotypes[r, col]) else int(self.genotypes[r, col])
                    for r in fam.rows]
            out.append(FamilyData(fam.family_id, tuple(fam.phenotypes), tuple(geno),
                                  fam.pair_classes))
        return out

    def packed(self, snp: str) -> PackedData:
        return pack(self.family_data(snp))

    @property
    def n_individuals(self) -> int:
        return sum(len(f.member_ids) for f in self.families)


def _rows(path):
    """Yield ``(line_number, fields)`` for non-blank, non-comment lines."""
    try:
        with open(path, newline="") as fh:
            for n, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                yield n, [f.strip() for f in line.split("\t")]
    except OSError as err:
        raise OSError(f"cannot read {path}: {err.strerror or err}") from err


def _phenotype(path, n, token):
    if token in MISSING:
        return None
    if token in ("0", "1"):
        return int(token)
    raise ParseError(path, n, f"phenotype must be 0, 1 or NA, got {token!r}")


def _genotype(path, n, token):
    if token in MISSING:
        return np.nan
    if token in ("0", "1", "2"):
        return float(token)
    raise ParseError(path, n, f"genotype must be 0, 1, 2 or NA, got {token!r}")


def read_pedigree(path) -> list[tuple]:
    """Rows ``(family_id, individual_id, father, mother, phenotype, line)``."""
    rows = []
    seen = {}
    first = True
    for n, f in _rows(path):
        if first and f[0].lower() == "family_id":
            first = False
            continue
        first = False
        if len(f) != 5:
            raise ParseError(path, n, f"expected 5 tab-separated fields, got {len(f)}")
        fam, ind, fa, mo = f[:4]
        if not fam or not ind:
            raise ParseError(path, n, "empty family or individual id")
        if ind in seen:
            raise DuplicateIdError(f"{path}:{n}: individual {ind!r} already defined on line {seen[ind]}")
        seen[ind] = n
        fa = None if fa == "0" else fa
        mo = None if mo == "0" else mo
        rows.append((fam, ind, fa, mo, _phenotype(path, n, f[4]), n))
    return rows


def read_genotypes(path):
    """``(snp_ids, individual_ids, matrix)`` from a genotype file."""
    it = _rows(path)
    try:
        n, header = next(it)
    except StopIteration:
        raise ParseError(path, 1, "empty genotype file") from None
    snps = header[1:]
    if len(set(snps)) != len(snps):
        raise DuplicateIdError(f"{path}:{n}: duplicate SNP id in header")
    ids, values, seen = [], [], {}
    for n, f in it:
        if len(f) != len(snps) + 1:
            raise ParseError(path, n, f"expected {len(snps) + 1} fields, got {len(f)}")
        if f[0] in seen:
            raise DuplicateIdError(f"{path}:{n}: individual {f[0]!r} already genotyped on line {seen[f[0]]}")
        seen[f[0]] = n
        ids.append(f[0])
        values.append([_genotype(path, n, t) for t in f[1:]])
    mat = np.array(values, float).reshape(len(ids), len(snps))
    return snps, ids, mat


def read_snp_map(path) -> dict:
    out = {}
    first = True
    for n, f in _rows(path):
        if first and f[0].lower() == "snp_id":
            first = False
            continue
        first = False
        if len(f) != 2:
            raise ParseError(path, n, f"expected 2 fields, got {len(f)}")
        try:
            pos = int(f[1])
        except ValueError:
            raise ParseError(path, n, f"position must be an integer, got {f[1]!r}") from None
        if f[0] in out:
            raise DuplicateIdError(f"{path}:{n}: SNP {f[0]!r} listed twice")
        out[f[0]] = pos
    return out


def parse_dataset(pedigree_file, genotype_file, map_file=None) -> Dataset:
    """Build a :class:`Dataset`; relationships come from the parent columns.

    Every genotyped individual must appear in the pedigree.  Pedigree members
    without a genotype row are kept as untyped.
    """
    ped = read_pedigree(pedigree_file)
    snps, gids, mat = read_genotypes(genotype_file)
    by_family: dict = {}
    for row in ped:
        by_family.setdefault(row[0], []).append(row)
    family_of = {row[1]: row[0] for row in ped}
    for fam, ind, fa, mo, _, n in ped:
        for p in (fa, mo):
            if p is not None and family_of.get(p) != fam:
                raise ReferentialIntegrityError(
                    f"{pedigree_file}:{n}: parent {p!r} of {ind!r} is not in family {fam!r}")
        if (fa is None) != (mo is None):
            raise ReferentialIntegrityError(
                f"{pedigree_file}:{n}: {ind!r} must list both parents or neither")
    gindex = {g: i for i, g in enumerate(gids)}
    unknown = [g for g in gids if g not in family_of]
    if unknown:
        raise ReferentialIntegrityError(
            f"{genotype_file}: individuals not in the pedigree: {', '.join(unknown[:5])}")
    families = []
    for fam, rows in by_family.items():
        try:
            pedigree = Pedigree(tuple(Member(r[1], r[2], r[3]) for r in rows))
        except InvalidArgumentError as err:
            raise ReferentialIntegrityError(f"{pedigree_file}: family {fam!r}: {err}") from None
        families.append(PedigreeFamily(
            fam, [r[1] for r in rows], [r[4] for r in rows], pedigree.pair_classes(),
            [gindex.get(r[1], -1) for r in rows]))
    if map_file is not None:
        smap = read_snp_map(map_file)
        missing = [s for s in snps if s not in smap]
        if missing:
            raise ReferentialIntegrityError(
                f"{map_file}: no position for SNPs {', '.join(missing[:5])}")
        positions = {s: smap[s] for s in snps}
    else:
        positions = {s: i + 1 for i, s in enumerate(snps)}
    return Dataset(families, list(snps), {s: i for i, s in enumerate(snps)}, positions, mat)


def write_dataset(families: Sequence[Mapping], snp_ids: Sequence[str], pedigree_file,
                  genotype_file, map_file=None, positions: Optional[Mapping] = None) -> None:
    """Write files readable by :func:`parse_dataset`.

    Each family is a mapping with ``family_id`` and ``members``, a list of
    ``(individual_id, father, mother, phenotype, genotypes)`` tuples where
    ``genotypes`` has one entry per SNP (``None`` for missing).
    """
    def tok(v):
        return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else str(int(v))

    with open(pedigree_file, "w", newline="") as ph, open(genotype_file, "w", newline="") as gh:
        ph.write("family_id\tindividual_id\tfather_id\tmother_id\tphenotype\n")
        gh.write("\t".join(["individual_id", *snp_ids]) + "\n")
        for fam in families:
            for ind, fa, mo, y, geno in fam["members"]:
                ph.write(f"{fam['family_id']}\t{ind}\t{fa or 0}\t{mo or 0}\t{tok(y)}\n")
                if geno is not None:
                    gh.write("\t".join([ind, *(tok(g) for g in geno)]) + "\n")
    if map_file is not None:
        with open(map_file, "w", newline="") as mh:
            mh.write("snp_id\tposition\n")
            for i, s in enumerate(snp_ids):
                mh.write(f"{s}\t{(positions or {}).get(s, i + 1)}\n")


# ---------------------------------------------------------------------------
# Result emission

SCAN_COLUMNS = [
    "snp_id", "position", "mcle_or", "max_adjusted_lr", "adjustment", "flags",
    "k", "lower_or", "upper_or", "lower_open", "upper_open", "contains_null",
]
CURVE_COLUMNS = ["interest", "value", "odds_ratio", "loglik_p", "standardized",
                 "standardized_adjusted", "failed"]
MISLEADING_COLUMNS = ["alt_beta1", "alt_or", "k", "proportion_raw", "proportion_adjusted",
                      "mc_se_raw", "mc_se", "replicates", "failures", "bump_max"]
BUMP_COLUMNS = ["c", "k", "prob"]


def fmt(v) -> str:
    """Locale-independent text with 17 significant digits for reals."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, np.ndarray):
        return [_json_value(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return sorted(v)
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    return v


def _scan_rows(records):
    for r in records:
        base = [r.snp_id, r.position, r.mcle_or, r.max_adjusted_lr, r.adjustment,
                ";".join(sorted(r.flags))]
        if not r.intervals:
            yield base + [None] * 6
        for iv in r.intervals:
            yield base + [iv.k, iv.lower_or, iv.upper_or, iv.lower_open, iv.upper_open,
                          iv.contains_null]


def _curve_rows(curve):
    from .evidence import standardized_curve

    raw = standardized_curve(curve, adjusted=False)
    adj = standardized_curve(curve, adjusted=True) if curve.adjustment is not None else raw * np.nan
    for i, v in enumerate(curve.grid):
        yield [curve.interest, v, math.exp(v), curve.loglik_p[i], raw[i], adj[i],
               bool(curve.failed[i])]


def _misleading_rows(est):
    from .misleading import bump_max

    bm = bump_max(est.k)
    for i, a in enumerate(est.alt_values):
        yield [a, math.exp(a), est.k, est.proportion_raw[i], est.proportion_adjusted[i],
               est.mc_se_raw[i], est.mc_se[i], est.replicates, est.failures, bm]


def _bump_rows(curve):
    for c, p in zip(curve.c_values, curve.prob):
        yield [c, curve.k, p]


def _table(obj):
    """``(kind, columns, rows, metadata)`` for any emittable object."""
    from .misleading import BumpCurve, MisleadingEstimate
    from .profile import ProfileCurve

    if isinstance(obj, ProfileCurve):
        meta = {"interest": obj.interest, "mcle": obj.mcle[0], "mcle_loglik": obj.mcle[1],
                "adjustment": obj.adjustment, "separation": obj.separation,
                "nuisance_names": list(obj.nuisance_names)}
        return "curve", CURVE_COLUMNS, list(_curve_rows(obj)), meta
    if isinstance(obj, MisleadingEstimate):
        meta = {"k": obj.k, "true_beta1": obj.true_value, "replicates": obj.replicates,
                "failures": obj.failures, "warning": obj.warning}
        return "misleading", MISLEADING_COLUMNS, list(_misleading_rows(obj)), meta
    if isinstance(obj, BumpCurve):
        return "bump", BUMP_COLUMNS, list(_bump_rows(obj)), {"k": obj.k}
    records = list(obj)
    return "scan", SCAN_COLUMNS, list(_scan_rows(records)), {}


def _scan_json(records):
    out = []
    for r in records:
        out.append({
            "snp_id": r.snp_id, "position": r.position, "mcle_or": r.mcle_or,
            "max_adjusted_lr": r.max_adjusted_lr, "adjustment": r.adjustment,
            "flags": sorted(r.flags),
            "intervals": [{"k": iv.k, "lower_or": iv.lower_or, "upper_or": iv.upper_or,
                           "lower_open": iv.lower_open, "upper_open": iv.upper_open,
                           "contains_null": iv.contains_null} for iv in r.intervals],
        })
    return out


def render(obj, fmt_name: str = "csv", extra_meta: Optional[Mapping] = None) -> str:
    """Serialise scan records, a profile curve, a misleading estimate or a bump curve."""
    kind, columns, rows, meta = _table(obj)
    meta = {**meta, **(extra_meta or {})}
    return _render(kind, columns, rows, meta, fmt_name,
                   _scan_json(list(obj)) if kind == "scan" else None)


def render_rows(kind: str, rows: Sequence[Mapping], fmt_name: str = "csv") -> str:
    """Serialise a list of flat dictionaries sharing one set of keys."""
    columns = list(rows[0]) if rows else []
    return _render(kind, columns, [[r[c] for c in columns] for r in rows], {}, fmt_name)


def _render(kind, columns, rows, meta, fmt_name, body=None) -> str:
    if fmt_name == "csv":
        buf = _io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION} kind={kind}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()
    if fmt_name == "json":
        if body is None:
            body = [dict(zip(columns, row)) for row in rows]
        doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "meta": meta,
               "columns": columns, "records": body}
        return json.dumps(_json_value(doc), indent=1) + "\n"
    raise InvalidArgumentError(f"unknown format {fmt_name!r}; use csv or json")


def emit_results(obj, fmt_name: str, path, extra_meta: Optional[Mapping] = None) -> Path:
    """Write :func:`render` output to ``path`` (``-`` for standard output)."""
    return _write(render(obj, fmt_name, extra_meta), path)


def emit_rows(kind: str, rows: Sequence[Mapping], fmt_name: str, path) -> Path:
    return _write(render_rows(kind, rows, fmt_name), path)


def _write(text: str, path) -> Path:
    if str(path) == "-":
        import sys

        sys.stdout.write(text)
        return Path("-")
    p = Path(path)
    try:
        p.write_text(text)
    except OSError as err:
        raise OSError(f"cannot write {p}: {err.strerror or err}") from err
    return p


def _from_json_value(v):
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    if isinstance(v, list):
        return [_from_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _from_json_value(x) for k, x in v.items()}
    return v


def load_json_results(path_or_text) -> dict:
    """Parse a JSON artifact written by :func:`emit_results`, restoring non-finite reals."""
    text = path_or_text
    if not str(path_or_text).lstrip().startswith("{"):
        text = Path(path_or_text).read_text()
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version {doc.get('schema_version')!r}")
    return _from_json_value(doc)


def scan_records_from_json(doc: Mapping) -> list:
    """Rebuild :class:`~famcl.scan.ScanRecord` objects from a loaded scan document."""
    from .evidence import SupportInterval
    from .scan import ScanRecord

    if doc.get("kind") != "scan":
        raise DataError("not a scan document")
    out = []
    for r in doc["records"]:
        ivs = tuple(SupportInterval(iv["k"], iv["lower_or"], iv["upper_or"], iv["contains_null"],
                                    iv["lower_open"], iv["upper_open"]) for iv in r["intervals"])
        out.append(ScanRecord(r["snp_id"], r["position"], r["mcle_or"], r["max_adjusted_lr"],
                              r["adjustment"], ivs, frozenset(r["flags"])))
    return out
