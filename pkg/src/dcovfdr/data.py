"""Genotype / phenotype matrices, delimited-text I/O and region averaging.

Genotypes are stored as float arrays with ``NaN`` marking a missing call so
that they can be fed straight into the distance computations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

DEFAULT_MISSING = "NA"


class ParseError(ValueError):
    """Malformed delimited input. Carries the 1-based row / column of the offence."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class AlignmentError(ValueError):
    pass


def _check_unique(ids, what):
    seen = set()
    for i, x in enumerate(ids):
        if x in seen:
            raise ValueError(f"duplicate {what} id {x!r} at position {i}")
        seen.add(x)


@dataclass(frozen=True)
class MissingnessMask:
    """Presence indicator for one variable across subjects.

    ``present[i]`` is True when subject ``i`` was observed; ``presence_prob``
    is P(present), by default the empirical observed fraction.
    """

    present: np.ndarray
    presence_prob: float

    def __post_init__(self):
        present = np.asarray(self.present, dtype=bool)
        object.__setattr__(self, "present", present)
        if not (0.0 < self.presence_prob <= 1.0):
            raise ValueError(
                f"presence_prob must be in (0, 1], got {self.presence_prob}")

    @classmethod
    def from_present(cls, present) -> "MissingnessMask":
        present = np.asarray(present, dtype=bool)
        if present.size == 0:
            raise ValueError("empty mask")
        prob = present.sum() / present.size
        if prob == 0:
            raise ValueError("variable is missing for every subject")
        return cls(present, float(prob))

    @classmethod
    def complete(cls, n: int) -> "MissingnessMask":
        return cls(np.ones(n, dtype=bool), 1.0)

    @classmethod
    def from_values(cls, values) -> "MissingnessMask":
        """Row is present when every coordinate is finite."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            present = np.isfinite(values)
        else:
            present = np.isfinite(values).all(axis=tuple(range(1, values.ndim)))
        return cls.from_present(present)

    @property
    def n(self) -> int:
        return self.present.size


@dataclass(frozen=True)
class GenotypeMatrix:
    subject_ids: tuple
    snp_ids: tuple
    values: np.ndarray  # (n, m) float, NaN = missing

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("genotype values must be a 2-d array")
        if values.shape != (len(self.subject_ids), len(self.snp_ids)):
            raise ValueError(
                f"genotype shape {values.shape} does not match "
                f"{len(self.subject_ids)} subjects x {len(self.snp_ids)} SNPs")
        observed = values[np.isfinite(values)]
        if not np.isin(observed, (0.0, 1.0, 2.0)).all():
            raise ValueError("genotype values must be 0, 1, 2 or missing")
        if np.isinf(values).any():
            raise ValueError("genotype values must be 0, 1, 2 or missing")
        _check_unique(self.subject_ids, "subject")
        _check_unique(self.snp_ids, "SNP")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def mask(self, j: int) -> MissingnessMask:
        return MissingnessMask.from_values(self.values[:, j])

    def presence_prob(self) -> np.ndarray:
        """Empirical non-missing fraction of every SNP column."""
        return np.isfinite(self.values).mean(axis=0)

    def subset(self, subject_idx) -> "GenotypeMatrix":
        subject_idx = list(subject_idx)
        return GenotypeMatrix(
            [self.subject_ids[i] for i in subject_idx], self.snp_ids,
            self.values[subject_idx])


@dataclass(frozen=True)
class PhenotypeMatrix:
    subject_ids: tuple
    region_ids: tuple
    values: np.ndarray  # (n, q) finite floats

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "region_ids", tuple(self.region_ids))
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("phenotype values must be a 2-d array")
        if values.shape != (len(self.subject_ids), len(self.region_ids)):
            raise ValueError(
                f"phenotype shape {values.shape} does not match "
                f"{len(self.subject_ids)} subjects x {len(self.region_ids)} regions")
        if not np.isfinite(values).all():
            raise ValueError("phenotype values must all be finite")
        _check_unique(self.subject_ids, "subject")
        _check_unique(self.region_ids, "region")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def subset(self, subject_idx) -> "PhenotypeMatrix":
        subject_idx = list(subject_idx)
        return PhenotypeMatrix(
            [self.subject_ids[i] for i in subject_idx], self.region_ids,
            self.values[subject_idx])


@dataclass(frozen=True)
class RegionMap:
    """voxel column index -> region label, regions kept in first-seen order."""

    voxel_to_region: Mapping[int, str]
    regions: tuple = field(default=())

    def __post_init__(self):
        mapping = dict(self.voxel_to_region)
        object.__setattr__(self, "voxel_to_region", mapping)
        if not self.regions:
            seen = dict.fromkeys(mapping.values())
            object.__setattr__(self, "regions", tuple(seen))
        missing = set(self.regions) - set(mapping.values())
        if missing:
            raise ValueError(f"regions without voxels: {sorted(missing)}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "RegionMap":
        mapping = {}
        for voxel, label in pairs:
            voxel = int(voxel)
            if voxel in mapping and mapping[voxel] != label:
                raise ValueError(
                    f"voxel {voxel} assigned to both {mapping[voxel]!r} and {label!r}")
            mapping[voxel] = label
        return cls(mapping)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def voxels_of(self, region) -> list:
        return sorted(v for v, r in self.voxel_to_region.items() if r == region)


# --------------------------------------------------------------------------
# parsing

def _read_rows(stream: TextIO, delimiter=None):
    text = stream.read() if hasattr(stream, "read") else str(stream)
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or not lines[0].strip():
        raise ParseError("empty input", row=1)
    if delimiter is None:
        delimiter = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delimiter))
    return rows, delimiter


def _split_table(rows, what):
    header = rows[0]
    if len(header) < 2:
        raise ParseError(f"{what} header needs an id column and at least one data column", row=1)
    col_ids = [h.strip() for h in header[1:]]
    try:
        _check_unique(col_ids, what)
    except ValueError as e:
        raise ParseError(str(e), row=1) from None
    if len(rows) < 2:
        raise ParseError(f"{what} table has no data rows", row=2)
    subject_ids = []
    cells = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", row=r)
        subject_ids.append(row[0].strip())
        cells.append(row[1:])
    try:
        _check_unique(subject_ids, "subject")
    except ValueError as e:
        raise ParseError(str(e)) from None
    return header[0].strip(), col_ids, subject_ids, cells


def parse_genotype_matrix(stream, missing=DEFAULT_MISSING, delimiter=None) -> GenotypeMatrix:
    """Read a subjects x SNPs table of minor-allele counts.

    The first header cell labels the subject column; the remaining header
    cells are SNP ids. Cells must be ``0``, ``1``, ``2`` or ``missing``.
    """
    rows, _ = _read_rows(stream, delimiter)
    _, snp_ids, subject_ids, cells = _split_table(rows, "SNP")
    values = np.empty((len(subject_ids), len(snp_ids)))
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing:
                values[i, j] = np.nan
                continue
            try:
                v = int(cell)
            except ValueError:
                raise ParseError(f"non-integer genotype {cell!r}",
                                 row=i + 2, column=j + 2) from None
            if v not in (0, 1, 2):
                raise ParseError(f"genotype {cell!r} outside {{0,1,2}}",
                                 row=i + 2, column=j + 2)
            values[i, j] = v
    return GenotypeMatrix(subject_ids, snp_ids, values)


def parse_phenotype_matrix(stream, missing=DEFAULT_MISSING, delimiter=None) -> PhenotypeMatrix:
    rows, _ = _read_rows(stream, delimiter)
    _, region_ids, subject_ids, cells = _split_table(rows, "region")
    values = np.empty((len(subject_ids), len(region_ids)))
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing:
                raise ParseError("phenotypes must be complete, found missing value",
                                 row=i + 2, column=j + 2)
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric phenotype {cell!r}",
                                 row=i + 2, column=j + 2) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite phenotype {cell!r}",
                                 row=i + 2, column=j + 2)
            values[i, j] = v
    return PhenotypeMatrix(subject_ids, region_ids, values)


def parse_region_map(stream, delimiter=None) -> RegionMap:
    """Two columns: voxel_index, region_label. A non-integer first row is a header."""
    rows, _ = _read_rows(stream, delimiter)
    pairs = []
    for r, row in enumerate(rows, start=1):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, found {len(row)}", row=r)
        try:
            voxel = int(row[0])
        except ValueError:
            if r == 1:
                continue
            raise ParseError(f"non-integer voxel index {row[0]!r}", row=r, column=1) from None
        pairs.append((voxel, row[1].strip()))
    if not pairs:
        raise ParseError("region map has no entries")
    try:
        return RegionMap.from_pairs(pairs)
    except ValueError as e:
        raise ParseError(str(e)) from None


def read_genotype_file(path, missing=DEFAULT_MISSING, delimiter=None) -> GenotypeMatrix:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_genotype_matrix(f, missing=missing, delimiter=delimiter)


def read_phenotype_file(path, missing=DEFAULT_MISSING, delimiter=None) -> PhenotypeMatrix:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_phenotype_matrix(f, missing=missing, delimiter=delimiter)


def read_region_map_file(path, delimiter=None) -> RegionMap:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_region_map(f, delimiter=delimiter)


# --------------------------------------------------------------------------
# serialization

def _write_table(stream, corner, col_ids, row_ids, cells, delimiter):
    writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    writer.writerow([corner, *col_ids])
    for rid, row in zip(row_ids, cells):
        writer.writerow([rid, *row])


def format_genotype_matrix(g: GenotypeMatrix, missing=DEFAULT_MISSING,
                           delimiter="\t", corner="subject_id") -> str:
    cells = [[missing if np.isnan(v) else str(int(v)) for v in row] for row in g.values]
    out = io.StringIO()
    _write_table(out, corner, g.snp_ids, g.subject_ids, cells, delimiter)
    return out.getvalue()


def format_phenotype_matrix(p: PhenotypeMatrix, delimiter="\t",
                            corner="subject_id") -> str:
    # repr round-trips float64 exactly
    cells = [[repr(float(v)) for v in row] for row in p.values]
    out = io.StringIO()
    _write_table(out, corner, p.region_ids, p.subject_ids, cells, delimiter)
    return out.getvalue()


def write_genotype_file(g: GenotypeMatrix, path, **kwargs):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_genotype_matrix(g, **kwargs))


def write_phenotype_file(p: PhenotypeMatrix, path, **kwargs):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_phenotype_matrix(p, **kwargs))


# --------------------------------------------------------------------------

def align_subjects(g: GenotypeMatrix, p: PhenotypeMatrix):
    """Restrict both matrices to their shared subjects, sorted by id."""
    common = sorted(set(g.subject_ids) & set(p.subject_ids))
    if not common:
        raise AlignmentError("genotype and phenotype tables share no subject ids")
    g_pos = {s: i for i, s in enumerate(g.subject_ids)}
    p_pos = {s: i for i, s in enumerate(p.subject_ids)}
    return (g.subset([g_pos[s] for s in common]),
            p.subset([p_pos[s] for s in common]))


def roi_aggregate(voxels, region_map: RegionMap,
                  subject_ids: Sequence | None = None) -> PhenotypeMatrix:
    """Average voxel columns within each region.

    Parameters
    ----------
    voxels : (n, V) array_like
        Per-subject voxel values; column ``k`` is voxel index ``k``.
    region_map : RegionMap
        Voxel indices absent from ``voxels`` are ignored.
    subject_ids : sequence, optional
        Defaults to ``"0" .. "n-1"``.

    Returns
    -------
    PhenotypeMatrix
        One column per region, in ``region_map.regions`` order.
    """
    voxels = np.asarray(voxels, dtype=float)
    if voxels.ndim != 2:
        raise ValueError("voxels must be a (subjects, voxels) matrix")
    n, n_vox = voxels.shape
    if subject_ids is None:
        subject_ids = [str(i) for i in range(n)]
    members = {region: [] for region in region_map.regions}
    for v, region in sorted(region_map.voxel_to_region.items()):
        if 0 <= v < n_vox:
            members[region].append(v)
    out = np.empty((n, region_map.n_regions))
    for r, region in enumerate(region_map.regions):
        cols = members[region]
        if not cols:
            raise ValueError(f"region {region!r} has no voxel columns in the input")
        out[:, r] = voxels[:, cols].mean(axis=1)
    return PhenotypeMatrix(subject_ids, region_map.regions, out)
