"""Binary patient x feature matrices: loading, binarization, splitting."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

DEFAULT_TOP_K = 100


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """An N x d matrix of 0/1 entries with named columns.

    ``values`` is stored as a read-only ``uint8`` array; construction copies
    and validates the input.
    """

    values: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if values.ndim != 2:
            raise InputError(f"expected a 2-d matrix, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise InputError(f"dataset must have at least one row and column, got {values.shape}")
        if not np.isin(values, (0, 1)).all():
            raise InputError("dataset entries must be 0 or 1")
        values = values.astype(np.uint8)
        values.setflags(write=False)
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != values.shape[1]:
            raise InputError(
                f"{len(names)} feature names for {values.shape[1]} columns"
            )
        if any(not n for n in names):
            raise InputError("feature names must be non-empty")
        dupes = sorted(n for n, c in Counter(names).items() if c > 1)
        if dupes:
            raise InputError(f"duplicate feature names: {', '.join(dupes)}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def as_float(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def take(self, rows) -> "BinaryDataset":
        return BinaryDataset(self.values[np.asarray(rows, dtype=np.intp)], self.feature_names)

    def __eq__(self, other):
        if not isinstance(other, BinaryDataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self):
        return f"BinaryDataset(n_rows={self.n_rows}, n_cols={self.n_cols})"


@dataclass(frozen=True)
class CodeListRecord:
    record_id: str
    code: str

    def __post_init__(self):
        if not self.record_id or not self.code:
            raise InputError(f"empty record_id or code in {self!r}")


def load_csv(path) -> BinaryDataset:
    """Read a dense 0/1 CSV whose first line holds the feature names."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}:{lineno}: ragged row with {len(row)} fields, expected {len(header)}"
                )
            try:
                bits = [_parse_bit(tok) for tok in row]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            rows.append(bits)
    if not rows:
        raise InputError(f"{path}: empty body, no data rows after the header")
    return BinaryDataset(np.array(rows, dtype=np.uint8), header)


def _parse_bit(token: str) -> int:
    token = token.strip()
    if token == "0":
        return 0
    if token == "1":
        return 1
    raise ValueError(f"non-binary token {token!r}")


def write_csv(data: BinaryDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(data.feature_names) + "\n")
        for row in data.values:
            fh.write(",".join("1" if v else "0" for v in row) + "\n")


def load_code_list(path) -> list[CodeListRecord]:
    """Read the long format: a ``record_id,code`` header then one code per line."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["record_id", "code"]:
            raise InputError(f"{path}: expected header 'record_id,code', got {header!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            records.append(CodeListRecord(row[0].strip(), row[1].strip()))
    return records


def binarize_code_list(
    records: Sequence[CodeListRecord], top_k: int = DEFAULT_TOP_K
) -> BinaryDataset:
    """One row per record id, one column per retained code.

    Codes are ranked by the number of occurrences; equal counts are ordered by
    the code string. Only the ``top_k`` best ranked codes become columns, in
    that order. Rows are ordered by first appearance of their id and are kept
    even when none of their codes survives.
    """
    if not records:
        raise InputError("empty record list")
    if top_k < 1:
        raise InputError(f"top_k must be >= 1, got {top_k}")
    counts = Counter(r.code for r in records)
    kept = sorted(counts, key=lambda c: (-counts[c], c))[:top_k]
    col = {code: j for j, code in enumerate(kept)}
    row: dict[str, int] = {}
    for r in records:
        row.setdefault(r.record_id, len(row))
    values = np.zeros((len(row), len(kept)), dtype=np.uint8)
    for r in records:
        j = col.get(r.code)
        if j is not None:
            values[row[r.record_id], j] = 1
    return BinaryDataset(values, kept)


def records_from_pairs(pairs: Iterable[tuple]) -> list[CodeListRecord]:
    return [CodeListRecord(str(a), str(b)) for a, b in pairs]


def split_holdout(
    data: BinaryDataset, holdout_fraction: float, seed: int
) -> tuple[BinaryDataset, BinaryDataset]:
    """Random train/holdout partition; the holdout gets floor(fraction * N) rows."""
    if not 0.0 < holdout_fraction < 1.0:
        raise InputError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    n = data.n_rows
    n_hold = int(np.floor(holdout_fraction * n))
    if n_hold < 1 or n - n_hold < 1:
        raise InputError(
            f"holdout_fraction={holdout_fraction} on {n} rows leaves an empty part"
        )
    perm = np.random.default_rng(seed).permutation(n)
    hold = np.sort(perm[:n_hold])
    train = np.sort(perm[n_hold:])
    return data.take(train), data.take(hold)
