"""Parsing and validation of MLST profile tables and per-locus allele FASTA.

File conventions follow pubmlst.org exports: a tab-separated profile table
(one row per sequence type, one column per locus) and one FASTA file per
locus with headers like ``>aspA_1`` or plain ``>1``. The result of
:func:`build_dataset` is immutable and safe to share across threads.

Two validation modes:

* ``strict`` rejects anything suspect (missing alleles, off-length
  sequences, non-ACGT characters, duplicate allele vectors).
* ``lenient`` keeps going: a sequence type missing usable data at a locus
  is excluded from analyses focused on that locus, ambiguous bases are
  masked out of Hamming comparisons, and every repair is reported.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    DuplicateAlleleError,
    DuplicateStError,
    DuplicateVectorError,
    EmptyFileError,
    EmptySequenceError,
    LengthMismatchError,
    MalformedHeaderError,
    MissingColumnError,
    NonIntegerAlleleError,
    ParseError,
    ReferentialIntegrityError,
    TooFewLociError,
    TooFewStsError,
)

_ACGT = frozenset("ACGT")

# nucleotide byte codes used throughout: A=0 C=1 G=2 T=3, anything else = 255
_ENCODE = np.full(256, 255, dtype=np.uint8)
for _i, _b in enumerate(b"ACGT"):
    _ENCODE[_b] = _i
_DECODE = np.frombuffer(b"ACGT", dtype=np.uint8)


@dataclass(frozen=True)
class LocusMeta:
    name: str
    length: int          # modal allele length in bases
    allele_count: int


@dataclass(frozen=True)
class AlleleSequence:
    locus: str
    allele_id: int
    sequence: str

    def encoded(self) -> np.ndarray:
        """Sequence as uint8 codes (A=0 C=1 G=2 T=3, other=255)."""
        return _ENCODE[np.frombuffer(self.sequence.encode("ascii"), dtype=np.uint8)]


@dataclass(frozen=True)
class StProfile:
    st_id: int
    alleles: tuple[int, ...]
    isolate_count: int = 1


@dataclass(frozen=True)
class BuildReport:
    """What lenient construction had to repair; empty in strict mode."""

    messages: tuple[str, ...] = ()
    dropped_sts: tuple[int, ...] = ()
    excluded: Mapping[str, frozenset[int]] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.messages)


@dataclass(frozen=True)
class MlstDataset:
    loci: tuple[LocusMeta, ...]
    alleles: Mapping[tuple[str, int], AlleleSequence]
    profiles: tuple[StProfile, ...]
    # st_ids that cannot be analysed with the given locus as the focal one
    excluded_at: Mapping[str, frozenset[int]] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def locus_names(self) -> tuple[str, ...]:
        return tuple(meta.name for meta in self.loci)

    def locus_meta(self, locus: str) -> LocusMeta:
        for meta in self.loci:
            if meta.name == locus:
                return meta
        raise KeyError(f"unknown locus {locus!r}")

    def locus_index(self, locus: str) -> int:
        for i, meta in enumerate(self.loci):
            if meta.name == locus:
                return i
        raise KeyError(f"unknown locus {locus!r}")

    def allele(self, locus: str, allele_id: int) -> AlleleSequence | None:
        return self.alleles.get((locus, allele_id))

    def usable_at(self, locus: str, st_id: int) -> bool:
        return st_id not in self.excluded_at.get(locus, frozenset())

    def encoded_alleles(self, locus: str) -> dict[int, np.ndarray]:
        """Per-allele uint8 code arrays for one locus, cached."""
        key = ("enc", locus)
        if key not in self._cache:
            self._cache[key] = {
                aid: seq.encoded()
                for (loc, aid), seq in self.alleles.items()
                if loc == locus
            }
        return self._cache[key]


# -- parsing ------------------------------------------------------------------


def parse_profiles(
    path: str | Path,
    locus_columns: Sequence[str],
    st_column: str = "ST",
    count_column: str | None = None,
) -> list[StProfile]:
    """Parse a tab-separated profile table into sequence-type profiles.

    Columns not named are ignored (pubmlst exports carry extras such as
    clonal_complex). Lines starting with '#' are skipped.
    """
    path = Path(path)
    rows: list[tuple[int, list[str]]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            rows.append((lineno, line.split("\t")))
    if not rows:
        raise EmptyFileError("profile file has no content", str(path))
    header_line, header = rows[0]
    col_index: dict[str, int] = {}
    for idx, name in enumerate(header):
        col_index.setdefault(name.strip(), idx)
    for needed in [st_column, *locus_columns] + ([count_column] if count_column else []):
        if needed not in col_index:
            raise MissingColumnError(f"column {needed!r} not in header", str(path), header_line)
    if len(rows) == 1:
        raise EmptyFileError("profile file has a header but no data rows", str(path))

    def cell(fields: list[str], col: str, lineno: int) -> str:
        idx = col_index[col]
        if idx >= len(fields):
            raise NonIntegerAlleleError(f"row too short for column {col!r}", str(path), lineno)
        return fields[idx].strip()

    profiles: list[StProfile] = []
    seen: set[int] = set()
    for lineno, fields in rows[1:]:
        st_tok = cell(fields, st_column, lineno)
        try:
            st_id = int(st_tok)
        except ValueError:
            raise NonIntegerAlleleError(f"ST value {st_tok!r} is not an integer", str(path), lineno)
        if st_id in seen:
            raise DuplicateStError(f"duplicate ST {st_id}", str(path), lineno)
        seen.add(st_id)
        allele_ids = []
        for col in locus_columns:
            tok = cell(fields, col, lineno)
            try:
                aid = int(tok)
            except ValueError:
                raise NonIntegerAlleleError(
                    f"allele {tok!r} in column {col!r} is not an integer", str(path), lineno
                )
            if aid <= 0:
                raise NonIntegerAlleleError(
                    f"allele id must be positive, got {aid} in column {col!r}", str(path), lineno
                )
            allele_ids.append(aid)
        count = 1
        if count_column:
            tok = cell(fields, count_column, lineno)
            try:
                count = int(tok)
            except ValueError:
                raise NonIntegerAlleleError(f"count {tok!r} is not an integer", str(path), lineno)
            if count <= 0:
                raise NonIntegerAlleleError(f"count must be positive, got {count}", str(path), lineno)
        profiles.append(StProfile(st_id=st_id, alleles=tuple(allele_ids), isolate_count=count))
    profiles.sort(key=lambda p: p.st_id)
    return profiles


def parse_allele_fasta(path: str | Path, locus: str) -> list[AlleleSequence]:
    """Parse one locus's allele FASTA.

    Headers may be ``>{locus}_{allele_id}`` or bare ``>{allele_id}``; the
    allele id is the trailing integer of the first header token. Sequences
    are uppercased and multi-line records concatenated.
    """
    path = Path(path)
    records: list[AlleleSequence] = []
    seen: set[int] = set()
    header_tok: str | None = None
    header_line = 0
    chunks: list[str] = []

    def flush() -> None:
        if header_tok is None:
            return
        seq = "".join(chunks)
        if not seq:
            raise EmptySequenceError(f"record {header_tok!r} has no sequence", str(path), header_line)
        tail = header_tok.rsplit("_", 1)[-1]
        try:
            aid = int(tail)
        except ValueError:
            raise MalformedHeaderError(
                f"header {header_tok!r} has no trailing allele number", str(path), header_line
            )
        if aid <= 0:
            raise MalformedHeaderError(f"allele id must be positive in {header_tok!r}", str(path), header_line)
        if aid in seen:
            raise DuplicateAlleleError(f"allele {aid} appears twice", str(path), header_line)
        seen.add(aid)
        records.append(AlleleSequence(locus=locus, allele_id=aid, sequence=seq))

    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                header_tok = line[1:].split()[0] if line[1:].split() else ""
                if not header_tok:
                    raise MalformedHeaderError("empty FASTA header", str(path), lineno)
                header_line = lineno
                chunks = []
            else:
                if header_tok is None:
                    raise MalformedHeaderError("sequence data before any header", str(path), lineno)
                up = line.upper()
                if not up.isalpha():
                    raise ParseError(f"invalid sequence characters in {up!r}", str(path), lineno)
                chunks.append(up)
    flush()
    if not records:
        raise EmptyFileError("FASTA file has no records", str(path))
    records.sort(key=lambda a: a.allele_id)
    return records


# -- dataset construction ------------------------------------------------------


def build_dataset(
    profiles: Sequence[StProfile],
    alleles_by_locus: Mapping[str, Sequence[AlleleSequence]],
    mode: str = "strict",
) -> tuple[MlstDataset, BuildReport]:
    """Assemble and validate an immutable dataset.

    Locus order is the key order of ``alleles_by_locus`` and must match the
    positional order of each profile's allele list. Returns the dataset and
    a report of lenient-mode exclusions (empty when strict succeeds).
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be strict or lenient, got {mode!r}")
    locus_names = list(alleles_by_locus)
    if len(locus_names) < 2:
        raise TooFewLociError(f"need at least 2 loci, got {len(locus_names)}")
    if len(profiles) < 2:
        raise TooFewStsError(f"need at least 2 sequence types, got {len(profiles)}")

    messages: list[str] = []
    allele_map: dict[tuple[str, int], AlleleSequence] = {}
    modal_len: dict[str, int] = {}
    off_length: dict[str, set[int]] = {name: set() for name in locus_names}

    for name in locus_names:
        records = sorted(alleles_by_locus[name], key=lambda a: a.allele_id)
        if not records:
            raise DataError(f"locus {name!r} has no alleles")
        lengths = Counter(len(rec.sequence) for rec in records)
        # modal length; ties broken toward the shorter for determinism
        modal = min(
            (length for length, cnt in lengths.items() if cnt == max(lengths.values())),
        )
        modal_len[name] = modal
        for rec in records:
            if rec.locus != name:
                raise DataError(f"allele tagged {rec.locus!r} supplied under locus {name!r}")
            key = (name, rec.allele_id)
            if key in allele_map:
                raise DuplicateAlleleError(f"allele {rec.allele_id} duplicated at locus {name}")
            if len(rec.sequence) != modal:
                if mode == "strict":
                    raise LengthMismatchError(
                        f"allele {name}_{rec.allele_id} has length {len(rec.sequence)}, "
                        f"modal length is {modal}"
                    )
                off_length[name].add(rec.allele_id)
                messages.append(
                    f"locus {name}: allele {rec.allele_id} off-length "
                    f"({len(rec.sequence)} vs modal {modal})"
                )
            bad = set(rec.sequence) - _ACGT
            if bad:
                if mode == "strict":
                    raise DataError(
                        f"allele {name}_{rec.allele_id} contains non-ACGT characters {sorted(bad)}"
                    )
                messages.append(
                    f"locus {name}: allele {rec.allele_id} has ambiguous bases "
                    f"{sorted(bad)}; positions masked in comparisons"
                )
            allele_map[key] = rec

    # per-profile checks
    kept: list[StProfile] = []
    dropped: list[int] = []
    seen_ids: set[int] = set()
    seen_vectors: dict[tuple[int, ...], int] = {}
    excluded: dict[str, set[int]] = {name: set() for name in locus_names}
    for prof in sorted(profiles, key=lambda p: p.st_id):
        if prof.st_id in seen_ids:
            raise DuplicateStError(f"duplicate ST {prof.st_id}")
        seen_ids.add(prof.st_id)
        if len(prof.alleles) != len(locus_names):
            raise DataError(
                f"ST {prof.st_id} has {len(prof.alleles)} alleles for {len(locus_names)} loci"
            )
        if prof.alleles in seen_vectors:
            if mode == "strict":
                raise DuplicateVectorError(
                    f"ST {prof.st_id} and ST {seen_vectors[prof.alleles]} share an allele vector"
                )
            dropped.append(prof.st_id)
            messages.append(
                f"ST {prof.st_id} dropped: allele vector duplicates ST {seen_vectors[prof.alleles]}"
            )
            continue
        seen_vectors[prof.alleles] = prof.st_id
        for name, aid in zip(locus_names, prof.alleles):
            missing = (name, aid) not in allele_map
            if missing and mode == "strict":
                raise ReferentialIntegrityError(
                    f"ST {prof.st_id} references allele {name}_{aid} absent from FASTA"
                )
            if missing or aid in off_length[name]:
                excluded[name].add(prof.st_id)
                if missing:
                    messages.append(f"ST {prof.st_id} excluded at locus {name}: allele {aid} missing")
        kept.append(prof)
    if len(kept) < 2:
        raise TooFewStsError(f"only {len(kept)} sequence types survive validation")

    loci = tuple(
        LocusMeta(
            name=name,
            length=modal_len[name],
            allele_count=sum(1 for (loc, _aid) in allele_map if loc == name),
        )
        for name in locus_names
    )
    dataset = MlstDataset(
        loci=loci,
        alleles=dict(sorted(allele_map.items())),
        profiles=tuple(kept),
        excluded_at={name: frozenset(ids) for name, ids in excluded.items() if ids},
    )
    report = BuildReport(
        messages=tuple(messages),
        dropped_sts=tuple(dropped),
        excluded={name: frozenset(ids) for name, ids in excluded.items() if ids},
    )
    return dataset, report


def hamming(a: AlleleSequence, b: AlleleSequence) -> int:
    """Nucleotide differences between two equal-length alleles of one locus.

    Positions where either side carries a non-ACGT character are ignored
    (lenient ambiguity handling; strict datasets never contain them).
    """
    if a.locus != b.locus:
        raise DataError(f"cannot compare alleles across loci ({a.locus} vs {b.locus})")
    if len(a.sequence) != len(b.sequence):
        raise LengthMismatchError(
            f"{a.locus}_{a.allele_id} and {a.locus}_{b.allele_id} differ in length "
            f"({len(a.sequence)} vs {len(b.sequence)})"
        )
    ea = a.encoded()
    eb = b.encoded()
    valid = (ea != 255) & (eb != 255)
    return int(np.count_nonzero((ea != eb) & valid))


# -- writers (round-trip + simulator output) -----------------------------------


def write_profiles(dataset: MlstDataset, path: str | Path, count_column: str | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = ["ST", *dataset.locus_names]
        if count_column:
            header.append(count_column)
        fh.write("\t".join(header) + "\n")
        for prof in dataset.profiles:
            row = [str(prof.st_id), *(str(a) for a in prof.alleles)]
            if count_column:
                row.append(str(prof.isolate_count))
            fh.write("\t".join(row) + "\n")


def write_allele_fasta(dataset: MlstDataset, locus: str, path: str | Path, width: int = 60) -> None:
    path = Path(path)
    records = [seq for (loc, _aid), seq in sorted(dataset.alleles.items()) if loc == locus]
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f">{locus}_{rec.allele_id}\n")
            for start in range(0, len(rec.sequence), width):
                fh.write(rec.sequence[start : start + width] + "\n")


def decode_sequence(codes: np.ndarray) -> str:
    """Inverse of AlleleSequence.encoded for pure-ACGT code arrays."""
    return _DECODE[codes].tobytes().decode("ascii")
