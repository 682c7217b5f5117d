"""CSV readers for populations and JAS-ALUS frames.

Errors carry the file name and 1-based line number (the header is line 1).
Identifier columns whose values are all integers are read as ``int`` so that
ids sort numerically; otherwise they stay strings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .designs import Population, Unit
from .errors import DataIntegrityError
from .jas_alus import JasAlusFrame, Segment, Substratum


class CsvError(DataIntegrityError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


@dataclass
class _Row:
    line: int
    values: dict[str, str]


def _read(path, required: list[str], optional: tuple[str, ...] = ()) -> tuple[list[_Row], list[str]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = [h.strip() for h in (reader.fieldnames or [])]
            missing = [c for c in required if c not in header]
            if missing:
                raise CsvError(path, 1, f"missing column(s) {', '.join(missing)}")
            reader.fieldnames = header
            rows = []
            for row in reader:
                if None in row:
                    raise CsvError(path, reader.line_num, "too many fields")
                if all(not (v or "").strip() for v in row.values()):
                    continue
                rows.append(_Row(reader.line_num, {k: (v or "").strip() for k, v in row.items()}))
    except UnicodeDecodeError as exc:
        raise CsvError(path, None, f"not valid UTF-8 ({exc.reason})") from None
    return rows, header


def _coerce_ids(rows: list[_Row], column: str) -> None:
    values = [r.values[column] for r in rows]
    try:
        ints = [int(v) for v in values]
    except ValueError:
        return
    for r, v in zip(rows, ints):
        r.values[column] = v


def _float(path, row: _Row, column: str) -> float:
    raw = row.values[column]
    try:
        value = float(raw)
    except ValueError:
        raise CsvError(path, row.line, f"column {column!r}: {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise CsvError(path, row.line, f"column {column!r}: {raw!r} is not finite")
    return value


def _int(path, row: _Row, column: str) -> int:
    raw = row.values[column]
    try:
        return int(raw)
    except ValueError:
        raise CsvError(path, row.line, f"column {column!r}: {raw!r} is not an integer") from None


def _flag(path, row: _Row, column: str) -> bool:
    raw = row.values[column].lower()
    if raw in ("1", "true", "yes", "y", "t"):
        return True
    if raw in ("0", "false", "no", "n", "f"):
        return False
    raise CsvError(path, row.line, f"column {column!r}: {raw!r} is not a boolean flag")


def load_population(path) -> Population:
    """Read ``unit_id,y[,stratum]`` into a :class:`Population`."""
    rows, header = _read(path, ["unit_id", "y"])
    has_stratum = "stratum" in header
    if not rows:
        raise CsvError(path, None, "no units")
    _coerce_ids(rows, "unit_id")
    seen: dict = {}
    units = []
    for row in rows:
        uid = row.values["unit_id"]
        if uid == "":
            raise CsvError(path, row.line, "empty unit_id")
        if uid in seen:
            raise CsvError(path, row.line, f"duplicate unit_id {uid!r} (first seen on line {seen[uid]})")
        seen[uid] = row.line
        stratum = row.values["stratum"] or None if has_stratum else None
        units.append(Unit(uid, _float(path, row, "y"), stratum))
    return Population(tuple(units))


def load_jas_alus(substrata_path, segments_path, tracts_path) -> JasAlusFrame:
    """Read and cross-validate the three JAS-ALUS tables.

    * substrata: ``stratum,substratum,e,a,n,n_prime``
    * segments: ``stratum,substratum,segment,r,accurate_flag`` (``r`` may be
      blank for accurate segments)
    * tracts: ``stratum,substratum,segment,tract,t_ratio``
    """
    sub_rows, _ = _read(substrata_path, ["stratum", "substratum", "e", "a", "n", "n_prime"])
    seg_rows, _ = _read(segments_path, ["stratum", "substratum", "segment", "r", "accurate_flag"])
    tract_rows, _ = _read(tracts_path, ["stratum", "substratum", "segment", "tract", "t_ratio"])
    for rows in (sub_rows, seg_rows, tract_rows):
        for col in ("stratum", "substratum"):
            _coerce_ids(rows, col)
    for rows in (seg_rows, tract_rows):
        _coerce_ids(rows, "segment")
    _coerce_ids(tract_rows, "tract")

    substrata: dict[tuple, dict] = {}
    for row in sub_rows:
        key = (row.values["stratum"], row.values["substratum"])
        if key in substrata:
            raise CsvError(substrata_path, row.line, f"duplicate substratum {key!r}")
        spec = {
            "e": _float(substrata_path, row, "e"),
            "a": _float(substrata_path, row, "a"),
            "n": _int(substrata_path, row, "n"),
            "n_prime": _int(substrata_path, row, "n_prime"),
        }
        for name in ("e", "a"):
            if spec[name] < 1:
                raise CsvError(substrata_path, row.line, f"expansion factor {name} = {spec[name]!r} is below 1")
        if spec["n"] < 0 or spec["n_prime"] < 0:
            raise CsvError(substrata_path, row.line, "segment counts must be nonnegative")
        substrata[key] = spec | {"segments": {}}

    segments: dict[tuple, dict] = {}
    for row in seg_rows:
        key = (row.values["stratum"], row.values["substratum"])
        if key not in substrata:
            raise CsvError(segments_path, row.line, f"unknown substratum {key!r}")
        seg_key = key + (row.values["segment"],)
        if seg_key in segments:
            raise CsvError(segments_path, row.line, f"duplicate segment {seg_key!r}")
        accurate = _flag(segments_path, row, "accurate_flag")
        r = None
        if row.values["r"] != "":
            r = _float(segments_path, row, "r")
            if r < 1:
                raise CsvError(segments_path, row.line, f"response expansion factor r = {r!r} is below 1")
        elif not accurate:
            raise CsvError(segments_path, row.line, "ALUS segment (accurate_flag = 0) needs r")
        segments[seg_key] = {"accurate": accurate, "r": r, "tracts": {}}
        substrata[key]["segments"][row.values["segment"]] = segments[seg_key]

    for row in tract_rows:
        seg_key = (row.values["stratum"], row.values["substratum"], row.values["segment"])
        if seg_key not in segments:
            raise CsvError(tracts_path, row.line, f"tract refers to unknown segment {seg_key!r}")
        t = _float(tracts_path, row, "t_ratio")
        if not 0 <= t <= 1:
            raise CsvError(tracts_path, row.line, f"t_ratio = {t!r} is outside [0, 1]")
        tracts = segments[seg_key]["tracts"]
        if row.values["tract"] in tracts:
            raise CsvError(tracts_path, row.line, f"duplicate tract {row.values['tract']!r} in segment {seg_key!r}")
        tracts[row.values["tract"]] = t

    built = []
    for (stratum, substratum), spec in substrata.items():
        segs = tuple(
            Segment(seg_id, s["accurate"], tuple(s["tracts"][t] for t in sorted(s["tracts"])), s["r"])
            for seg_id, s in sorted(spec["segments"].items())
        )
        built.append(Substratum(stratum, substratum, spec["e"], spec["a"], spec["n"], spec["n_prime"], segs))
    return JasAlusFrame(tuple(built))
