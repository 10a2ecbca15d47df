"""Reading and writing choice logs, model files, and the sushi ranking format.

A choice log is JSON Lines: a header object ``{"format": "rmj-choice-log",
"version": 1, "n": ...}`` followed by one ``{"display": [...], "response":
[...]}`` object per record. A model file is one JSON document with ``n``,
``version`` and a list of ``{weight, center, q}`` components, centres given
in position-to-item order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from .choice import ChoiceObservation
from .mixture import Component, MixtureModel
from .ranking import DisplaySet, Ranking

LOG_FORMAT = "rmj-choice-log"
MODEL_FORMAT = "rmj-model"
VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message carries the offending line when known."""


@dataclass
class ChoiceLog:
    n: int
    records: list[ChoiceObservation]


def _dumps(obj) -> str:
    # fixed separators and key order so identical inputs give identical bytes
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def format_header(n: int) -> str:
    return _dumps({"format": LOG_FORMAT, "version": VERSION, "n": n})


def format_record(ob: ChoiceObservation) -> str:
    return _dumps({"display": list(ob.display.items), "response": list(ob.response)})


def write_choice_log(path_or_file, n: int, records: Iterable[ChoiceObservation]) -> None:
    def emit(fh: IO[str]) -> None:
        fh.write(format_header(n) + "\n")
        for ob in records:
            fh.write(format_record(ob) + "\n")

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as fh:
            emit(fh)


def _int_list(value, field: str, lineno: int) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise FormatError(f"line {lineno}: '{field}' must be a list of integers")
    if any(x < 0 for x in value):
        raise FormatError(f"line {lineno}: '{field}' holds a negative item id")
    return value


def parse_record(line: str, lineno: int, n: int) -> ChoiceObservation:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {lineno}: not valid JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or "display" not in obj or "response" not in obj:
        raise FormatError(f"line {lineno}: expected an object with 'display' and 'response'")
    display = _int_list(obj["display"], "display", lineno)
    response = _int_list(obj["response"], "response", lineno)
    if len(set(display)) != len(display):
        raise FormatError(f"line {lineno}: display repeats an item")
    bad = [x for x in display if x >= n]
    if bad:
        raise FormatError(f"line {lineno}: items {bad} fall outside the universe of {n}")
    try:
        return ChoiceObservation(DisplaySet(tuple(sorted(display))), tuple(response))
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None


def _lines(path_or_file) -> Iterator[str]:
    if hasattr(path_or_file, "read"):
        yield from path_or_file
    else:
        with open(path_or_file, encoding="utf-8") as fh:
            yield from fh


def read_choice_log(path_or_file) -> ChoiceLog:
    lines = _lines(path_or_file)
    try:
        first = next(lines)
    except StopIteration:
        raise FormatError("line 1: missing header") from None
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        raise FormatError("line 1: header is not valid JSON") from None
    if not isinstance(header, dict) or header.get("format") != LOG_FORMAT:
        raise FormatError(f"line 1: header must declare format '{LOG_FORMAT}'")
    if header.get("version") != VERSION:
        raise FormatError(f"line 1: unsupported version {header.get('version')!r}")
    n = header.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        raise FormatError("line 1: 'n' must be an integer >= 2")
    records = []
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        records.append(parse_record(line, lineno, n))
    return ChoiceLog(n, records)


def model_to_dict(mix: MixtureModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": VERSION,
        "n": mix.n,
        "components": [
            {"weight": c.weight, "center": list(c.center.order), "q": c.q} for c in mix.components
        ],
    }


def model_from_dict(obj) -> MixtureModel:
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise FormatError(f"model file must declare format '{MODEL_FORMAT}'")
    if obj.get("version") != VERSION:
        raise FormatError(f"unsupported model version {obj.get('version')!r}")
    n = obj.get("n")
    comps = obj.get("components")
    if not isinstance(n, int) or not isinstance(comps, list) or not comps:
        raise FormatError("model file needs an integer 'n' and a nonempty 'components' list")
    out = []
    for i, c in enumerate(comps):
        try:
            center = Ranking(tuple(c["center"]))
            comp = Component(float(c["weight"]), center, float(c["q"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"component {i}: {exc}") from None
        if center.n != n:
            raise FormatError(f"component {i}: centre has {center.n} items, file says n={n}")
        out.append(comp)
    try:
        return MixtureModel(tuple(out))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def format_model(mix: MixtureModel) -> str:
    return json.dumps(model_to_dict(mix), indent=2, sort_keys=True) + "\n"


def write_model(path, mix: MixtureModel) -> None:
    Path(path).write_text(format_model(mix), encoding="utf-8")


def read_model(path) -> MixtureModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON ({exc.msg})") from None
    return model_from_dict(obj)


def read_sushi(path_or_file, k: int | None = None) -> ChoiceLog:
    """Full rankings in the sushi survey layout, as ranked choices from the full display.

    The first line is a header and each later row reads ``<a> <b> item item
    ...`` with the two leading fields ignored. With ``k`` only the top ``k``
    of each ranking is kept.
    """
    rows: list[tuple[int, list[int]]] = []
    for lineno, line in enumerate(_lines(path_or_file), start=1):
        if lineno == 1 or not line.strip():
            continue
        tokens = line.split()
        try:
            items = [int(t) for t in tokens[2:]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer item id") from None
        if len(items) < 2 or len(set(items)) != len(items) or min(items) < 0:
            raise FormatError(f"line {lineno}: expected a ranking of distinct nonnegative ids")
        rows.append((lineno, items))
    if not rows:
        raise FormatError("no rankings found")
    n = max(len(items) for _, items in rows)
    full = DisplaySet.full(n)
    records = []
    for lineno, items in rows:
        if sorted(items) != list(range(n)):
            raise FormatError(f"line {lineno}: row is not a permutation of 0..{n - 1}")
        records.append(ChoiceObservation(full, tuple(items[: k or n])))
    return ChoiceLog(n, records)
