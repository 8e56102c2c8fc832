"""JSON/CSV file formats.

Structure files::

    {"n": 1, "f": [["0.5*(p1 + exp(-2*x1)*p1^3)"]]}

``f`` is an n x n array of expressions in x1..xn, u, p1..pn (a bare string is
accepted for n = 1).  Christoffel files hold ``{"m": m, "gamma": {"c,a,b":
expr}}`` with 1-based indices over the base coordinates x1..xm.  Metric files
hold ``{"coords": [...], "g": [[expr, ...], ...]}``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .fefferman import MetricField
from .lc_core import LCStructure
from .projective import ChristoffelField


class FileFormatError(ValueError):
    pass


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: top level must be an object")
    return data


def structure_from_dict(data: dict) -> LCStructure:
    if "n" not in data or "f" not in data:
        raise FileFormatError("structure needs keys 'n' and 'f'")
    n = int(data["n"])
    f = data["f"]
    if isinstance(f, str):
        if n != 1:
            raise FileFormatError("a scalar 'f' is only allowed for n = 1")
        f = [[f]]
    if not isinstance(f, list) or any(not isinstance(r, list) for r in f):
        raise FileFormatError("'f' must be an n x n array of strings")
    return LCStructure.from_strings(n, [[str(s) for s in row] for row in f])


def structure_to_dict(S: LCStructure) -> dict:
    return {"n": S.n, "f": [[str(e) for e in row] for row in S.f]}


def load_structure(path) -> LCStructure:
    return structure_from_dict(_read_json(path))


def save_structure(S: LCStructure, path):
    Path(path).write_text(json.dumps(structure_to_dict(S), indent=2) + "\n", encoding="utf-8")


def load_christoffel(path) -> ChristoffelField:
    data = _read_json(path)
    if "m" not in data:
        raise FileFormatError("Christoffel file needs key 'm'")
    return ChristoffelField.from_dict(data)


def load_metric(path) -> MetricField:
    data = _read_json(path)
    if "coords" not in data or "g" not in data:
        raise FileFormatError("metric file needs keys 'coords' and 'g'")
    return MetricField.from_dict(data)


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package (e.g. 'example.json')."""
    return Path(str(resources.files("lcgeom") / "data" / name))


def write_text(text: str, path=None):
    if path is None or str(path) == "-":
        import click

        click.echo(text, nl=not text.endswith("\n"))
    else:
        Path(path).write_text(text, encoding="utf-8")
