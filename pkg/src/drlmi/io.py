"""Problem, controller and result files.

All files are JSON documents.  Matrices are row-major nested lists and every
document carries a ``format`` tag and a ``version``.  Floats are written with
``repr``, which round-trips exactly; non-finite values are written as the
strings ``"inf"``, ``"-inf"`` and ``"nan"``.

A problem file looks like::

    {
      "format": "drlmi-problem",
      "version": 1,
      "dimensions": {"n_x": 1, "n_w": 1, "n_u": 1, "n_z": 1, "n_y": 1},
      "plant": {"A": [[0.5]], "B_w": [[1.0]], ...},
      "ambiguity": {"kind": "ind", "gamma": 0.5, "Sigma_nom": [[1.0]]},
      "controller": {"A_c": ..., "B_c": ..., "C_c": ..., "D_c": ...},
      "autocorrelation": {"lag": 1, "M": [...], "gammas": [...]},
      "scaling": [1.0],
      "output_names": ["z"]
    }

``controller``, ``autocorrelation``, ``scaling``, ``output_names`` and
``description`` are optional.  Validation errors carry the line of the
offending key where it can be found.
"""

import csv
import io as _io
import json
import math
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .ambiguity import AmbiguitySpec
from .errors import DrlmiError, InvalidInput
from .model import Controller, PlantRealization

PROBLEM_FORMAT = "drlmi-problem"
CONTROLLER_FORMAT = "drlmi-controller"
RESULT_FORMAT = "drlmi-result"
VERSION = 1

PLANT_FIELDS = [f.name for f in fields(PlantRealization)]
CONTROLLER_FIELDS = [f.name for f in fields(Controller)]


class ProblemFileError(InvalidInput):
    """Schema or dimension error in an input document; ``line`` may be None."""

    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


# ---------------------------------------------------------------------------
# locating keys in the source text


def _locate(text, path):
    """Line number (1-based) of the last key in ``path``, or None.

    Keys are searched for in order, each after the position of the previous
    one; list indices are skipped.  This is a heuristic but is exact for the
    files this module writes.
    """
    if text is None:
        return None
    pos, found = 0, None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"' + re.escape(str(key)) + r'"\s*:').search(text, pos)
        if m is None:
            break
        pos, found = m.end(), m.start()
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


class _Reader:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def fail(self, message, *path):
        raise ProblemFileError(message, _locate(self.text, path), self.source)

    def get(self, d, key, *parent, required=True):
        if not isinstance(d, dict):
            self.fail(f"expected an object at {'.'.join(map(str, parent)) or 'top level'}", *parent)
        if key not in d:
            if required:
                self.fail(f"missing field {'.'.join(map(str, parent + (key,)))!r}", *parent)
            return None
        return d[key]

    def matrix(self, value, *path):
        name = ".".join(map(str, path))
        try:
            M = np.array(_decode(value), dtype=float)
        except (TypeError, ValueError):
            self.fail(f"{name} is not a numeric matrix", *path)
        if M.ndim == 0:
            M = M.reshape(1, 1)
        elif M.ndim == 1:
            # an empty list stands for a matrix with zero rows
            M = M.reshape(0, 0) if M.size == 0 else M.reshape(1, -1)
        if M.ndim != 2:
            self.fail(f"{name} must be a 2-D matrix, got {M.ndim} dimensions", *path)
        if not np.all(np.isfinite(M)):
            self.fail(f"{name} has non-finite entries", *path)
        return M

    def shaped(self, value, shape, *path):
        M = self.matrix(value, *path)
        if M.size == 0 and 0 in shape:
            M = M.reshape(shape)
        if M.shape != shape:
            self.fail(f"{'.'.join(map(str, path))} has shape {M.shape}, expected {shape}", *path)
        return M


def _decode(value):
    # accept the non-finite spellings written by _encode
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("inf", "+inf", "infinity"):
            return math.inf
        if low in ("-inf", "-infinity"):
            return -math.inf
        if low == "nan":
            return math.nan
        raise ValueError(value)
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def _encode(value):
    if isinstance(value, np.ndarray):
        return _encode(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps(doc):
    """Serialise a document; matrices keep one row per line."""
    return _pretty(_encode(doc), 0) + "\n"


def _pretty(v, ind):
    pad = "  " * (ind + 1)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_pretty(x, ind + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
    if isinstance(v, list) and v and all(isinstance(r, list) for r in v):
        rows = [f"{pad}{_pretty(r, ind + 1)}" for r in v]
        return "[\n" + ",\n".join(rows) + "\n" + "  " * ind + "]"
    return json.dumps(v, allow_nan=False)


def _parse(text, source, expect):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    rd = _Reader(text, source)
    if not isinstance(doc, dict):
        rd.fail("top level must be an object")
    fmt = doc.get("format", expect)
    if fmt != expect:
        rd.fail(f"format is {fmt!r}, expected {expect!r}", "format")
    ver = doc.get("version", VERSION)
    if ver != VERSION:
        rd.fail(f"unsupported version {ver!r}", "version")
    return doc, rd


# ---------------------------------------------------------------------------
# problem files


@dataclass
class ProblemFile:
    plant: PlantRealization
    ambiguity: AmbiguitySpec
    controller: Controller = None
    autocorrelation: object = None
    scaling: np.ndarray = None
    output_names: list = None
    description: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dimensions(self):
        p = self.plant
        return {"n_x": p.n_x, "n_w": p.n_w, "n_u": p.n_u, "n_z": p.n_z, "n_y": p.n_y}

    def names(self):
        if self.output_names:
            return list(self.output_names)
        return [f"z{i + 1}" for i in range(self.plant.n_z)]

    def scaled_plant(self):
        """Plant with performance outputs multiplied by ``scaling``."""
        if self.scaling is None:
            return self.plant
        W = np.diag(self.scaling)
        p = self.plant
        return PlantRealization(p.A, p.B_w, p.B_u, W @ p.C_z, W @ p.D_zw, W @ p.D_zu, p.C_y, p.D_yw)

    def to_dict(self):
        d = {"format": PROBLEM_FORMAT, "version": VERSION}
        if self.description:
            d["description"] = self.description
        d.update(self.meta)
        d["dimensions"] = self.dimensions
        d["plant"] = self.plant.to_dict()
        amb = self.ambiguity
        d["ambiguity"] = {"kind": amb.kind.value, "gamma": amb.gamma, "Sigma_nom": amb.Sigma_nom.tolist()}
        if self.controller is not None:
            d["controller"] = self.controller.to_dict()
        if self.autocorrelation is not None:
            d["autocorrelation"] = self.autocorrelation.to_dict()
        if self.scaling is not None:
            d["scaling"] = np.asarray(self.scaling, dtype=float).tolist()
        if self.output_names is not None:
            d["output_names"] = list(self.output_names)
        return d


_KNOWN = {
    "format", "version", "description", "dimensions", "plant", "ambiguity",
    "controller", "autocorrelation", "scaling", "output_names",
}


def parse_problem(text, source=None):
    """Parse and validate a problem document.  Raises :class:`ProblemFileError`."""
    doc, rd = _parse(text, source, PROBLEM_FORMAT)
    dims = rd.get(doc, "dimensions")
    want = {}
    for k in ("n_x", "n_w", "n_u", "n_z", "n_y"):
        v = rd.get(dims, k, "dimensions")
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            rd.fail(f"dimensions.{k} must be a non-negative integer", "dimensions", k)
        want[k] = v
    if want["n_x"] < 1 or want["n_w"] < 1:
        rd.fail("n_x and n_w must be at least 1", "dimensions")
    nx, nw, nu, nz, ny = (want[k] for k in ("n_x", "n_w", "n_u", "n_z", "n_y"))
    shapes = {
        "A": (nx, nx), "B_w": (nx, nw), "B_u": (nx, nu), "C_z": (nz, nx),
        "D_zw": (nz, nw), "D_zu": (nz, nu), "C_y": (ny, nx), "D_yw": (ny, nw),
    }
    pd = rd.get(doc, "plant")
    mats = {k: rd.shaped(rd.get(pd, k, "plant"), shapes[k], "plant", k) for k in PLANT_FIELDS}
    plant = PlantRealization(**mats)

    ad = rd.get(doc, "ambiguity")
    kind = rd.get(ad, "kind", "ambiguity")
    gamma = rd.get(ad, "gamma", "ambiguity")
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        rd.fail("ambiguity.gamma must be a number", "ambiguity", "gamma")
    S = rd.shaped(rd.get(ad, "Sigma_nom", "ambiguity"), (nw, nw), "ambiguity", "Sigma_nom")
    try:
        amb = AmbiguitySpec(kind, gamma, S)
    except DrlmiError as exc:
        rd.fail(f"ambiguity: {exc}", "ambiguity")

    ctrl = None
    cd = rd.get(doc, "controller", required=False)
    if cd is not None:
        cshapes = {"A_c": (nx, nx), "B_c": (nx, ny), "C_c": (nu, nx), "D_c": (nu, ny)}
        ctrl = Controller(**{k: rd.shaped(rd.get(cd, k, "controller"), cshapes[k], "controller", k) for k in CONTROLLER_FIELDS})

    acf = None
    xd = rd.get(doc, "autocorrelation", required=False)
    if xd is not None:
        from .analysis import AutocorrelationConstraint

        try:
            acf = AutocorrelationConstraint.from_dict(
                {k: _decode(rd.get(xd, k, "autocorrelation")) for k in ("lag", "M", "gammas")}
            )
        except DrlmiError as exc:
            rd.fail(f"autocorrelation: {exc}", "autocorrelation")
        if acf.N and acf.n_w != nw:
            rd.fail(f"autocorrelation matrices are {acf.n_w}x{acf.n_w}, expected n_w = {nw}", "autocorrelation", "M")

    scaling = rd.get(doc, "scaling", required=False)
    if scaling is not None:
        scaling = rd.matrix([scaling], "scaling").ravel()
        if scaling.size != nz or np.any(scaling <= 0):
            rd.fail(f"scaling must hold {nz} positive weights", "scaling")

    names = rd.get(doc, "output_names", required=False)
    if names is not None and (not isinstance(names, list) or len(names) != nz):
        rd.fail(f"output_names must be a list of {nz} strings", "output_names")

    meta = {k: v for k, v in doc.items() if k not in _KNOWN}
    return ProblemFile(plant, amb, ctrl, acf, scaling, names, doc.get("description", ""), meta)


def read_problem(path):
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), source=str(path))


def write_problem(path, problem):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(problem.to_dict()))


# ---------------------------------------------------------------------------
# controller files


def controller_document(ctrl, **info):
    d = {
        "format": CONTROLLER_FORMAT,
        "version": VERSION,
        "dimensions": {"n_x": ctrl.order, "n_y": ctrl.B_c.shape[1], "n_u": ctrl.C_c.shape[0]},
    }
    d.update(info)
    d["controller"] = ctrl.to_dict()
    return d


def parse_controller(text, source=None):
    """Controller from a controller document (or the ``controller`` of a problem)."""
    doc, rd = _parse_any(text, source)
    if doc.get("format") == PROBLEM_FORMAT:
        if "controller" not in doc:
            rd.fail("problem file has no controller")
        return parse_problem(text, source).controller
    dims = rd.get(doc, "dimensions")
    n, ny, nu = (rd.get(dims, k, "dimensions") for k in ("n_x", "n_y", "n_u"))
    cd = rd.get(doc, "controller")
    shapes = {"A_c": (n, n), "B_c": (n, ny), "C_c": (nu, n), "D_c": (nu, ny)}
    return Controller(**{k: rd.shaped(rd.get(cd, k, "controller"), shapes[k], "controller", k) for k in CONTROLLER_FIELDS})


def _parse_any(text, source):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    rd = _Reader(text, source)
    if not isinstance(doc, dict):
        rd.fail("top level must be an object")
    if doc.get("format", CONTROLLER_FORMAT) not in (CONTROLLER_FORMAT, PROBLEM_FORMAT):
        rd.fail(f"unexpected format {doc.get('format')!r}", "format")
    return doc, rd


def read_controller(path):
    with open(path, encoding="utf-8") as fh:
        return parse_controller(fh.read(), source=str(path))


def write_controller(path, ctrl, **info):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(controller_document(ctrl, **info)))


# ---------------------------------------------------------------------------
# result documents


def result_document(command, **fields_):
    d = {"format": RESULT_FORMAT, "version": VERSION, "command": command}
    d.update(fields_)
    return d


def read_result(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    doc, _ = _parse(text, str(path), RESULT_FORMAT)
    return _decode_tree(doc)


def _decode_tree(v):
    if isinstance(v, dict):
        return {k: _decode_tree(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode_tree(x) for x in v]
    if isinstance(v, str):
        try:
            return _decode(v)
        except ValueError:
            return v
    return v


def _flatten(prefix, v, out):
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else k, x, out)
    elif isinstance(v, (list, np.ndarray)):
        arr = np.asarray(v, dtype=object)
        for idx in np.ndindex(arr.shape):
            _flatten(prefix + "".join(f"[{i}]" for i in idx), arr[idx], out)
    else:
        out.append((prefix, v))


def result_csv(doc):
    """``field,value`` rows; matrices are flattened to ``name[i][j]``."""
    rows = []
    _flatten("", _encode(doc), rows)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    for k, v in rows:
        w.writerow([k, repr(v) if isinstance(v, float) else v])
    return buf.getvalue()


def table_csv(header, rows):
    """Plain CSV table with full-precision floats."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def write_result(path, doc, fmt="json"):
    if fmt not in ("json", "csv"):
        raise InvalidInput(f"unknown output format {fmt!r}")
    text = dumps(doc) if fmt == "json" else result_csv(doc)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
