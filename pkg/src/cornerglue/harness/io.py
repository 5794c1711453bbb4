"""Plain-text metric and collar files, JSON reports and CSV samples.

Metric file::

    backend annulus
    n 2
    Nr 129
    Nt 65
    r_range 0.05 1.5
    t_range 0 1.28
    labels r_min=Z r_max=Y t_min=Z t_max=Z
    r t u A B
    ...

One row per node, t-major.  ``labels`` is optional (default: Y on the r
sides, Z on the t sides).  Every float is written with 17 significant
digits, so a write/read round trip is exact.  Collar files use ``Ns``,
``s_range``, an ``interface`` line and rows ``r s E F G B [f]``.
"""

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from ..errors import FormatError, ParameterError
from ..geometry import ANNULUS, BACKENDS, INTERVAL, SIDES, CylGrid, WarpedMetric
from ..normalform import CollarMetric
from ..report import plain

FMT = "{:.17g}"
DEFAULT_LABELS = {"r_min": "Y", "r_max": "Y", "t_min": "Z", "t_max": "Z"}


def _num(x):
    return FMT.format(float(x))


def _read_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return text.splitlines()


class _Header:
    """Ordered ``key value...`` lines at the top of a file."""

    def __init__(self, lines, path, required, optional=()):
        self.values = {}
        self.path = path
        i = 0
        keys = set(required) | set(optional)
        while i < len(lines):
            parts = lines[i].split()
            if not parts or parts[0].startswith("#"):
                i += 1
                continue
            if parts[0] not in keys:
                break
            if parts[0] in self.values:
                raise FormatError(f"{path}:{i + 1}: duplicate header {parts[0]!r}", line=i + 1)
            self.values[parts[0]] = (parts[1:], i + 1)
            i += 1
        missing = [k for k in required if k not in self.values]
        if missing:
            raise FormatError(f"{path}:{i + 1}: missing header line(s) {', '.join(missing)}", line=i + 1)
        self.body_start = i

    def line(self, key):
        return self.values[key][1]

    def word(self, key):
        words, ln = self.values[key]
        if len(words) != 1:
            raise FormatError(f"{self.path}:{ln}: header {key!r} takes one value", line=ln)
        return words[0]

    def int(self, key, minimum=9):
        ln = self.line(key)
        try:
            v = int(self.word(key))
        except ValueError:
            raise FormatError(f"{self.path}:{ln}: header {key!r} must be an integer", line=ln) from None
        if v < minimum:
            raise FormatError(f"{self.path}:{ln}: header {key!r} must be at least {minimum}", line=ln)
        return v

    def range(self, key):
        words, ln = self.values[key]
        try:
            a, b = (float(w) for w in words)
        except ValueError:
            raise FormatError(f"{self.path}:{ln}: header {key!r} needs two numbers", line=ln) from None
        return a, b

    def labels(self, default):
        if "labels" not in self.values:
            return dict(default)
        words, ln = self.values["labels"]
        out = dict(default)
        for w in words:
            k, _, v = w.partition("=")
            if k not in out or v not in ("Y", "Z"):
                raise FormatError(f"{self.path}:{ln}: bad label entry {w!r}", line=ln)
            out[k] = v
        return out


def _rows(lines, start, ncols, nrows, path):
    """Parse ``nrows`` numeric rows of ``ncols`` columns; errors name the line."""
    data = np.empty((nrows, ncols))
    k = 0
    for i in range(start, len(lines)):
        parts = lines[i].split()
        if not parts or parts[0].startswith("#"):
            continue
        if k == nrows:
            raise FormatError(f"{path}:{i + 1}: extra row beyond the declared grid", line=i + 1)
        if len(parts) != ncols:
            kind = "truncated row" if len(parts) < ncols else "too many columns"
            raise FormatError(
                f"{path}:{i + 1}: {kind}: expected {ncols} columns, found {len(parts)}",
                line=i + 1,
            )
        try:
            data[k] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"{path}:{i + 1}: non-numeric entry", line=i + 1) from None
        k += 1
    if k < nrows:
        raise FormatError(f"{path}:{len(lines) + 1}: file ends after {k} of {nrows} rows", line=len(lines) + 1)
    return data


def _check_axis(values, n_a, n_b, declared, label, path, line):
    """values is (n_a, n_b); the axis must be constant across the other index."""
    axis = values[:, 0] if label == "outer" else values[0, :]
    other = values if label == "outer" else values.T
    if not np.all(other == axis[:, None]):
        raise FormatError(f"{path}:{line}: node coordinates are not a tensor grid")
    if axis[0] != declared[0] or axis[-1] != declared[1]:
        raise FormatError(f"{path}:{line}: node coordinates disagree with the declared range")
    return axis


# ------------------------------------------------------------ metric files


def write_metric(W, path):
    g = W.grid
    cols = ["r", "t", "u", "A"] + (["B"] if W.B is not None else [])
    lab = " ".join(f"{k}={g.boundary_labels[k]}" for k in SIDES)
    out = [
        f"backend {g.backend}",
        f"n {g.n}",
        f"Nr {g.Nr}",
        f"Nt {g.Nt}",
        f"r_range {_num(g.r_nodes[0])} {_num(g.r_nodes[-1])}",
        f"t_range {_num(g.t_nodes[0])} {_num(g.t_nodes[-1])}",
        f"labels {lab}",
        " ".join(cols),
    ]
    R, T = np.meshgrid(g.r_nodes, g.t_nodes)
    stack = [R, T, W.u, W.A] + ([W.B] if W.B is not None else [])
    flat = np.stack([np.asarray(a).ravel() for a in stack], axis=1)
    out.extend(" ".join(FMT.format(x) for x in row) for row in flat.tolist())
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)


def read_metric(path):
    lines = _read_lines(path)
    h = _Header(lines, path, ("backend", "n", "Nr", "Nt", "r_range", "t_range"), ("labels",))
    backend = h.word("backend")
    if backend not in BACKENDS:
        raise FormatError(f"{path}:{h.line('backend')}: unknown backend {backend!r}", line=h.line("backend"))
    n = h.int("n", minimum=1)
    if n != BACKENDS[backend]:
        raise FormatError(
            f"{path}:{h.line('n')}: n = {n} does not match backend {backend} (n = {BACKENDS[backend]})",
            line=h.line("n"),
        )
    Nr, Nt = h.int("Nr"), h.int("Nt")
    ncols = 5 if backend == ANNULUS else 4
    start = h.body_start
    # optional column-name line
    if start < len(lines) and lines[start].split()[:1] == ["r"]:
        names = lines[start].split()
        expect = ["r", "t", "u", "A"] + (["B"] if backend == ANNULUS else [])
        if names != expect:
            raise FormatError(
                f"{path}:{start + 1}: columns {' '.join(names)} do not match backend {backend} "
                f"(expected {' '.join(expect)})",
                line=start + 1,
            )
        start += 1
    # column count mismatch on the first data row is a backend mismatch
    for i in range(start, len(lines)):
        parts = lines[i].split()
        if parts and not parts[0].startswith("#"):
            other = 4 if ncols == 5 else 5
            if len(parts) == other:
                raise FormatError(
                    f"{path}:{i + 1}: row has {other} columns but backend {backend} needs {ncols}",
                    line=i + 1,
                )
            break
    data = _rows(lines, start, ncols, Nr * Nt, path).reshape(Nt, Nr, ncols)
    r = _check_axis(data[..., 0], Nt, Nr, h.range("r_range"), "inner", path, h.line("r_range"))
    t = _check_axis(data[..., 1], Nt, Nr, h.range("t_range"), "outer", path, h.line("t_range"))
    try:
        grid = CylGrid(r, t, backend, h.labels(DEFAULT_LABELS))
        return WarpedMetric(grid, data[..., 2], data[..., 3], data[..., 4] if backend == ANNULUS else None)
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ------------------------------------------------------------ collar files


def write_collar(g, path, f=None):
    """Write a collar; ``f`` (flow function on the same grid) becomes a 7th column."""
    s = g.s_nodes
    out = [
        "backend annulus",
        "n 2",
        f"Nr {len(g.r_nodes)}",
        f"Ns {len(s)}",
        f"r_range {_num(g.r_nodes[0])} {_num(g.r_nodes[-1])}",
        f"s_range {_num(s[0])} {_num(s[-1])}",
        f"interface {g.i0}",
        "y_sides " + (" ".join(g.y_sides) if g.y_sides else "none"),
        "r s E F G B" + (" f" if f is not None else ""),
    ]
    R, S = np.meshgrid(g.r_nodes, s)
    cols = [R, S, g.E, g.F, g.G, g.B]
    if f is not None:
        cols.append(np.broadcast_to(np.asarray(f, dtype=float), R.shape))
    flat = np.stack([a.ravel() for a in cols], axis=1)
    out.extend(" ".join(FMT.format(x) for x in row) for row in flat.tolist())
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)


def read_collar(path):
    """Returns ``(CollarMetric, f)``; ``f`` is None when the file has no f column."""
    lines = _read_lines(path)
    h = _Header(lines, path, ("backend", "n", "Nr", "Ns", "r_range", "s_range", "interface"), ("y_sides",))
    if h.word("backend") != ANNULUS or h.int("n", minimum=1) != 2:
        raise FormatError(f"{path}:{h.line('backend')}: collar files use backend annulus, n 2", line=h.line("backend"))
    Nr, Ns = h.int("Nr"), h.int("Ns")
    i0 = h.int("interface", minimum=0)
    ys = tuple(w for w in h.values.get("y_sides", (["r_min", "r_max"], 0))[0] if w != "none")
    if not set(ys) <= {"r_min", "r_max"}:
        raise FormatError(f"{path}:{h.line('y_sides')}: y_sides entries must be r_min or r_max", line=h.line("y_sides"))
    start = h.body_start
    ncols = 6
    if start < len(lines) and lines[start].split()[:1] == ["r"]:
        names = lines[start].split()
        if names not in (["r", "s", "E", "F", "G", "B"], ["r", "s", "E", "F", "G", "B", "f"]):
            raise FormatError(f"{path}:{start + 1}: collar columns must be r s E F G B [f]", line=start + 1)
        ncols = len(names)
        start += 1
    data = _rows(lines, start, ncols, Nr * Ns, path).reshape(Ns, Nr, ncols)
    r = _check_axis(data[..., 0], Ns, Nr, h.range("r_range"), "inner", path, h.line("r_range"))
    s = _check_axis(data[..., 1], Ns, Nr, h.range("s_range"), "outer", path, h.line("s_range"))
    if not (0 <= i0 < Ns) or abs(s[i0]) > 1e-14:
        raise FormatError(f"{path}:{h.line('interface')}: interface index must point at s = 0", line=h.line("interface"))
    try:
        g = CollarMetric(r, s, data[..., 2], data[..., 3], data[..., 4], data[..., 5], ys)
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return g, (data[..., 6] if ncols == 7 else None)


# ------------------------------------------------------------ f files, reports, samples


def read_f(path, Nr=None):
    """A boundary function f: one number per line, or a single constant."""
    lines = _read_lines(path)
    vals = []
    for i, line in enumerate(lines):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            vals.extend(float(x) for x in s.replace(",", " ").split())
        except ValueError:
            raise FormatError(f"{path}:{i + 1}: non-numeric entry", line=i + 1) from None
    if not vals:
        raise FormatError(f"{path}:1: no values")
    if len(vals) == 1:
        return vals[0]
    if Nr is not None and len(vals) != Nr:
        raise FormatError(f"{path}: {len(vals)} values but the cross-section has {Nr} nodes")
    return np.asarray(vals)


def read_k(path, h0):
    """A face tensor k: a constant or one column c (k = c h0), or two columns k_rr k_thth."""
    from ..geometry import RadialSymTensor

    lines = _read_lines(path)
    rows = []
    for i, line in enumerate(lines):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            rows.append(([float(x) for x in s.replace(",", " ").split()], i + 1))
        except ValueError:
            raise FormatError(f"{path}:{i + 1}: non-numeric entry", line=i + 1) from None
    if not rows:
        raise FormatError(f"{path}:1: no values")
    width = len(rows[0][0])
    for vals, ln in rows:
        if len(vals) != width:
            raise FormatError(f"{path}:{ln}: expected {width} columns, found {len(vals)}", line=ln)
    Nr = h0.A.size
    data = np.array([v for v, _ in rows])
    if data.shape == (1, 1):
        data = np.full((Nr, 1), data[0, 0])
    if data.shape[0] != Nr or width not in (1, 2):
        raise FormatError(f"{path}: need {Nr} rows of 1 or 2 columns, found {data.shape[0]} x {width}")
    if width == 1:
        c = data[:, 0]
        return RadialSymTensor(c * h0.A, None if h0.B is None else c * h0.B)
    if h0.B is None:
        raise FormatError(f"{path}: two columns given for the interval backend")
    return RadialSymTensor(data[:, 0], data[:, 1])


def dumps_report(obj):
    """Deterministic JSON text; key order is insertion order of ``obj``."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(plain(obj), indent=2, allow_nan=False) + "\n"


def write_report(obj, path):
    Path(path).write_text(dumps_report(obj))
    return Path(path)


def write_csv(path, header, columns):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*[np.asarray(c, dtype=float).tolist() for c in columns]):
        w.writerow([FMT.format(x) for x in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


__all__ = [
    "write_metric",
    "read_metric",
    "write_collar",
    "read_collar",
    "read_f",
    "read_k",
    "dumps_report",
    "write_report",
    "write_csv",
    "INTERVAL",
]
