"""
Reading and writing the delimited-text tables used as inputs and outputs.

Three schemas are understood:

``table1``
    Tomography counts: ``nu, signal, idler`` followed by one column per phase
    configuration and an optional ``n_nu`` total. ``-`` marks a configuration
    that the projection does not use.
``table2``
    CGLMP counts: ``term, x, y, a, b, phi_s, phi_i, counts, std`` with two
    reference rows labelled ``P_max`` and ``P_min``. Phases may be written as
    plain radians or as multiples of pi (``pi/6``, ``-5pi/6``).
``coincidence``
    ``signal_channel, idler_channel, counts, accidentals``; an optional
    ``# integration_time_s: <value>`` comment sets the integration time.

Lines starting with ``#`` are comments. Errors carry the 1-based line and
column of the offending cell.
"""
from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .cglmp import TERMS, CGLMPBasis, CGLMPCounts, basis_phases
from .detection import CoincidenceRecord, CoincidenceTable
from .errors import FixtureParseError
from .tomography import PHASE_CONFIGS, PROJECTION_ORDER, TomographyData, build_projection_set

TABLE1_HEADER = ("nu", "signal", "idler", "c_0_0", "c_0_pi2", "c_pi2_0", "c_pi2_pi2", "n_nu")
TABLE2_HEADER = ("term", "x", "y", "a", "b", "phi_s", "phi_i", "counts", "std")
COINCIDENCE_HEADER = ("signal_channel", "idler_channel", "counts", "accidentals")
DASH = "-"


def data_path(name):
    """Path of a file bundled in ``freqbin/data``."""
    return Path(str(resources.files("freqbin") / "data" / name))


# -- typed records ---------------------------------------------------------

@dataclass(frozen=True)
class Table1Row:
    nu: int
    signal: str
    idler: str
    cells: tuple  # one entry per phase configuration, None where unused

    @property
    def total(self):
        return sum(c for c in self.cells if c is not None)


@dataclass(frozen=True)
class Table1:
    rows: tuple

    def raw(self):
        """``{(nu, config_index): counts}`` for every measured cell."""
        return {
            (r.nu, c): n
            for r in self.rows
            for c, n in enumerate(r.cells)
            if n is not None
        }

    def data(self):
        return TomographyData.from_totals([r.total for r in self.rows])


@dataclass(frozen=True)
class Table2Row:
    term: str
    x: int | None
    y: int | None
    a: int
    b: int
    phi_s: float
    phi_i: float
    counts: float
    std: float | None


@dataclass(frozen=True)
class Table2:
    rows: tuple

    def row(self, term):
        for r in self.rows:
            if r.term == term:
                return r
        raise KeyError(term)

    def counts(self):
        stds = {r.term: r.std for r in self.rows}
        have_std = all(v is not None for v in stds.values())
        return CGLMPCounts(
            {t[0]: self.row(t[0]).counts for t in TERMS},
            self.row("P_max").counts,
            self.row("P_min").counts,
            stds if have_std else None,
        )


# -- phase tokens ------------------------------------------------------------

_PI_TOKEN = re.compile(r"^([+-]?)(\d+(?:\.\d+)?)?\s*\*?\s*pi(?:\s*/\s*(\d+))?$")


def parse_phase(text):
    """Radians from ``"0.5"``, ``"pi/6"``, ``"-5pi/6"`` or ``"2*pi/3"``."""
    s = text.strip().replace("π", "pi")
    m = _PI_TOKEN.match(s)
    if m:
        sign = -1 if m.group(1) == "-" else 1
        num = float(m.group(2)) if m.group(2) else 1.0
        den = int(m.group(3)) if m.group(3) else 1
        return sign * num * np.pi / den
    return float(s)


def format_phase(phi):
    """Inverse of :func:`parse_phase` for multiples of pi/12; plain repr otherwise."""
    frac = Fraction(phi / np.pi).limit_denominator(12)
    if frac == 0 and phi == 0:
        return "0"
    sign = "-" if frac < 0 else ""
    num, den = abs(frac.numerator), frac.denominator
    text = f"{sign}{'' if num == 1 else num}pi" + ("" if den == 1 else f"/{den}")
    if frac != 0 and parse_phase(text) == phi:
        return text
    return repr(float(phi))


def _display_phase(phi):
    """Like :func:`format_phase` but snaps values within 1e-12 of a pi/12 multiple."""
    snapped = round(phi / np.pi * 12) * np.pi / 12
    return format_phase(float(Fraction(snapped / np.pi).limit_denominator(12)) * np.pi
                        if abs(snapped - phi) < 1e-12 else phi)


# -- parsing -------------------------------------------------------------------

def _rows(path):
    """Yield ``(line_number, cells)`` for non-comment, non-blank lines, plus header comments."""
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    meta[key.strip()] = val.strip()
                continue
            cells = next(csv.reader([line]))
            rows.append((lineno, [c.strip() for c in cells]))
    return rows, meta


def _column_of(cells, idx):
    """1-based character column of cell ``idx`` in the joined line."""
    return sum(len(c) + 1 for c in cells[:idx]) + 1


def _check_header(path, rows, header):
    if not rows:
        raise FixtureParseError("empty fixture", path, 1)
    lineno, cells = rows[0]
    if tuple(c.lower() for c in cells) != header:
        raise FixtureParseError(f"expected header {','.join(header)}, got {','.join(cells)}", path, lineno, 1)
    body = rows[1:]
    for lineno, cells in body:
        if len(cells) != len(header):
            raise FixtureParseError(
                f"expected {len(header)} columns, got {len(cells)}", path, lineno, 1
            )
    return body


def _int_cell(path, lineno, cells, idx, allow_dash=False, nonneg=True):
    text = cells[idx]
    if allow_dash and text == DASH:
        return None
    try:
        value = int(text)
    except ValueError:
        raise FixtureParseError(f"expected integer, got {text!r}", path, lineno, _column_of(cells, idx)) from None
    if nonneg and value < 0:
        raise FixtureParseError(f"negative count {value}", path, lineno, _column_of(cells, idx))
    return value


def _float_cell(path, lineno, cells, idx, allow_dash=False, nonneg=False, phase=False):
    text = cells[idx]
    if allow_dash and text == DASH:
        return None
    try:
        value = parse_phase(text) if phase else float(text)
    except ValueError:
        raise FixtureParseError(f"expected number, got {text!r}", path, lineno, _column_of(cells, idx)) from None
    if nonneg and value < 0:
        raise FixtureParseError(f"negative value {value}", path, lineno, _column_of(cells, idx))
    return value


def _parse_table1(path):
    rows, _ = _rows(path)
    body = _check_header(path, rows, TABLE1_HEADER)
    projections = {p.label: p for p in build_projection_set()}
    out = []
    for lineno, cells in body:
        nu = _int_cell(path, lineno, cells, 0)
        if nu not in projections:
            raise FixtureParseError(f"projection index {nu} outside 1..16", path, lineno, 1)
        proj = projections[nu]
        for col, want in ((1, proj.signal_setting), (2, proj.idler_setting)):
            if cells[col] != want:
                raise FixtureParseError(
                    f"projection {nu} needs setting {want!r}, got {cells[col]!r}",
                    path, lineno, _column_of(cells, col),
                )
        values = []
        for c in range(len(PHASE_CONFIGS)):
            idx = 3 + c
            v = _int_cell(path, lineno, cells, idx, allow_dash=True)
            used = c in proj.phase_configs
            if used and v is None:
                raise FixtureParseError(
                    f"dash in required cell {TABLE1_HEADER[idx]} of projection {nu}",
                    path, lineno, _column_of(cells, idx),
                )
            if not used and v is not None:
                raise FixtureParseError(
                    f"projection {nu} does not use {TABLE1_HEADER[idx]}; expected '-'",
                    path, lineno, _column_of(cells, idx),
                )
            values.append(v)
        row = Table1Row(nu, cells[1], cells[2], tuple(values))
        total = _int_cell(path, lineno, cells, 7, allow_dash=True)
        if total is not None and total != row.total:
            raise FixtureParseError(
                f"n_nu {total} does not match the row sum {row.total}", path, lineno, _column_of(cells, 7)
            )
        out.append(row)
    labels = sorted(r.nu for r in out)
    if labels != list(range(1, len(PROJECTION_ORDER) + 1)):
        raise FixtureParseError(f"need each projection 1..16 exactly once, got {labels}", path)
    return Table1(tuple(sorted(out, key=lambda r: r.nu)))


def _parse_table2(path):
    rows, _ = _rows(path)
    body = _check_header(path, rows, TABLE2_HEADER)
    settings = {t[0]: t[2:] for t in TERMS}
    basis = CGLMPBasis()
    out = []
    for lineno, cells in body:
        term = cells[0]
        if term not in settings and term not in ("P_max", "P_min"):
            raise FixtureParseError(f"unknown term {term!r}", path, lineno, 1)
        x = _int_cell(path, lineno, cells, 1, allow_dash=True)
        y = _int_cell(path, lineno, cells, 2, allow_dash=True)
        a = _int_cell(path, lineno, cells, 3)
        b = _int_cell(path, lineno, cells, 4)
        phi_s = _float_cell(path, lineno, cells, 5, phase=True)
        phi_i = _float_cell(path, lineno, cells, 6, phase=True)
        counts = _float_cell(path, lineno, cells, 7, nonneg=True)
        std = _float_cell(path, lineno, cells, 8, allow_dash=True, nonneg=True)
        if term in settings:
            want = settings[term]
            if (x, y, a, b) != want:
                raise FixtureParseError(
                    f"term {term} has settings (x, y, a, b) = {want}, got {(x, y, a, b)}", path, lineno, 1
                )
            bp = basis_phases(basis, x, y, a, b)
            for idx, got, exp in ((5, phi_s, bp.phi_s), (6, phi_i, bp.phi_i)):
                if abs(np.angle(np.exp(1j * (got - exp)))) > 1e-9:
                    raise FixtureParseError(
                        f"phase for {term} should be {_display_phase(exp)}, got {cells[idx]}",
                        path, lineno, _column_of(cells, idx),
                    )
        out.append(Table2Row(term, x, y, a, b, phi_s, phi_i, counts, std))
    terms = [r.term for r in out]
    need = [t[0] for t in TERMS] + ["P_max", "P_min"]
    if sorted(terms) != sorted(need):
        raise FixtureParseError(f"need each of {need} exactly once, got {terms}", path)
    return Table2(tuple(out))


def _parse_coincidence(path):
    rows, meta = _rows(path)
    body = _check_header(path, rows, COINCIDENCE_HEADER)
    records = []
    for lineno, cells in body:
        s = _channel(cells[0])
        i = _channel(cells[1])
        n = _float_cell(path, lineno, cells, 2, nonneg=True)
        acc = _float_cell(path, lineno, cells, 3, nonneg=True)
        records.append(CoincidenceRecord(s, i, int(n) if float(n).is_integer() else n, acc))
    t = float(meta.get("integration_time_s", 1.0))
    return CoincidenceTable(records, t)


def _channel(text):
    try:
        return int(text)
    except ValueError:
        return text


_PARSERS = {"table1": _parse_table1, "table2": _parse_table2, "coincidence": _parse_coincidence}


def parse_fixture(path, schema):
    """Parse ``path`` as ``schema`` (``"table1"``, ``"table2"`` or ``"coincidence"``)."""
    if schema not in _PARSERS:
        raise ValueError(f"unknown fixture schema {schema!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return _PARSERS[schema](path)


# -- writing -------------------------------------------------------------------

def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"could not write {path}: {exc}") from exc


def _csv_text(header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    if v is None:
        return DASH
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def format_fixture(table):
    """Delimited text for a :class:`Table1`, :class:`Table2` or :class:`CoincidenceTable`."""
    if isinstance(table, Table1):
        rows = [[r.nu, r.signal, r.idler, *[_num(c) for c in r.cells], r.total] for r in table.rows]
        return _csv_text(TABLE1_HEADER, rows)
    if isinstance(table, Table2):
        rows = [
            [r.term, _num(r.x), _num(r.y), r.a, r.b, format_phase(r.phi_s), format_phase(r.phi_i),
             _num(r.counts), _num(r.std)]
            for r in table.rows
        ]
        return _csv_text(TABLE2_HEADER, rows)
    if isinstance(table, CoincidenceTable):
        rows = [[r.signal_channel, r.idler_channel, _num(r.counts), _num(r.accidentals)] for r in table.records]
        return _csv_text(COINCIDENCE_HEADER, rows, [f"integration_time_s: {_num(table.integration_time)}"])
    raise TypeError(f"cannot format {type(table).__name__}")


def write_fixture(table, path):
    atomic_write_text(path, format_fixture(table))


def format_matrix(m):
    """One ``row col real imag`` line per entry, 17 significant digits."""
    m = np.asarray(m, dtype=complex)
    lines = [f"# complex matrix {m.shape[0]} x {m.shape[1]}: row col real imag"]
    for r in range(m.shape[0]):
        for c in range(m.shape[1]):
            z = m[r, c]
            lines.append(f"{r} {c} {z.real:.17g} {z.imag:.17g}")
    return "\n".join(lines) + "\n"


def write_matrix(m, path):
    atomic_write_text(path, format_matrix(m))


def read_matrix(path):
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 4:
                raise FixtureParseError("expected 'row col real imag'", path, lineno, 1)
            try:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2]) + 1j * float(parts[3])))
            except ValueError as exc:
                raise FixtureParseError(str(exc), path, lineno, 1) from None
    if not entries:
        raise FixtureParseError("no matrix entries", path)
    nr = max(e[0] for e in entries) + 1
    nc = max(e[1] for e in entries) + 1
    m = np.zeros((nr, nc), dtype=complex)
    for r, c, z in entries:
        m[r, c] = z
    return m
