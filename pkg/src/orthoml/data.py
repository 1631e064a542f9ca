"""Role-typed rectangular dataset: outcome, treatment(s), covariates and
an optional instrument, validated once and immutable afterwards."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


def _as_column(name: str, values) -> np.ndarray:
    col = np.asarray(values, dtype=np.float64).reshape(-1)
    bad = ~np.isfinite(col)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"column '{name}' contains a non-finite value at row {row + 1}"
        )
    return col


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class DmlData:
    """Estimation data with explicit column roles.

    All role blocks are stored column-major in double precision (learner
    fits consume whole columns) and are read-only after construction, so
    a dataset can be shared across parallel fold fits.

    Attributes
    ----------
    y : (n,) outcome vector.
    d : (n, p_d) treatment matrix.
    x : (n, p_x) covariate matrix.
    z : (n, p_z) instrument matrix, or None.
    """

    def __init__(self, y, d, x, z=None, *, y_col="y", d_cols=None,
                 x_cols=None, z_cols=None):
        y = _as_column(y_col, y)
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        if d.shape[0] == 1 and d.shape[1] == y.shape[0] and y.shape[0] > 1:
            d = d.T
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[0] == 1 and x.shape[1] == y.shape[0] and y.shape[0] > 1:
            x = x.T
        if z is not None:
            z = np.atleast_2d(np.asarray(z, dtype=np.float64))
            if z.shape[0] == 1 and z.shape[1] == y.shape[0] and y.shape[0] > 1:
                z = z.T

        n = y.shape[0]
        if n < 2:
            raise ValidationError(f"need at least 2 observations, got {n}")
        if d.shape[1] < 1:
            raise ValidationError("need at least one treatment column")
        if x.shape[1] < 1:
            raise ValidationError("need at least one covariate column")

        d_cols = tuple(d_cols) if d_cols is not None else tuple(
            f"d{j + 1}" for j in range(d.shape[1])) if d.shape[1] > 1 else ("d",)
        x_cols = tuple(x_cols) if x_cols is not None else tuple(
            f"x{j + 1}" for j in range(x.shape[1]))
        z_cols = (tuple(z_cols) if z_cols is not None else tuple(
            f"z{j + 1}" for j in range(z.shape[1]))) if z is not None else ()

        self._check_roles(y_col, d_cols, x_cols, z_cols)

        for block, names in ((d, d_cols), (x, x_cols)) + (((z, z_cols),) if z is not None else ()):
            if block.shape[0] != n:
                raise ValidationError(
                    f"columns {list(names)} have {block.shape[0]} rows, expected {n}")
            if block.shape[1] != len(names):
                raise ValidationError(
                    f"{len(names)} labels given for a block of width {block.shape[1]}")
            for j, name in enumerate(names):
                _as_column(name, block[:, j])

        self.y = _freeze(np.ascontiguousarray(y))
        self.d = _freeze(np.asfortranarray(d))
        self.x = _freeze(np.asfortranarray(x))
        self.z = _freeze(np.asfortranarray(z)) if z is not None else None
        self.y_col = y_col
        self.d_cols = d_cols
        self.x_cols = x_cols
        self.z_cols = z_cols

    @staticmethod
    def _check_roles(y_col, d_cols, x_cols, z_cols):
        all_names = [y_col, *d_cols, *x_cols, *z_cols]
        seen = {}
        for name in all_names:
            if name in seen:
                raise ValidationError(f"column '{name}' is assigned to more than one role")
            seen[name] = True

    # -- construction -------------------------------------------------

    @classmethod
    def from_columns(cls, table: Mapping[str, Sequence[float]], y_col: str,
                     d_cols, x_cols=None, z_cols=None) -> "DmlData":
        """Build a dataset from a mapping of column name -> values.

        When ``x_cols`` is omitted, every column not claimed by another
        role becomes a covariate, in table order.
        """
        if isinstance(d_cols, str):
            d_cols = [d_cols]
        d_cols = list(d_cols)
        z_cols = [z_cols] if isinstance(z_cols, str) else (
            list(z_cols) if z_cols is not None else None)

        for name in [y_col, *d_cols, *(x_cols or []), *(z_cols or [])]:
            if name not in table:
                raise ValidationError(f"unknown column '{name}'")

        if x_cols is None:
            claimed = {y_col, *d_cols, *(z_cols or [])}
            x_cols = [c for c in table if c not in claimed]
            if not x_cols:
                raise ValidationError("no columns left to use as covariates")
        else:
            x_cols = list(x_cols)

        y = _as_column(y_col, table[y_col])
        n = y.shape[0]

        def block(names):
            cols = []
            for name in names:
                col = _as_column(name, table[name])
                if col.shape[0] != n:
                    raise ValidationError(
                        f"column '{name}' has {col.shape[0]} rows, expected {n}")
                cols.append(col)
            return np.column_stack(cols)

        z = block(z_cols) if z_cols else None
        return cls(y, block(d_cols), block(x_cols), z,
                   y_col=y_col, d_cols=d_cols, x_cols=x_cols, z_cols=z_cols)

    @classmethod
    def from_csv(cls, path, y_col: str, d_cols, x_cols=None,
                 z_cols=None) -> "DmlData":
        """Read a headered CSV of decimal numbers (period separator) and
        delegate to :meth:`from_columns`.

        Parse failures report the 1-based data row and the column name.
        """
        table = read_csv_columns(path)
        return cls.from_columns(table, y_col, d_cols, x_cols, z_cols)

    # -- properties ----------------------------------------------------

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p_d(self) -> int:
        return self.d.shape[1]

    @property
    def p_x(self) -> int:
        return self.x.shape[1]

    @property
    def column_names(self):
        return (self.y_col, *self.d_cols, *self.x_cols, *self.z_cols)

    def __repr__(self):
        zpart = f", p_z={self.z.shape[1]}" if self.z is not None else ""
        return f"DmlData(n={self.n}, p_d={self.p_d}, p_x={self.p_x}{zpart})"

    # -- export --------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write all role blocks to CSV with shortest round-trip float
        formatting, so a read-back reproduces the matrices bit for bit."""
        blocks = [self.y[:, None], self.d, self.x]
        if self.z is not None:
            blocks.append(self.z)
        full = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.column_names) + "\n")
            for row in full:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv_columns(path) -> dict:
    """Parse a headered numeric CSV into an ordered name -> array mapping."""
    with open(path, "r", newline="") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValidationError(f"{path}: empty file or missing header row")
        names = [c.strip() for c in header_line.rstrip("\n").rstrip("\r").split(",")]
        columns = {name: [] for name in names}
        if len(columns) != len(names):
            raise ValidationError(f"{path}: duplicate column names in header")
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cells = line.rstrip("\n").rstrip("\r").split(",")
            if len(cells) != len(names):
                raise ValidationError(
                    f"{path}: row {i} has {len(cells)} cells, expected {len(names)}")
            for name, cell in zip(names, cells):
                try:
                    columns[name].append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: cannot parse {cell!r} as a number at "
                        f"row {i}, column {name}") from None
    if not columns or any(len(v) == 0 for v in columns.values()):
        raise ValidationError(f"{path}: no data rows")
    return {name: np.asarray(vals, dtype=np.float64) for name, vals in columns.items()}


def check_binary_treatment(data: DmlData) -> np.ndarray:
    """True per treatment column iff every entry is exactly 0.0 or 1.0."""
    d = data.d
    return np.array([np.all((d[:, j] == 0.0) | (d[:, j] == 1.0))
                     for j in range(d.shape[1])], dtype=bool)
