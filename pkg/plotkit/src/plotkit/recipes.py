"""Figure recipes and CSV loading against the documented bundle schema.

plotkit never recomputes physics: a figure is a pure function of the CSV
bodies (plus the optional metadata sidecar used for the caption box).
Rows are sorted on the x column internally, so shuffled CSVs render
identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FIGURES = ("fig2", "fig2-inset", "fig3", "fig4")

#: required columns per figure family
SCHEMAS = {
    "fig2": ("time_us", "P_D"),
    "fig2-inset": ("V_rs_MHz", "P_D_tau", "purity_tau"),
    "fig3": ("time_us", "P_D"),
    "fig4": ("separation_um", "V_rs_MHz", "P_D_tau"),
}


class SchemaError(ValueError):
    """A CSV does not match the documented bundle schema."""


@dataclass(eq=False)
class FigureRecipe:
    figure: str
    input_dir: Path
    out: Path

    def __post_init__(self) -> None:
        if self.figure not in FIGURES:
            raise SchemaError(f"unknown figure id {self.figure!r} (known: {', '.join(FIGURES)})")
        self.input_dir = Path(self.input_dir)
        self.out = Path(self.out)


@dataclass(eq=False)
class Series:
    name: str
    columns: dict    # column name -> float array, sorted on the x column


def load_csv(path: Path, required: tuple, sort_by: str) -> Series:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: empty file") from None
        rows = [row for row in reader if row]
    missing = [col for col in required if col not in header]
    if missing:
        raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)} "
                          f"(header: {', '.join(header)})")
    if not rows:
        raise SchemaError(f"{path.name}: no data rows")
    try:
        data = np.array([[float(x) for x in row] for row in rows])
    except ValueError as exc:
        raise SchemaError(f"{path.name}: non-numeric cell ({exc})") from None
    if data.shape[1] != len(header):
        raise SchemaError(f"{path.name}: ragged rows")
    order = np.argsort(data[:, header.index(sort_by)], kind="stable")
    data = data[order]
    return Series(name=path.stem, columns={col: data[:, i] for i, col in enumerate(header)})


def load_meta(input_dir: Path, prefix: str) -> dict:
    path = input_dir / f"{prefix}_meta.txt"
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def collect(recipe: FigureRecipe) -> tuple[dict, dict]:
    """Load every series a figure needs; a missing series is an error."""
    directory = recipe.input_dir
    required = SCHEMAS[recipe.figure]
    sort_by = required[0] if recipe.figure in ("fig2", "fig3") else "V_rs_MHz"

    if recipe.figure == "fig2":
        n_files = sorted(directory.glob("fig2_N*.csv"),
                         key=lambda p: int(p.stem.split("N")[-1]))
        overlay = directory / "fig2_sqrt10.csv"
        if not n_files:
            raise SchemaError(f"{directory}: no fig2_N*.csv series found")
        if not overlay.exists():
            raise SchemaError(f"{directory}: missing the fig2_sqrt10.csv overlay series")
        series = {p.stem: load_csv(p, required, sort_by) for p in n_files}
        series["fig2_sqrt10"] = load_csv(overlay, required, sort_by)
        return series, load_meta(directory, "fig2")

    if recipe.figure == "fig2-inset":
        path = directory / "fig2_inset_inset.csv"
        if not path.exists():
            raise SchemaError(f"{directory}: missing fig2_inset_inset.csv")
        return {path.stem: load_csv(path, required, sort_by)}, load_meta(directory, "fig2_inset")

    if recipe.figure == "fig3":
        files = sorted(directory.glob("fig3_w*.csv"))
        if not files:
            raise SchemaError(f"{directory}: no fig3_w*.csv series found")
        return ({p.stem: load_csv(p, required, sort_by) for p in files},
                load_meta(directory, "fig3"))

    files = sorted(directory.glob("fig4_sep*um.csv"))
    if len(files) < 2:
        raise SchemaError(f"{directory}: fig4 needs both separation series, found "
                          f"{[p.name for p in files]}")
    return ({p.stem: load_csv(p, required, sort_by) for p in files},
            load_meta(directory, "fig4"))
