"""File formats: CSV ingestion, matrix/model/report serialization.

All writers are atomic (write to a temp file in the target directory,
then rename) and deterministic: floats are emitted with round-trippable
precision and no timestamps or environment details leak into outputs.
Readers report malformed rows with file name and line number.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .errors import InputError
from .factorize import FactorModel, Hyperparams, LossTrace
from .gravity import GravityParams, TripRecord
from .grid import GeoPoint, RegionGrid
from .patterns import BrowsingRecord, CheckinRecord

FLOAT_FMT = "%.17g"


@contextmanager
def atomic_write(path):
    """Yield a text handle whose contents replace ``path`` on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


def _read_rows(path, expected_header):
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}:1: empty file") from None
        if [h.strip() for h in header] != list(expected_header):
            raise InputError(
                f"{path}:1: expected header {','.join(expected_header)!r}, "
                f"got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise InputError(
                    f"{path}:{lineno}: expected {len(expected_header)} fields, got {len(row)}"
                )
            yield lineno, row


def _parse(path, lineno, value, kind, caster):
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}:{lineno}: bad {kind} value {value!r}") from exc


# ---------------------------------------------------------------- event CSVs

BROWSING_HEADER = ("location_id", "product_category_id")
TOWERS_HEADER = ("location_id", "lat", "lon")
CHECKINS_HEADER = ("user_id", "poi_category_id", "lat", "lon", "timestamp")
TRIPS_HEADER = ("mode", "origin_lat", "origin_lon", "dest_lat", "dest_lon")


def read_browsing(path) -> list[BrowsingRecord]:
    records = []
    for lineno, row in _read_rows(path, BROWSING_HEADER):
        cat = _parse(path, lineno, row[1], "category id", int)
        records.append(BrowsingRecord(row[0], cat))
    return records


def write_browsing(path, records):
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(BROWSING_HEADER)
        for rec in records:
            w.writerow([rec.location_id, rec.product_category_id])


def read_towers(path) -> dict[str, GeoPoint]:
    towers = {}
    for lineno, row in _read_rows(path, TOWERS_HEADER):
        lat = _parse(path, lineno, row[1], "latitude", float)
        lon = _parse(path, lineno, row[2], "longitude", float)
        try:
            towers[row[0]] = GeoPoint(lat, lon)
        except InputError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return towers


def write_towers(path, towers: dict):
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(TOWERS_HEADER)
        for key, point in towers.items():
            w.writerow([key, _fmt(point.lat), _fmt(point.lon)])


def read_checkins(path) -> list[CheckinRecord]:
    records = []
    for lineno, row in _read_rows(path, CHECKINS_HEADER):
        cat = _parse(path, lineno, row[1], "category id", int)
        lat = _parse(path, lineno, row[2], "latitude", float)
        lon = _parse(path, lineno, row[3], "longitude", float)
        ts = _parse(path, lineno, row[4], "timestamp", float)
        try:
            point = GeoPoint(lat, lon)
        except InputError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        records.append(CheckinRecord(row[0], cat, point, ts))
    return records


def write_checkins(path, records):
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(CHECKINS_HEADER)
        for rec in records:
            w.writerow([rec.user_id, rec.poi_category_id,
                        _fmt(rec.point.lat), _fmt(rec.point.lon), _fmt(rec.timestamp)])


def read_trips(path) -> list[TripRecord]:
    records = []
    for lineno, row in _read_rows(path, TRIPS_HEADER):
        coords = [_parse(path, lineno, v, "coordinate", float) for v in row[1:]]
        try:
            records.append(TripRecord(row[0], GeoPoint(coords[0], coords[1]),
                                      GeoPoint(coords[2], coords[3])))
        except InputError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_trips(path, trips):
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(TRIPS_HEADER)
        for t in trips:
            w.writerow([t.mode, _fmt(t.origin.lat), _fmt(t.origin.lon),
                        _fmt(t.destination.lat), _fmt(t.destination.lon)])


# ------------------------------------------------------------------ matrices

def write_matrix(path, values, col_prefix="c"):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow([f"{col_prefix}{j}" for j in range(values.shape[1])])
        for row in values:
            w.writerow([_fmt(v) for v in row])


def read_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}:1: empty file") from None
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise InputError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            rows.append([_parse(path, lineno, v, "numeric", float) for v in row])
    return np.array(rows) if rows else np.zeros((0, width))


# ------------------------------------------------------------ JSON documents

def _dump_json(path, doc):
    with atomic_write(path) as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def write_gravity_params(path, params: GravityParams):
    _dump_json(path, {
        "a": params.a, "b": params.b, "g": params.g, "ln_c": params.ln_c,
        "mode": params.mode, "n_pairs_used": params.n_pairs_used,
    })


def read_gravity_params(path) -> GravityParams:
    doc = _load_json(path)
    try:
        return GravityParams(a=doc["a"], b=doc["b"], g=doc["g"], ln_c=doc["ln_c"],
                             mode=doc["mode"], n_pairs_used=doc.get("n_pairs_used"))
    except KeyError as exc:
        raise InputError(f"{path}: missing key {exc.args[0]!r}") from exc


def write_model(path, model: FactorModel, h: Hyperparams, final_loss: float):
    _dump_json(path, {
        "dims": model.dims,
        "R_l": [list(map(float, row)) for row in model.R_l],
        "V1": [list(map(float, row)) for row in model.V1],
        "V2": [list(map(float, row)) for row in model.V2],
        "scale_s": model.scale_s,
        "scale_m": model.scale_m,
        "variant": model.variant,
        "hyperparams": {
            "l": h.l, "lambda1": h.lambda1, "lambda2": h.lambda2, "alpha": h.alpha,
            "max_iters": h.max_iters, "epsilon": h.epsilon, "seed": h.seed,
        },
        "final_loss": final_loss,
    })


def read_model(path):
    doc = _load_json(path)
    try:
        model = FactorModel(
            R_l=np.array(doc["R_l"], dtype=np.float64).reshape(doc["dims"]["r"], doc["dims"]["l"]),
            V1=np.array(doc["V1"], dtype=np.float64).reshape(doc["dims"]["n"], doc["dims"]["l"]),
            V2=np.array(doc["V2"], dtype=np.float64).reshape(doc["dims"]["m"], doc["dims"]["l"]),
            scale_s=doc["scale_s"], scale_m=doc["scale_m"], variant=doc.get("variant"),
        )
        hp = doc["hyperparams"]
        h = Hyperparams(l=hp["l"], lambda1=hp["lambda1"], lambda2=hp["lambda2"],
                        alpha=hp["alpha"], max_iters=hp["max_iters"],
                        epsilon=hp["epsilon"], seed=hp["seed"])
    except KeyError as exc:
        raise InputError(f"{path}: missing key {exc.args[0]!r}") from exc
    return model, h, doc.get("final_loss")


def write_trace(path, trace: LossTrace):
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(["iter", "loss", "gamma"])
        for it, loss, gamma in zip(trace.iterations, trace.losses, trace.gammas):
            w.writerow([it, _fmt(loss), _fmt(gamma)])


# ------------------------------------------------------------------ heatmaps

def write_heatmap(path, values, g: RegionGrid):
    """Per-region values as ``row,col,center_lat,center_lon,value`` rows.

    Planar grids emit kilometer offsets in the center columns.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (g.n_regions,):
        raise InputError(f"heatmap needs {g.n_regions} values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InputError("heatmap values must be finite")
    centers = g.cell_centers()
    with atomic_write(path) as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "center_lat", "center_lon", "value"])
        for i in range(g.n_regions):
            row, col = g.row_col(i)
            w.writerow([row, col, _fmt(centers[i, 0]), _fmt(centers[i, 1]),
                        _fmt(values[i])])


def write_heatmap_pgm(path, values, g: RegionGrid):
    """Portable graymap (P2) of a heatmap, min-max scaled to 0..255.

    The top image row is the grid's northernmost row.
    """
    values = np.asarray(values, dtype=np.float64).reshape(g.n_rows, g.n_cols)
    lo, hi = values.min(), values.max()
    scaled = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    pixels = np.rint(scaled * 255).astype(int)
    with atomic_write(path) as f:
        f.write(f"P2\n{g.n_cols} {g.n_rows}\n255\n")
        for row in range(g.n_rows - 1, -1, -1):
            f.write(" ".join(str(v) for v in pixels[row]) + "\n")


# ------------------------------------------------------------------- reports

def report_to_dict(report) -> dict:
    results = []
    for variant in report.variants:
        for fraction in report.fractions:
            cell = report.cells[variant][fraction]
            results.append({
                "variant": variant,
                "fraction": fraction,
                "rmse_runs": cell["rmse"],
                "mae_runs": cell["mae"],
                "rmse_mean": cell["rmse_mean"],
                "mae_mean": cell["mae_mean"],
            })
    return {
        "variants": list(report.variants),
        "fractions": list(report.fractions),
        "repeats": report.repeats,
        "seed": report.seed,
        "results": results,
        "improvements": {
            _fmt(fraction): report.improvements[fraction] for fraction in report.fractions
        },
    }


def write_report(path, report):
    _dump_json(path, report_to_dict(report))


def format_report_table(report) -> str:
    """Aligned text table: variants as rows, RMSE/MAE per training fraction,
    improvement lines between successive variants, and a total line."""
    headers = ["model"]
    for fraction in report.fractions:
        pct = f"{fraction * 100:g}%"
        headers += [f"rmse@{pct}", f"mae@{pct}"]
    rows = [headers]
    for vi, variant in enumerate(report.variants):
        row = [variant]
        for fraction in report.fractions:
            row += [f"{report.mean(variant, fraction, 'rmse'):.4f}",
                    f"{report.mean(variant, fraction, 'mae'):.4f}"]
        rows.append(row)
        if vi > 0:
            imp = ["improve"]
            for fraction in report.fractions:
                step = report.improvements[fraction][vi - 1]
                imp += [f"{step['rmse_pct']:+.2f}%", f"{step['mae_pct']:+.2f}%"]
            rows.append(imp)
    if len(report.variants) > 1:
        total = ["total"]
        for fraction in report.fractions:
            step = report.improvements[fraction][-1]
            total += [f"{step['rmse_pct']:+.2f}%", f"{step['mae_pct']:+.2f}%"]
        rows.append(total)
    widths = [max(len(r[c]) for r in rows) for c in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"
