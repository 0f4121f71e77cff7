"""Report records and their CSV, JSON and SVG renderings.

CSV carries only the result rows, so reruns with the same seed are
byte-identical; run provenance (wall time, version, config digest) lives
in the JSON record.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence
import csv
import io
import json
import logging
import math
import os

from cryptography.hazmat.primitives import hashes

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_FLOAT_FORMAT = ".17g"

SVG_WIDTH = 640
SVG_HEIGHT = 420
SVG_MARGIN = 56
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


@dataclass
class ReportRecord:
    experiment: str
    config: dict
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "config": self.config,
            "columns": self.columns,
            "rows": self.rows,
            "summary": self.summary,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        """Strict JSON; non-finite floats are written as "nan", "inf" or "-inf"."""
        return json.dumps(_encode_floats(self.to_dict()), indent=2, sort_keys=False, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ReportRecord:
        data = _decode_floats(json.loads(text))
        if "schema_version" not in data:
            raise ValueError("report is missing schema_version")
        return cls(
            experiment=data["experiment"],
            config=data["config"],
            columns=data["columns"],
            rows=data["rows"],
            summary=data.get("summary", {}),
            provenance=data.get("provenance", {}),
            schema_version=data["schema_version"],
        )


NON_FINITE = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}


def _encode_floats(value):
    if isinstance(value, float) and not math.isfinite(value):
        return format_cell(value)
    if isinstance(value, dict):
        return {k: _encode_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode_floats(v) for v in value]
    return value


def _decode_floats(value):
    if isinstance(value, str) and value in NON_FINITE:
        return NON_FINITE[value]
    if isinstance(value, dict):
        return {k: _decode_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode_floats(v) for v in value]
    return value


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a config echo."""
    digest = hashes.Hash(hashes.SHA256())
    digest.update(json.dumps(config, sort_keys=True).encode("utf-8"))
    return digest.finalize().hex()


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, CSV_FLOAT_FORMAT)
    return str(value)


def to_csv(record: ReportRecord) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(record.columns)
    for row in record.rows:
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


# --- SVG ----------------------------------------------------------------------


@dataclass(frozen=True)
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]


def _transform(values: Sequence[float], log: bool) -> list[float]:
    if log:
        return [math.log10(v) if v > 0 else math.nan for v in values]
    return [float(v) for v in values]


def render_svg(
    title: str,
    series: Sequence[Series],
    *,
    x_label: str = "",
    y_label: str = "",
    log_x: bool = False,
    log_y: bool = False,
) -> str:
    """Line plot as SVG text: one polyline per series with a framed axis box."""
    transformed = [
        (s.label, _transform(s.xs, log_x), _transform(s.ys, log_y)) for s in series
    ]
    xs = [x for _, sx, sy in transformed for x, y in zip(sx, sy) if math.isfinite(x) and math.isfinite(y)]
    ys = [y for _, sx, sy in transformed for x, y in zip(sx, sy) if math.isfinite(x) and math.isfinite(y)]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = SVG_WIDTH - 2 * SVG_MARGIN
    plot_h = SVG_HEIGHT - 2 * SVG_MARGIN

    def px(x: float) -> float:
        return SVG_MARGIN + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return SVG_HEIGHT - SVG_MARGIN - (y - y_lo) / (y_hi - y_lo) * plot_h

    def tick(v: float, log: bool) -> str:
        return f"1e{v:.3g}" if log else f"{v:.4g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}">',
        f'<rect x="{SVG_MARGIN}" y="{SVG_MARGIN}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
        f'<text x="{SVG_WIDTH / 2}" y="{SVG_MARGIN / 2}" text-anchor="middle">{_escape(title)}</text>',
        f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT - 12}" text-anchor="middle">{_escape(x_label)}</text>',
        f'<text x="14" y="{SVG_HEIGHT / 2}" transform="rotate(-90 14 {SVG_HEIGHT / 2})" '
        f'text-anchor="middle">{_escape(y_label)}</text>',
        f'<text x="{SVG_MARGIN}" y="{SVG_HEIGHT - SVG_MARGIN + 16}">{tick(x_lo, log_x)}</text>',
        f'<text x="{SVG_WIDTH - SVG_MARGIN}" y="{SVG_HEIGHT - SVG_MARGIN + 16}" '
        f'text-anchor="end">{tick(x_hi, log_x)}</text>',
        f'<text x="{SVG_MARGIN - 4}" y="{SVG_HEIGHT - SVG_MARGIN}" text-anchor="end">{tick(y_lo, log_y)}</text>',
        f'<text x="{SVG_MARGIN - 4}" y="{SVG_MARGIN + 10}" text-anchor="end">{tick(y_hi, log_y)}</text>',
    ]
    for i, (label, sx, sy) in enumerate(transformed):
        color = SVG_COLORS[i % len(SVG_COLORS)]
        points = " ".join(
            f"{px(x):.2f},{py(y):.2f}"
            for x, y in zip(sx, sy)
            if math.isfinite(x) and math.isfinite(y)
        )
        parts.append(f'<polyline fill="none" stroke="{color}" points="{points}"/>')
        parts.append(
            f'<text x="{SVG_WIDTH - SVG_MARGIN - 4}" y="{SVG_MARGIN + 16 * (i + 1)}" '
            f'text-anchor="end" fill="{color}">{_escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# --- Writing ------------------------------------------------------------------


@contextmanager
def artifact_writer(out_dir: Path) -> Iterator[Callable[[str, str], Path]]:
    """Yield `write(name, text)`; files land under temporary names and are
    renamed on success. On any failure every written file is removed."""
    out_dir.mkdir(parents=True, exist_ok=True)
    pending: list[tuple[Path, Path]] = []

    def write(name: str, text: str) -> Path:
        final = out_dir / name
        temp = out_dir / f".{name}.tmp"
        with open(temp, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        pending.append((temp, final))
        return final

    committed: list[Path] = []
    try:
        yield write
        for temp, final in pending:
            os.replace(temp, final)
            committed.append(final)
    except BaseException:
        for temp, final in pending:
            temp.unlink(missing_ok=True)
        for final in committed:
            final.unlink(missing_ok=True)
        logger.warning("run failed: partial outputs removed from %s", out_dir)
        raise


def write_report(
    out_dir: Path,
    record: ReportRecord,
    *,
    svg: str | None = None,
) -> list[Path]:
    name = record.experiment
    with artifact_writer(out_dir) as write:
        paths = [write(f"{name}.csv", to_csv(record)), write(f"{name}.json", record.to_json())]
        if svg is not None:
            paths.append(write(f"{name}.svg", svg))
    logger.info("report written: dir=%s files=%d", out_dir, len(paths))
    return paths
