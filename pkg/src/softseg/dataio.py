"""File formats, dataset manifests, and report serialization.

Rasters travel in two formats:

* ``SSEG`` float rasters: magic "SSEG", u32 LE width, height, channels,
  then width*height*channels float32 LE values, row-major and
  channel-interleaved. Used for input images, fused soft labels, and
  variance maps.
* binary P5 PGM, maxval 255, for annotator masks: 0 is background, 255 is
  foreground; any other gray value is rejected.

A dataset manifest is a JSON document listing, per case, the image raster
and N annotation masks, plus a train/val split tag. All paths inside a
manifest are relative to the manifest's directory, so a generated dataset
is relocatable and byte-reproducible.

Every writer goes through an atomic temp-file-plus-rename, so a crashed
run never leaves a parseable partial file behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .masks import AnnotationSet, BinaryMask
from .metrics import METRIC_NAMES, GedReport, MetricRow, summarize_rows

SSEG_MAGIC = b"SSEG"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write `data` to `path` via a temp file + rename in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# SSEG float rasters


def write_raster(path, values: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) float raster as an SSEG file."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise ValueError(f"raster must be (H, W) or (H, W, C), got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("raster values must be finite")
    h, w, c = values.shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"raster dims must be >= 1, got {values.shape}")
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    header = SSEG_MAGIC + struct.pack("<III", w, h, c)
    atomic_write_bytes(path, header + payload)


def read_raster(path) -> np.ndarray:
    """Read an SSEG file into a float32 array, (H, W) if single-channel."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16:
        raise ValueError(
            f"truncated SSEG header in {path}: expected 16 bytes, file has {len(data)}"
        )
    if data[:4] != SSEG_MAGIC:
        raise ValueError(f"bad magic in {path}: expected {SSEG_MAGIC!r} at byte 0")
    w, h, c = struct.unpack("<III", data[4:16])
    if w < 1 or h < 1 or c < 1:
        raise ValueError(f"invalid SSEG dims {w}x{h}x{c} in {path}")
    expected = 16 + 4 * w * h * c
    if len(data) != expected:
        raise ValueError(
            f"truncated SSEG payload in {path}: expected {expected} bytes "
            f"({w}x{h}x{c} float32 after the 16-byte header), file has {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, c)
    if not np.isfinite(values).all():
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"non-finite value in {path} at payload index {bad} (byte {16 + 4 * bad})")
    values = values.astype(np.float32)
    return values[:, :, 0] if c == 1 else values


def read_raster_header(path) -> tuple[int, int, int]:
    """(width, height, channels) of an SSEG file without reading the payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(16)
    if len(head) < 16 or head[:4] != SSEG_MAGIC:
        raise ValueError(f"{path} is not an SSEG raster")
    return struct.unpack("<III", head[4:16])


# ---------------------------------------------------------------------------
# PGM annotator masks


def write_pgm(path, mask: BinaryMask) -> None:
    """Write a binary mask as P5 PGM with foreground 255, background 0."""
    payload = (mask.values * np.uint8(255)).tobytes()
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode()
    atomic_write_bytes(path, header + payload)


def _parse_pgm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Parse the P5 header; returns (width, height, maxval, payload offset)."""
    if data[:2] != b"P5":
        raise ValueError(f"{path} is not a binary P5 PGM (magic {data[:2]!r})")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError(f"truncated PGM header in {path}")
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise ValueError(f"unexpected byte {ch!r} in PGM header of {path}")
    # exactly one whitespace byte separates the maxval from the payload
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ValueError(f"missing whitespace after maxval in {path}")
    return fields[0], fields[1], fields[2], pos + 1


def read_pgm(path) -> BinaryMask:
    """Read a strictly binary P5 PGM (values 0 or 255 only) as a BinaryMask."""
    path = Path(path)
    data = path.read_bytes()
    width, height, maxval, offset = _parse_pgm_header(data, path)
    if maxval != 255:
        raise ValueError(f"{path} has maxval {maxval}, expected 255")
    expected = offset + width * height
    if len(data) != expected:
        raise ValueError(
            f"truncated PGM payload in {path}: expected {expected} bytes, "
            f"file has {len(data)}"
        )
    raw = np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(height, width)
    gray = ~np.isin(raw, (0, 255))
    if gray.any():
        y, x = np.argwhere(gray)[0]
        raise ValueError(
            f"non-binary value {int(raw[y, x])} at pixel ({int(x)}, {int(y)}) in {path}; "
            f"annotator masks must be 0 or 255"
        )
    return BinaryMask((raw == 255).astype(np.uint8))


def read_pgm_header(path) -> tuple[int, int]:
    """(width, height) of a PGM file without reading the payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(256)
    width, height, _, _ = _parse_pgm_header(head, path)
    return width, height


# ---------------------------------------------------------------------------
# Dataset manifests


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    image: str
    annotations: tuple[str, ...]
    split: str  # "train" | "val"


@dataclass(frozen=True)
class Manifest:
    path: Path
    cases: tuple[CaseRecord, ...]
    meta: dict

    @property
    def root(self) -> Path:
        return self.path.parent

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def split(self, which: str) -> tuple[CaseRecord, ...]:
        if which == "all":
            return self.cases
        return tuple(c for c in self.cases if c.split == which)


def write_manifest(path, cases: Sequence[CaseRecord], meta: dict) -> None:
    doc = dict(meta)
    doc["cases"] = [
        {
            "id": c.case_id,
            "image": c.image,
            "annotations": list(c.annotations),
            "split": c.split,
        }
        for c in cases
    ]
    atomic_write_bytes(path, (json.dumps(doc, indent=2) + "\n").encode())


def load_manifest(path, validate: bool = True) -> Manifest:
    """Load a manifest; with `validate`, check files exist and dims agree."""
    path = Path(path)
    if not path.exists():
        raise ValueError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    raw_cases = doc.pop("cases", None)
    if not isinstance(raw_cases, list) or len(raw_cases) == 0:
        raise ValueError(f"manifest {path} lists no cases")
    cases = []
    for entry in raw_cases:
        record = CaseRecord(
            case_id=str(entry["id"]),
            image=str(entry["image"]),
            annotations=tuple(str(a) for a in entry["annotations"]),
            split=str(entry.get("split", "train")),
        )
        if len(record.annotations) == 0:
            raise ValueError(f"case {record.case_id}: no annotations listed")
        if record.split not in ("train", "val"):
            raise ValueError(f"case {record.case_id}: unknown split {record.split!r}")
        cases.append(record)
    manifest = Manifest(path=path, cases=tuple(cases), meta=doc)
    if validate:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: Manifest) -> None:
    """Reject missing files and annotations whose dims differ from the image."""
    for case in manifest.cases:
        image_path = manifest.resolve(case.image)
        if not image_path.exists():
            raise ValueError(f"case {case.case_id}: image file missing: {image_path}")
        w, h, _ = read_raster_header(image_path)
        for rel in case.annotations:
            ann_path = manifest.resolve(rel)
            if not ann_path.exists():
                raise ValueError(f"case {case.case_id}: annotation file missing: {ann_path}")
            aw, ah = read_pgm_header(ann_path)
            if (aw, ah) != (w, h):
                raise ValueError(
                    f"case {case.case_id}: annotation {rel} is {aw}x{ah}, "
                    f"image is {w}x{h}"
                )


def load_case(manifest: Manifest, case: CaseRecord) -> tuple[np.ndarray, AnnotationSet]:
    """Load one case's image (H, W) float64 and its annotation set."""
    image_path = manifest.resolve(case.image)
    if not image_path.exists():
        raise ValueError(f"case {case.case_id}: image file missing: {image_path}")
    image = read_raster(image_path).astype(np.float64)
    if image.ndim != 2:
        raise ValueError(f"case {case.case_id}: expected a single-channel image raster")
    masks = []
    for rel in case.annotations:
        ann_path = manifest.resolve(rel)
        if not ann_path.exists():
            raise ValueError(f"case {case.case_id}: annotation file missing: {ann_path}")
        mask = read_pgm(ann_path)
        if mask.shape != image.shape:
            raise ValueError(
                f"case {case.case_id}: annotation {rel} is {mask.shape[1]}x{mask.shape[0]}, "
                f"image is {image.shape[1]}x{image.shape[0]}"
            )
        masks.append(mask)
    return image, AnnotationSet(masks)


# ---------------------------------------------------------------------------
# Evaluation reports


def _fmt(value: Optional[float]) -> str:
    """Four-decimal cell formatting; undefined values print as 'undefined'."""
    return "undefined" if value is None else format(value, ".4f")


def _row_dict(row: MetricRow) -> dict:
    return {
        "threshold": row.threshold,
        "dsc": row.dsc,
        "iou": row.iou,
        "precision": row.precision,
        "recall": row.recall,
        "hd95": row.hd95,
    }


def _ged_dict(report: GedReport) -> dict:
    return {
        "d2_ged": report.d2_ged,
        "expected_distance": report.expected_distance,
        "diversity": report.diversity,
        "expected_dsc": report.expected_dsc,
    }


GED_FIELDS = ("d2_ged", "expected_distance", "diversity", "expected_dsc")


def write_report(
    out_dir,
    case_rows: Sequence[tuple[str, Sequence[MetricRow]]],
    ged_reports: Sequence[tuple[str, GedReport]],
    metadata: dict,
    formats: Sequence[str] = ("csv", "json"),
) -> dict[str, Path]:
    """Write the per-threshold metric table, its summary, and the GED table.

    CSV cells are rounded to 4 decimals (matching the published tables);
    the JSON mirror keeps full precision. Returns the written paths.
    """
    if len(case_rows) == 0:
        raise ValueError("report needs at least one case")
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown report format {fmt!r}")
    out_dir = Path(out_dir)
    all_rows = [row for _, rows in case_rows for row in rows]
    summary = summarize_rows(all_rows)
    written: dict[str, Path] = {}

    if "csv" in formats:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case", "threshold", "dsc", "iou", "precision", "recall", "hd95"])
        for case_id, rows in case_rows:
            for row in rows:
                writer.writerow(
                    [case_id, _fmt(row.threshold), _fmt(row.dsc), _fmt(row.iou),
                     _fmt(row.precision), _fmt(row.recall), _fmt(row.hd95)]
                )
        written["metrics_csv"] = out_dir / "metrics.csv"
        atomic_write_bytes(written["metrics_csv"], buf.getvalue().encode())

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "mean", "std", "skipped_hd95"])
        for name in METRIC_NAMES:
            skipped = summary.hd95_skipped if name == "hd95" else 0
            writer.writerow([name, _fmt(summary.mean[name]), _fmt(summary.std[name]), skipped])
        written["summary_csv"] = out_dir / "summary.csv"
        atomic_write_bytes(written["summary_csv"], buf.getvalue().encode())

        if ged_reports:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["case", "d2_ged", "expected_distance", "diversity", "expected_dsc"])
            for case_id, report in ged_reports:
                writer.writerow(
                    [case_id, _fmt(report.d2_ged), _fmt(report.expected_distance),
                     _fmt(report.diversity), _fmt(report.expected_dsc)]
                )
            written["ged_csv"] = out_dir / "ged.csv"
            atomic_write_bytes(written["ged_csv"], buf.getvalue().encode())

    if "json" in formats:
        doc = {
            "metadata": dict(metadata),
            "cases": [
                {"case": case_id, "rows": [_row_dict(r) for r in rows]}
                for case_id, rows in case_rows
            ],
            "summary": {
                "mean": summary.mean,
                "std": summary.std,
                "hd95_skipped": summary.hd95_skipped,
            },
            "ged": [
                {"case": case_id, **_ged_dict(report)} for case_id, report in ged_reports
            ],
        }
        if ged_reports:
            aggregates = {}
            for f in GED_FIELDS:
                values = [getattr(rep, f) for _, rep in ged_reports]
                if any(v is None for v in values):
                    aggregates[f] = (None, None)
                else:
                    aggregates[f] = (float(np.mean(values)), float(np.std(values)))
            doc["ged_summary"] = {
                "mean": {f: aggregates[f][0] for f in GED_FIELDS},
                "std": {f: aggregates[f][1] for f in GED_FIELDS},
            }
        written["report_json"] = out_dir / "report.json"
        atomic_write_bytes(written["report_json"], (json.dumps(doc, indent=2) + "\n").encode())
    return written
