"""JSONL dataset manifests, corpus statistics and ICDAR-style export.

Manifest lines are JSON objects with sorted keys::

    {"height": .., "image": "images/<id>.png", "instances": [...],
     "provenance": {...}, "schema_version": 1, "width": ..}

Image paths are relative to the manifest's directory. Polygons are lists of
``[x, y]`` pixel coordinates with the origin at the top-left corner.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidAnnotationError, ManifestParseError
from .geometry import min_area_quad, validate_polygon
from .imageio import read_image, write_image
from .recognizer import GeneratedInstance

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"

# Published corpus size of the diffusion-generated 10K set; documentation only.
REFERENCE_CORPUS = {"images": 10_000, "instances": 76_354, "instances_per_image": 76_354 / 10_000}


@dataclass
class DatasetRecord:
    image_path: str
    width: int
    height: int
    instances: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def image_id(self) -> str:
        return Path(self.image_path).stem

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "image": self.image_path,
            "width": self.width,
            "height": self.height,
            "instances": [inst.to_json() for inst in self.instances],
            "provenance": self.provenance,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "DatasetRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {d.get('schema_version')!r}")
        image = d["image"]
        stem = Path(image).stem
        return cls(
            image_path=image,
            width=int(d["width"]),
            height=int(d["height"]),
            instances=[GeneratedInstance.from_json(stem, i) for i in d["instances"]],
            provenance=dict(d.get("provenance", {})),
        )


def validate_record(record: DatasetRecord, root: str | Path | None = None) -> None:
    if record.width <= 0 or record.height <= 0:
        raise InvalidAnnotationError(f"{record.image_path}: non-positive image size")
    for inst in record.instances:
        validate_polygon(inst.polygon, record.height, record.width)
        if not 0.0 <= inst.confidence <= 1.0:
            raise InvalidAnnotationError(f"{record.image_path}: confidence {inst.confidence} outside [0, 1]")
    if root is not None:
        path = Path(root) / record.image_path
        if not path.exists():
            raise DataError(f"{path}: image file missing")
        img = read_image(path)
        if img.shape[:2] != (record.height, record.width):
            raise DataError(f"{path}: size {img.shape[:2]} != declared {(record.height, record.width)}")


def emit_record(
    image: np.ndarray,
    instances,
    out_dir: str | Path,
    image_id: str,
    provenance: dict | None = None,
    manifest_name: str = MANIFEST_NAME,
) -> DatasetRecord:
    """Write ``image`` losslessly and append its record to the manifest."""
    out = Path(out_dir)
    rel = f"images/{image_id}.png"
    h, w = image.shape[:2]
    record = DatasetRecord(rel, int(w), int(h), list(instances), dict(provenance or {}))
    validate_record(record)
    try:
        write_image(out / rel, image)
        with open(out / manifest_name, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(record.to_line())
    except OSError as exc:
        raise DataError(f"{out}: cannot write dataset output: {exc}") from exc
    return record


def parse_manifest_lines(lines) -> list[DatasetRecord]:
    records = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = DatasetRecord.from_json(json.loads(line))
            validate_record(rec)
        except (ValueError, KeyError, TypeError, DataError) as exc:
            raise ManifestParseError(str(exc), n) from exc
        records.append(rec)
    return records


def read_manifest(path: str | Path) -> list[DatasetRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest: {exc}") from exc
    try:
        return parse_manifest_lines(text.splitlines())
    except ManifestParseError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc


def compute_stats(manifest) -> dict:
    """Exact image and instance counts for a manifest path or record list."""
    records = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    images = len(records)
    instances = sum(len(r.instances) for r in records)
    return {"images": images, "instances": instances, "instances_per_image": instances / images if images else 0.0}


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def export_icdar(manifest, out_dir: str | Path) -> list[Path]:
    """One ``<image id>.txt`` per image, lines ``x1,y1,...,x4,y4,transcription``."""
    records = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written, warnings = [], []
    for rec in records:
        lines = []
        for inst in rec.instances:
            poly = np.asarray(inst.polygon, dtype=np.float64)
            if len(poly) != 4:
                warnings.append(f"{rec.image_id}: {len(poly)}-point polygon replaced by its min-area quad")
                poly = min_area_quad(poly)
            lines.append(",".join(_fmt(v) for v in poly.reshape(-1)) + "," + inst.text)
        path = out / f"{rec.image_id}.txt"
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")
        written.append(path)
    if warnings:
        for w in warnings:
            log.warning(w)
        (out / "warnings.log").write_text("".join(w + "\n" for w in warnings), encoding="utf-8")
    return written


def parse_icdar(path: str | Path) -> list[tuple[np.ndarray, str]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        parts = line.split(",", 8)
        if len(parts) != 9:
            raise DataError(f"{path}: malformed line {line!r}")
        out.append((np.array([float(v) for v in parts[:8]]).reshape(4, 2), parts[8]))
    return out
