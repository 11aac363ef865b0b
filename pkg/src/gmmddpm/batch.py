"""Point batches and their CSV representation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError, ZeroCount


@dataclass(eq=False)
class SampleBatch:
    """``n`` points in ``R^d`` plus the seed and process that produced them."""

    points: np.ndarray
    seed: int | None = None
    meta: str = ""
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise DimensionMismatch(f"points must be 2-D, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ZeroCount("a batch needs at least one point")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)


def as_points(samples) -> np.ndarray:
    if isinstance(samples, SampleBatch):
        return samples.points
    pts = np.asarray(samples, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def write_batch_csv(batch: SampleBatch, path=None) -> str:
    """Serialise a batch; header comments carry seed and provenance."""
    buf = io.StringIO()
    meta = {"seed": batch.seed, "process": batch.meta, **batch.header}
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(batch.d)])
    for row in batch.points:
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_batch_csv(path) -> SampleBatch:
    header = {}
    rows = []
    cols = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            continue
        if not line.strip():
            continue
        if cols is None:
            cols = line.split(",")
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if len(rows[-1]) != len(cols):
            raise ParseError(f"expected {len(cols)} columns", line=lineno)
    seed = header.pop("seed", None)
    seed = None if seed in (None, "None") else int(seed)
    meta = header.pop("process", "")
    return SampleBatch(np.array(rows), seed=seed, meta=meta, header=header)
