"""Plain-text problem files.

Layout::

    USAC-PROBLEM v1 <kind> <w1> <h1> <w2> <h2>
    K1 <9 reals>            (optional)
    K2 <9 reals>            (optional)
    GT <9 reals>            (optional, row-major)
    MASK <0/1 characters>   (optional)
    x1 y1 x2 y2 [quality]   (one line per correspondence)
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import CorrespondenceSet, EstimationModel, Intrinsics, ModelKind

MAGIC = "USAC-PROBLEM"
VERSION = "v1"


class ProblemFormatError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


@dataclass
class Problem:
    kind: ModelKind
    data: CorrespondenceSet
    gt_model: Optional[EstimationModel] = None
    intrinsics: Optional[Intrinsics] = None
    gt_mask: Optional[np.ndarray] = None


def _reals(tokens, count, path, line_no, what):
    if len(tokens) != count:
        raise ProblemFormatError(path, line_no, f"{what} needs {count} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ProblemFormatError(path, line_no, f"bad number in {what}: {exc}") from None


def load_problem(path) -> Problem:
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ProblemFormatError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) != 7 or head[0] != MAGIC or head[1] != VERSION:
        raise ProblemFormatError(path, 1, f"expected '{MAGIC} {VERSION} <kind> <w1> <h1> <w2> <h2>'")
    try:
        kind = ModelKind.parse(head[2])
    except (ValueError, TypeError) as exc:
        raise ProblemFormatError(path, 1, str(exc)) from None
    w1, h1, w2, h2 = _reals(head[3:], 4, path, 1, "image sizes")

    mats: dict = {}
    mask_text = None
    mask_line = 0
    rows, quality = [], []
    for line_no, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        tag = tokens[0]
        if tag in ("K1", "K2", "GT"):
            if rows:
                raise ProblemFormatError(path, line_no, f"{tag} must precede the correspondences")
            mats[tag] = np.array(_reals(tokens[1:], 9, path, line_no, tag)).reshape(3, 3)
        elif tag == "MASK":
            if rows:
                raise ProblemFormatError(path, line_no, "MASK must precede the correspondences")
            mask_text = "".join(tokens[1:])
            mask_line = line_no
            if set(mask_text) - {"0", "1"}:
                raise ProblemFormatError(path, line_no, "MASK may contain only 0 and 1")
        else:
            if len(tokens) not in (4, 5):
                raise ProblemFormatError(path, line_no, f"expected 4 or 5 numbers, got {len(tokens)}")
            values = _reals(tokens, len(tokens), path, line_no, "correspondence")
            rows.append(values[:4])
            quality.append(values[4] if len(values) == 5 else None)

    if any(q is None for q in quality) and not all(q is None for q in quality):
        raise ProblemFormatError(path, len(lines), "quality must be given for all or no correspondences")
    pts = np.array(rows, dtype=float).reshape(-1, 4)
    q = None if not quality or quality[0] is None else np.array(quality)
    try:
        data = CorrespondenceSet(pts[:, :2], pts[:, 2:], (w1, h1), (w2, h2), q)
    except ValueError as exc:
        raise ProblemFormatError(path, 1, str(exc)) from None

    mask = None
    if mask_text is not None:
        if len(mask_text) != len(data):
            raise ProblemFormatError(path, mask_line,
                                     f"MASK has {len(mask_text)} entries for {len(data)} correspondences")
        mask = np.frombuffer(mask_text.encode(), dtype=np.uint8) == ord("1")
    intrinsics = None
    if "K1" in mats or "K2" in mats:
        K1 = mats.get("K1", mats.get("K2"))
        K2 = mats.get("K2", K1)
        try:
            intrinsics = Intrinsics(K1, K2)
        except ValueError as exc:
            raise ProblemFormatError(path, 1, str(exc)) from None
    gt = EstimationModel(kind, mats["GT"]) if "GT" in mats else None
    return Problem(kind, data, gt, intrinsics, mask)


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).reshape(-1))


def save_problem(path, kind, data: CorrespondenceSet, gt_model=None, intrinsics=None,
                 gt_mask=None) -> None:
    """Write a problem file; coordinates round-trip bit-exactly."""
    kind = ModelKind.parse(kind)
    w1, h1 = data.image1_size
    w2, h2 = data.image2_size
    out = [f"{MAGIC} {VERSION} {kind.value} {_fmt([w1, h1, w2, h2])}"]
    if intrinsics is not None:
        out.append(f"K1 {_fmt(intrinsics.K1)}")
        out.append(f"K2 {_fmt(intrinsics.K2)}")
    if gt_model is not None:
        m = gt_model.m if isinstance(gt_model, EstimationModel) else gt_model
        out.append(f"GT {_fmt(m)}")
    if gt_mask is not None:
        gt_mask = np.asarray(gt_mask, dtype=bool)
        if gt_mask.size != len(data):
            raise ValueError("mask length must match the number of correspondences")
        out.append("MASK " + "".join("1" if b else "0" for b in gt_mask))
    for i in range(len(data)):
        row = [*data.pts1[i], *data.pts2[i]]
        if data.quality is not None:
            row.append(data.quality[i])
        out.append(_fmt(row))
    Path(path).write_text("\n".join(out) + "\n")
