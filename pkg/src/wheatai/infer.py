"""Pluggable inference backends and shared detection post-processing.

The only backend shipped in v1 is the fixture-file backend: one
`<image_stem>.pred.json` per image, holding per-role oriented-box
detections plus optional masks, verdicts and per-detection crop
predictions. Real model runtimes plug in behind the same four calls
(detect / segment / classify / roles).

Fixture schema (UTF-8 JSON, bit-exact keys)::

    {"image": str, "width": int, "height": int,
     "models": {"<role>": {
         "detections": [{"cx": f, "cy": f, "w": f, "h": f,
                         "angle_rad": f, "category": str, "conf": f}],
         "masks":    {"<det_index>": [[x, y], ...]},
         "verdicts": {"<det_index>": {"keep": bool, "view": str?}},
         "crops":    {"<parent_det_index>": {"detections": [...]}}}}}

Mask/verdict/crop keys refer to positions in that role's raw
``detections`` array. Angles are radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    MissingMask,
    MissingPrediction,
    MissingVerdict,
    NotADirectory,
    SchemaViolation,
)
from .geom import ConvexPolygon, OrientedBox, obb_nms

VIEW_LABELS = ("frontal", "lateral")
ELLIPSE_VERTICES = 96


@dataclass(frozen=True)
class InferenceParams:
    """Detector post-processing knobs shared by every pipeline."""

    conf_thresh: float = 0.25
    nms_iou: float = 0.30
    role: str = ""

    def __post_init__(self):
        if not 0.0 <= self.conf_thresh <= 1.0:
            raise ValueError(f"conf_thresh must be in [0, 1], got {self.conf_thresh}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError(f"nms_iou must be in (0, 1], got {self.nms_iou}")


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    category: str
    confidence: float
    source_index: int = -1  # position in the backend's raw output for this role
    out_of_frame: bool = False  # box center outside the image bounds


@dataclass(frozen=True)
class DetectionSet:
    image_ref: str
    image_width: int
    image_height: int
    detections: tuple[Detection, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.detections)

    def count_category(self, category: str) -> int:
        return sum(1 for d in self.detections if d.category == category)


@dataclass(frozen=True)
class MaskSegment:
    """Instance boundary for one detection: exact polygon or full-image bitmask."""

    detection_index: int
    boundary: object  # ConvexPolygon | np.ndarray (bool, image-shaped)
    source: str  # "fixture" | "inscribed_ellipse"


@dataclass(frozen=True)
class Verdict:
    detection_index: int
    keep: bool
    view: str | None = None


def _check(cond: bool, where: str, msg: str):
    if not cond:
        raise SchemaViolation(f"{where}: {msg}")


def _parse_detection(rec: dict, where: str, width: int, height: int, index: int) -> Detection:
    _check(isinstance(rec, dict), where, "detection record must be an object")
    for key in ("cx", "cy", "w", "h", "angle_rad", "category", "conf"):
        _check(key in rec, where, f"missing key {key!r}")
    for key in ("cx", "cy", "w", "h", "angle_rad", "conf"):
        v = rec[key]
        _check(isinstance(v, (int, float)) and math.isfinite(v), where, f"{key} must be a finite number")
    _check(rec["w"] > 0 and rec["h"] > 0, where, "w and h must be positive")
    _check(0.0 <= rec["conf"] <= 1.0, where, f"conf {rec['conf']} outside [0, 1]")
    _check(isinstance(rec["category"], str) and rec["category"], where, "category must be a non-empty string")
    box = OrientedBox(rec["cx"], rec["cy"], rec["w"], rec["h"], rec["angle_rad"])
    out = not (0.0 <= box.cx <= width and 0.0 <= box.cy <= height)
    return Detection(box, rec["category"], float(rec["conf"]), source_index=index, out_of_frame=out)


def _parse_polygon(points: list, where: str) -> ConvexPolygon:
    _check(isinstance(points, list) and len(points) >= 3, where, "mask needs >= 3 [x, y] points")
    coords = []
    for i, pt in enumerate(points):
        _check(
            isinstance(pt, list) and len(pt) == 2
            and all(isinstance(v, (int, float)) and math.isfinite(v) for v in pt),
            where,
            f"mask point {i} must be [x, y]",
        )
        coords.append((float(pt[0]), float(pt[1])))
    # normalize to CCW
    area2 = sum(
        coords[i][0] * coords[(i + 1) % len(coords)][1]
        - coords[(i + 1) % len(coords)][0] * coords[i][1]
        for i in range(len(coords))
    )
    if area2 < 0:
        coords.reverse()
    _check(abs(area2) > 0, where, "mask polygon is degenerate")
    return ConvexPolygon.from_coords(coords)


def _parse_index_map(data: dict, where: str, n_dets: int) -> dict[int, object]:
    _check(isinstance(data, dict), where, "must be an object keyed by detection index")
    out = {}
    for key, value in data.items():
        _check(key.lstrip("-").isdigit(), where, f"key {key!r} is not a detection index")
        idx = int(key)
        _check(0 <= idx < n_dets, where, f"detection index {idx} out of range (0..{n_dets - 1})")
        out[idx] = value
    return out


@dataclass(frozen=True)
class _RoleEntry:
    detections: tuple[Detection, ...]
    masks: dict[int, ConvexPolygon]
    verdicts: dict[int, Verdict]
    crops: dict[int, tuple[Detection, ...]]


@dataclass(frozen=True)
class _FixtureEntry:
    image: str
    width: int
    height: int
    roles: dict[str, _RoleEntry]


class FixtureBackend:
    """Immutable prediction store backed by a directory of fixture files."""

    def __init__(self, root: Path, entries: dict[str, _FixtureEntry]):
        self.root = root
        self._entries = entries

    def images(self) -> list[str]:
        return sorted(self._entries)

    def has_image(self, image_ref: str) -> bool:
        return image_ref in self._entries

    def roles(self, image_ref: str) -> list[str]:
        return sorted(self._entry(image_ref).roles)

    def filename(self, image_ref: str) -> str:
        return self._entry(image_ref).image

    def dims(self, image_ref: str) -> tuple[int, int]:
        entry = self._entry(image_ref)
        return entry.width, entry.height

    def _entry(self, image_ref: str) -> _FixtureEntry:
        entry = self._entries.get(image_ref)
        if entry is None:
            raise MissingPrediction(f"no predictions for image {image_ref!r}")
        return entry

    def _role(self, image_ref: str, role: str) -> _RoleEntry:
        entry = self._entry(image_ref)
        role_entry = entry.roles.get(role)
        if role_entry is None:
            raise MissingPrediction(f"image {image_ref!r} has no predictions for role {role!r}")
        return role_entry


def _load_fixture_file(path: Path) -> _FixtureEntry:
    where = path.name
    try:
        data = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"{where}: unreadable fixture file ({exc})") from exc
    _check(isinstance(data, dict), where, "top level must be an object")
    for key in ("image", "width", "height", "models"):
        _check(key in data, where, f"missing key {key!r}")
    _check(isinstance(data["image"], str) and data["image"], where, "image must be a non-empty string")
    _check(
        isinstance(data["width"], int) and isinstance(data["height"], int)
        and data["width"] > 0 and data["height"] > 0,
        where,
        "width/height must be positive integers",
    )
    stem = Path(data["image"]).stem
    expected_stem = path.name[: -len(".pred.json")]
    _check(
        stem == expected_stem,
        where,
        f"image field {data['image']!r} does not match fixture stem {expected_stem!r}",
    )
    _check(isinstance(data["models"], dict), where, "models must be an object")
    width, height = data["width"], data["height"]

    roles: dict[str, _RoleEntry] = {}
    for role, body in data["models"].items():
        rw = f"{where}: models[{role!r}]"
        _check(isinstance(body, dict), rw, "role body must be an object")
        raw = body.get("detections", [])
        _check(isinstance(raw, list), rw, "detections must be a list")
        dets = tuple(
            _parse_detection(rec, f"{rw}.detections[{i}]", width, height, i)
            for i, rec in enumerate(raw)
        )
        masks = {
            idx: _parse_polygon(pts, f"{rw}.masks[{idx}]")
            for idx, pts in _parse_index_map(body.get("masks", {}), f"{rw}.masks", len(dets)).items()
        }
        verdicts = {}
        for idx, v in _parse_index_map(body.get("verdicts", {}), f"{rw}.verdicts", len(dets)).items():
            vw = f"{rw}.verdicts[{idx}]"
            _check(isinstance(v, dict) and isinstance(v.get("keep"), bool), vw, "verdict needs boolean 'keep'")
            view = v.get("view")
            _check(view is None or view in VIEW_LABELS, vw, f"view must be one of {VIEW_LABELS}")
            verdicts[idx] = Verdict(idx, v["keep"], view)
        crops = {}
        for idx, c in _parse_index_map(body.get("crops", {}), f"{rw}.crops", len(dets)).items():
            cw = f"{rw}.crops[{idx}]"
            _check(isinstance(c, dict) and isinstance(c.get("detections"), list), cw, "crop entry needs a detections list")
            # crop-local coordinates; bounds are not checked against the image
            crops[idx] = tuple(
                _parse_detection(rec, f"{cw}.detections[{i}]", 10 ** 9, 10 ** 9, i)
                for i, rec in enumerate(c["detections"])
            )
        roles[role] = _RoleEntry(dets, masks, verdicts, crops)
    return _FixtureEntry(data["image"], width, height, roles)


def open_fixture_backend(root: str | Path) -> FixtureBackend:
    """Eagerly load and validate every `*.pred.json` under `root`."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectory(f"fixture backend root {root} is not a directory")
    entries: dict[str, _FixtureEntry] = {}
    for path in sorted(root.glob("*.pred.json")):
        entry = _load_fixture_file(path)
        entries[path.name[: -len(".pred.json")]] = entry
    return FixtureBackend(root, entries)


def detect(backend: FixtureBackend, image_ref: str, role: str) -> DetectionSet:
    """Raw detections for one (image, role), exactly as the backend stores them."""
    entry = backend._entry(image_ref)
    role_entry = backend._role(image_ref, role)
    return DetectionSet(image_ref, entry.width, entry.height, role_entry.detections)


def postprocess(raw: DetectionSet, params: InferenceParams) -> DetectionSet:
    """Confidence threshold then category-wise oriented NMS; deterministic."""
    surviving = tuple(d for d in raw.detections if d.confidence >= params.conf_thresh)
    return obb_nms(replace(raw, detections=surviving), params.nms_iou)


def inscribed_ellipse(box: OrientedBox, vertices: int = ELLIPSE_VERTICES) -> ConvexPolygon:
    """Polygon approximation of the ellipse inscribed in an oriented box."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    a, b = box.w / 2.0, box.h / 2.0
    pts = []
    for i in range(vertices):
        t = 2.0 * math.pi * i / vertices
        u, v = a * math.cos(t), b * math.sin(t)
        pts.append((box.cx + u * c - v * s, box.cy + u * s + v * c))
    return ConvexPolygon.from_coords(pts)


def segment(
    backend: FixtureBackend,
    image_ref: str,
    role: str,
    boxes: list[OrientedBox],
    strict: bool = False,
    indices: list[int] | None = None,
) -> list[MaskSegment]:
    """Box-prompted segmentation.

    Returns the fixture mask for each prompting box when one is stored for
    the box's detection index; otherwise synthesizes the inscribed ellipse
    (strict=False) or raises MissingMask (strict=True). `indices` maps each
    box to its raw detection index; positional indices are assumed when
    omitted.
    """
    role_entry = backend._role(image_ref, role)
    if indices is None:
        indices = list(range(len(boxes)))
    if len(indices) != len(boxes):
        raise ValueError("indices and boxes must have equal length")
    out: list[MaskSegment] = []
    for box, idx in zip(boxes, indices):
        mask = role_entry.masks.get(idx)
        if mask is not None:
            out.append(MaskSegment(idx, mask, "fixture"))
        elif strict:
            raise MissingMask(f"image {image_ref!r} role {role!r} has no mask for detection {idx}")
        else:
            out.append(MaskSegment(idx, inscribed_ellipse(box), "inscribed_ellipse"))
    return out


def classify(backend: FixtureBackend, image_ref: str, role: str, detection_index: int) -> Verdict:
    """Per-detection verdict (orientation / quality selection)."""
    role_entry = backend._role(image_ref, role)
    verdict = role_entry.verdicts.get(detection_index)
    if verdict is None:
        raise MissingVerdict(
            f"image {image_ref!r} role {role!r} has no verdict for detection {detection_index}"
        )
    return verdict


def crop_detections(backend: FixtureBackend, image_ref: str, role: str, parent_index: int) -> DetectionSet | None:
    """Stage-2 predictions inside one parent detection's crop (crop-local
    coordinates); None when the fixture has no entry for the parent."""
    role_entry = backend._role(image_ref, role)
    dets = role_entry.crops.get(parent_index)
    if dets is None:
        return None
    entry = backend._entry(image_ref)
    return DetectionSet(f"{image_ref}#crop{parent_index}", entry.width, entry.height, dets)
