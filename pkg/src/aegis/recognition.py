"""Face detection, embedding, scoring, and gallery search.

This is the recognition-service stand-in: it localizes textured face regions
in a frame, reduces each crop to a 256-value normalized embedding, scores
pairs on a 0-100 scale, and searches an enrolled collection with a grant
threshold. All operations are pure; a collection is just the list passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import BoundingBox, Image, resample_mean

EMBEDDING_DIM = 256
EMBEDDING_SIDE = 16

# Tiles whose internal pixel variance beats this noise floor count as
# textured; quiet background (sigma ~2) never reaches it while a lit face
# does even at the dim illumination level.
TILE_ACTIVITY_VARIANCE = 16.0

# Sensor/quantization noise floor subtracted from a window's raw variance
# before the illumination-normalized gate below.
SENSOR_VARIANCE_FLOOR = 6.0

# Gaps up to this many tiles are bridged when grouping active tiles, so a
# flat accessory band does not split one face into two regions.
TILE_CLOSING_RADIUS = 2

# Candidate regions smaller than this edge length are sensor dust, not faces.
MIN_REGION_EXTENT = 12


class RecognitionError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionParams:
    """Tunables of the sliding-tile face finder."""

    window_sizes: tuple = (16, 24, 32, 48, 64)
    stride: int = 4
    variance_threshold: float = 400.0
    nms_iou: float = 0.3

    def validate(self) -> None:
        if self.stride < 1:
            raise RecognitionError("stride must be >= 1")
        if self.variance_threshold <= 0:
            raise RecognitionError("variance threshold must be positive")
        if not 0.0 < self.nms_iou < 1.0:
            raise RecognitionError("nms_iou must lie in (0, 1)")
        if not self.window_sizes or any(s < 1 for s in self.window_sizes):
            raise RecognitionError("window sizes must be positive")


@dataclass(frozen=True)
class FaceMatch:
    face_id: str
    similarity: float
    box: BoundingBox | None = None


# --------------------------------------------------------------------------
# Embeddings and scoring
# --------------------------------------------------------------------------

def embed(crop: Image) -> np.ndarray:
    """Reduce a crop to a zero-mean unit-norm 256-vector.

    The crop is area-averaged onto a 16x16 grid (unrounded), centered, and
    normalized; intensity gain and offset therefore cancel out. A crop with
    no variance maps to the reserved all-zero embedding.
    """
    grid = resample_mean(crop, EMBEDDING_SIDE, EMBEDDING_SIDE).reshape(-1)
    centered = grid - grid.mean()
    norm = float(np.linalg.norm(centered))
    if norm == 0.0:
        return np.zeros(EMBEDDING_DIM, dtype=np.float64)
    return centered / norm


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Match confidence on [0, 100]: clamped cosine times 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (EMBEDDING_DIM,) or b.shape != (EMBEDDING_DIM,):
        raise RecognitionError(f"embeddings must have {EMBEDDING_DIM} values")
    dot = float(np.dot(a, b))
    return min(100.0, max(0.0, dot) * 100.0)


def search_collection(probe: np.ndarray, collection, threshold: float):
    """Best enrolled match at or above the threshold, else None.

    Ties break toward the lexicographically smallest face_id. Each record
    needs `face_id` and `embedding` attributes (see storage.FaceRecord).
    """
    if not 0.0 <= threshold <= 100.0:
        raise RecognitionError(f"threshold {threshold} outside [0, 100]")
    best = None
    for record in collection:
        score = similarity(probe, record.embedding)
        if best is None or score > best.similarity or (
            score == best.similarity and record.face_id < best.face_id
        ):
            best = FaceMatch(face_id=record.face_id, similarity=score)
    if best is None or best.similarity < threshold:
        return None
    return best


def best_similarity(probe: np.ndarray, collection) -> float | None:
    """Highest score against the collection regardless of threshold."""
    scores = [similarity(probe, record.embedding) for record in collection]
    return max(scores) if scores else None


def select_primary_face(boxes) -> BoundingBox | None:
    """The face that counts: largest area (area proxies camera proximity),
    ties toward smaller (y, x)."""
    if not boxes:
        return None
    return min(boxes, key=lambda b: (-b.area, b.y, b.x))


# --------------------------------------------------------------------------
# Detection
# --------------------------------------------------------------------------

def detect_faces(frame: Image, params: DetectionParams | None = None) -> list[BoundingBox]:
    """Locate face-sized textured regions in a frame.

    Stride-sized tiles are scanned for internal texture; connected active
    tiles (with small gaps closed) form candidate regions, each snapped to
    the nearest supported window size around its center. Candidates must
    then pass the illumination-normalized variance gate, and overlapping
    survivors are reduced by non-maximum suppression (descending variance,
    ties toward smaller (y, x)). The result is sorted by descending area,
    ties by (y, x).
    """
    params = params or DetectionParams()
    params.validate()
    if frame.width < min(params.window_sizes) or frame.height < min(params.window_sizes):
        raise RecognitionError(
            f"frame {frame.width}x{frame.height} smaller than every window size"
        )

    active = _tile_activity(frame.array, params.stride)
    active = _binary_close(active, TILE_CLOSING_RADIUS)

    candidates = []
    for tile_box in _components(active):
        box = _snap_region(tile_box, params, frame)
        if box is None:
            continue
        score = _window_score(frame, box)
        if score >= params.variance_threshold:
            candidates.append((box, score))

    kept = _non_maximum_suppression(candidates, params.nms_iou)
    kept.sort(key=lambda b: (-b.area, b.y, b.x))
    return kept


def _tile_activity(arr: np.ndarray, stride: int) -> np.ndarray:
    """Boolean grid: tile has enough internal variance to be texture."""
    h, w = arr.shape
    th, tw = h // stride, w // stride
    if th == 0 or tw == 0:
        return np.zeros((1, 1), dtype=bool)
    trimmed = arr[: th * stride, : tw * stride].astype(np.float64)
    tiles = trimmed.reshape(th, stride, tw, stride).transpose(0, 2, 1, 3)
    tiles = tiles.reshape(th, tw, stride * stride)
    variances = tiles.var(axis=2)
    return variances >= TILE_ACTIVITY_VARIANCE


def _binary_close(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0 or not mask.any():
        return mask
    # Pad first so dilation never reaches the array edge; erosion (dilation
    # of the complement) then shrinks interior bulges back exactly.
    padded = np.pad(mask, radius, constant_values=False)
    dilated = _dilate(padded, radius)
    eroded = ~_dilate(~dilated, radius)
    return eroded[radius:-radius, radius:-radius]


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def _components(mask: np.ndarray):
    """8-connected components of the tile mask, as tile-grid boxes."""
    th, tw = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    for ty in range(th):
        for tx in range(tw):
            if not mask[ty, tx] or seen[ty, tx]:
                continue
            stack = [(ty, tx)]
            seen[ty, tx] = True
            min_y = max_y = ty
            min_x = max_x = tx
            while stack:
                cy, cx = stack.pop()
                min_y, max_y = min(min_y, cy), max(max_y, cy)
                min_x, max_x = min(min_x, cx), max(max_x, cx)
                for ny in range(max(0, cy - 1), min(th, cy + 2)):
                    for nx in range(max(0, cx - 1), min(tw, cx + 2)):
                        if mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            yield min_y, min_x, max_y, max_x


def _snap_region(tile_box, params: DetectionParams, frame: Image) -> BoundingBox | None:
    """Snap a tile-grid region to the nearest supported window size."""
    min_ty, min_tx, max_ty, max_tx = tile_box
    s = params.stride
    x0, y0 = min_tx * s, min_ty * s
    x1, y1 = (max_tx + 1) * s, (max_ty + 1) * s
    extent = max(x1 - x0, y1 - y0)
    if extent < MIN_REGION_EXTENT:
        return None
    size = min(params.window_sizes, key=lambda w: (abs(w - extent), w))
    cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
    bx = min(max(cx - size // 2, 0), max(frame.width - size, 0))
    by = min(max(cy - size // 2, 0), max(frame.height - size, 0))
    if bx + size > frame.width or by + size > frame.height:
        return None
    return BoundingBox(bx, by, size, size)


def _window_score(frame: Image, box: BoundingBox) -> float:
    """Illumination-normalized texture variance of a window.

    Raw variance is floored by the sensor noise level and rescaled to the
    reference mid-gray brightness, so a dim but textured face scores like
    its brightly lit twin while near-black quantization residue scores zero.
    """
    window = frame.array[box.y : box.y + box.h, box.x : box.x + box.w].astype(np.float64)
    raw = float(window.var())
    mean = float(window.mean())
    if mean <= 0.0:
        return 0.0
    adjusted = max(0.0, raw - SENSOR_VARIANCE_FLOOR)
    scale = (mean / 128.0) ** 2
    return adjusted / scale if scale > 0 else 0.0


def _non_maximum_suppression(candidates, max_iou: float) -> list[BoundingBox]:
    order = sorted(candidates, key=lambda c: (-c[1], c[0].y, c[0].x))
    kept: list[BoundingBox] = []
    for box, _score in order:
        if all(box.iou(k) <= max_iou for k in kept):
            kept.append(box)
    return kept
