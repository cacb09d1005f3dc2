"""Synthetic face imagery: PGM codec, identity textures, capture transforms.

Faces are procedural textures, not photographs. A texture is defined by a
16x16 grid of gray values drawn from a fixed seeded generator and smoothly
upscaled, so the same identity rendered at different sizes keeps the same
coarse appearance (and therefore the same embedding). The capture transforms
model the test conditions an entry camera sees: lighting level, head yaw,
sunglasses, and photo-replay spoofing.

All pixel-producing operations round half up and are pure functions of their
arguments; repeated calls are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prng import XorShift64Star, derive_seed

# Gray-value range for face texture cells.
TEXTURE_LOW = 64
TEXTURE_HIGH = 192
TEXTURE_MID = 128

# Border cells of the 16x16 grid are pushed at least this far from mid-gray,
# so a face's outline keeps camera-visible contrast even in dim light.
BORDER_MIN_CONTRAST = 24

# Gray level of sunglass lenses. Calibrated so a sunglassed probe scores in
# [80, 100) against its clean gallery embedding (see notes in the README).
SUNGLASS_LEVEL = 112

SUPPORTED_YAW_DEGREES = (0, 45, 90)


class ImagingError(ValueError):
    pass


class PgmDecodeError(ImagingError):
    """Base class for malformed PGM input."""


class PgmMagicError(PgmDecodeError):
    pass


class PgmHeaderError(PgmDecodeError):
    pass


class PgmMaxvalError(PgmDecodeError):
    pass


class PgmTruncatedError(PgmDecodeError):
    pass


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


class Image:
    """W x H 8-bit grayscale raster; pixels row-major."""

    __slots__ = ("array",)

    def __init__(self, array: np.ndarray):
        arr = np.asarray(array)
        if arr.ndim != 2 or arr.size == 0:
            raise ImagingError("image must be a non-empty 2-D raster")
        if arr.dtype != np.uint8:
            if np.any((arr < 0) | (arr > 255)):
                raise ImagingError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        self.array = arr

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels) -> "Image":
        if width < 1 or height < 1:
            raise ImagingError("width and height must be >= 1")
        flat = np.asarray(pixels)
        if flat.size != width * height:
            raise ImagingError(
                f"pixel count {flat.size} != width*height {width * height}"
            )
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def pixels(self) -> list:
        return self.array.reshape(-1).tolist()

    def crop(self, x: int, y: int, w: int, h: int) -> "Image":
        if x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            raise ImagingError("crop outside image bounds")
        return Image(self.array[y : y + h, x : x + w].copy())

    def copy(self) -> "Image":
        return Image(self.array.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and np.array_equal(self.array, other.array)

    def __hash__(self):
        return hash((self.width, self.height, self.array.tobytes()))

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height})"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner plus size."""

    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def intersection_area(self, other: "BoundingBox") -> int:
        iw = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        ih = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0
        return iw * ih

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        union = self.area + other.area - inter
        return inter / union if union else 0.0


# --------------------------------------------------------------------------
# PGM codec (P5 binary / P2 ASCII, maxval <= 255)
# --------------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        if i >= n:
            raise PgmTruncatedError("unexpected end of data inside PGM header")
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j] != ord("#"):
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def decode_pgm(data: bytes) -> Image:
    """Decode binary (P5) or ASCII (P2) PGM bytes into an Image."""
    if not isinstance(data, (bytes, bytearray)):
        raise PgmDecodeError("PGM input must be a byte sequence")
    data = bytes(data)
    if len(data) < 2:
        raise PgmMagicError("input too short for a PGM magic number")
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise PgmMagicError(f"unsupported magic number {magic!r}")

    tokens, pos = _pgm_tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PgmHeaderError(f"non-numeric PGM header token in {tokens!r}") from None
    if width < 1 or height < 1:
        raise PgmHeaderError(f"invalid dimensions {width}x{height}")
    if maxval > 255:
        raise PgmMaxvalError(f"maxval {maxval} exceeds 255")
    if maxval < 1:
        raise PgmMaxvalError(f"maxval {maxval} must be >= 1")

    npx = width * height
    if magic == b"P5":
        # Exactly one whitespace byte separates maxval from the raster.
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise PgmTruncatedError("missing raster after P5 header")
        raster = data[pos + 1 : pos + 1 + npx]
        if len(raster) < npx:
            raise PgmTruncatedError(
                f"raster holds {len(raster)} bytes, expected {npx}"
            )
        arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
        if maxval < 255 and int(arr.max(initial=0)) > maxval:
            raise PgmHeaderError("sample value exceeds declared maxval")
        return Image(arr.copy())

    text = data[pos:].split()
    values = []
    for tok in text:
        if tok.startswith(b"#"):
            continue
        try:
            v = int(tok)
        except ValueError:
            raise PgmHeaderError(f"non-numeric P2 sample {tok!r}") from None
        if v < 0 or v > maxval:
            raise PgmHeaderError(f"P2 sample {v} outside [0, {maxval}]")
        values.append(v)
        if len(values) == npx:
            break
    if len(values) < npx:
        raise PgmTruncatedError(f"P2 raster holds {len(values)} samples, expected {npx}")
    return Image.from_pixels(width, height, values)


def encode_pgm(img: Image) -> bytes:
    """Encode an Image as binary P5 with maxval 255."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.array.tobytes()


# --------------------------------------------------------------------------
# Identity textures
# --------------------------------------------------------------------------

def identity_base_grid(identity_seed: int) -> np.ndarray:
    """The 16x16 cell grid that defines an identity's appearance."""
    rng = XorShift64Star(identity_seed)
    cells = np.array(
        rng.int_block(256, TEXTURE_LOW, TEXTURE_HIGH), dtype=np.int64
    ).reshape(16, 16)
    # Guarantee outline contrast: border cells stay clear of mid-gray.
    border = np.zeros((16, 16), dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    weak = border & (np.abs(cells - TEXTURE_MID) < BORDER_MIN_CONTRAST)
    cells[weak & (cells >= TEXTURE_MID)] = TEXTURE_MID + BORDER_MIN_CONTRAST
    cells[weak & (cells < TEXTURE_MID)] = TEXTURE_MID - BORDER_MIN_CONTRAST
    return cells


def _upscale_cells(cells: np.ndarray, size: int) -> Image:
    """Bilinear upscale of a 16x16 cell grid to a size x size tile."""
    cells = cells.astype(np.float64)
    if size == 16:
        return Image(cells.astype(np.uint8))
    u = (np.arange(size) + 0.5) * 16.0 / size - 0.5
    k = np.clip(np.floor(u), 0, 14).astype(np.int64)
    f = np.clip(u - k, 0.0, 1.0)
    fy, fx = f[:, None], f[None, :]
    ky, kx = k[:, None], k[None, :]
    vals = (
        (1 - fy) * (1 - fx) * cells[ky, kx]
        + (1 - fy) * fx * cells[ky, kx + 1]
        + fy * (1 - fx) * cells[ky + 1, kx]
        + fy * fx * cells[ky + 1, kx + 1]
    )
    return Image(_round_half_up(vals).astype(np.uint8))


def generate_identity_texture(identity_seed: int, size: int) -> Image:
    """Render an identity's face tile at the given edge size (>= 16).

    The 16x16 cell grid is upscaled with bilinear interpolation, so renders
    of one identity at different sizes stay mutually consistent after
    downsampling while distinct seeds stay near-orthogonal.
    """
    if size < 16:
        raise ImagingError(f"face size {size} below minimum 16")
    return _upscale_cells(identity_base_grid(identity_seed), size)


# --------------------------------------------------------------------------
# Capture-condition transforms
# --------------------------------------------------------------------------

def apply_illumination(img: Image, level: float) -> Image:
    """Scale all pixels by an illumination factor in [0, 1].

    8-bit quantization after scaling is intentional: near-dark levels
    collapse the texture that detection and matching rely on.
    """
    if not 0.0 <= level <= 1.0:
        raise ImagingError(f"illumination level {level} outside [0, 1]")
    vals = _round_half_up(img.array.astype(np.float64) * level)
    return Image(np.clip(vals, 0, 255).astype(np.uint8))


def apply_yaw(img: Image, yaw_degrees: int, bg_seed: int) -> Image:
    """Model head rotation as loss of identity signal, not image energy.

    The leftmost round(cos(yaw) * width) columns survive; the rest are
    replaced with anonymous texture noise matched to the face texture
    distribution (uniform cells on [64, 192], same spatial statistics), so
    the occluded area still looks camera-plausible but carries no identity.
    """
    if yaw_degrees not in SUPPORTED_YAW_DEGREES:
        raise ImagingError(f"unsupported yaw angle {yaw_degrees}")
    if img.width != img.height:
        raise ImagingError("yaw requires a square face tile")
    if yaw_degrees == 0:
        return img.copy()
    visible = int(math.floor(math.cos(math.radians(yaw_degrees)) * img.width + 0.5))
    out = img.array.copy()
    hidden = img.width - visible
    if hidden > 0:
        rng = XorShift64Star(bg_seed)
        cells = np.array(
            rng.int_block(256, TEXTURE_LOW, TEXTURE_HIGH), dtype=np.int64
        ).reshape(16, 16)
        noise_tile = _upscale_cells(cells, img.width)
        out[:, visible:] = noise_tile.array[:, visible:]
    return Image(out)


def apply_accessory(img: Image, kind: str) -> Image:
    """Overlay an accessory; only sunglasses are modeled.

    The eye band (rows 25% .. 43.75% of the height) becomes a flat lens
    tone, removing that band's identity texture.
    """
    if kind != "sunglasses":
        raise ImagingError(f"unsupported accessory kind {kind!r}")
    if img.width != img.height or img.height < 16:
        raise ImagingError("sunglasses require a square face of height >= 16")
    top = int(math.floor(0.25 * img.height + 0.5))
    bottom = int(math.floor(0.4375 * img.height + 0.5))
    out = img.array.copy()
    out[top:bottom, :] = SUNGLASS_LEVEL
    return Image(out)


def apply_spoof(img: Image) -> Image:
    """3x3 box blur: a replayed photo-of-a-photo keeps coarse identity
    content but loses the fine texture liveness checks look for."""
    if img.width < 3 or img.height < 3:
        raise ImagingError("spoof blur requires at least a 3x3 image")
    padded = np.pad(img.array.astype(np.int64), 1, mode="edge")
    total = np.zeros_like(img.array, dtype=np.int64)
    h, w = img.array.shape
    for dy in range(3):
        for dx in range(3):
            total += padded[dy : dy + h, dx : dx + w]
    # Exact round-half-up of total/9 in integer arithmetic.
    blurred = (2 * total + 9) // 18
    return Image(blurred.astype(np.uint8))


def resample(img: Image, out_w: int, out_h: int) -> Image:
    """Area-average resampling; every output pixel is the rounded mean of
    its source rectangle. Exact in integer arithmetic."""
    if out_w < 1 or out_h < 1:
        raise ImagingError("resample target dimensions must be >= 1")
    sums, count = _area_sums(img.array, out_w, out_h)
    vals = (2 * sums + count) // (2 * count)
    return Image(vals.astype(np.uint8))


def resample_mean(img: Image, out_w: int, out_h: int) -> np.ndarray:
    """Unrounded area means (float64) over the same grid as resample()."""
    if out_w < 1 or out_h < 1:
        raise ImagingError("resample target dimensions must be >= 1")
    sums, count = _area_sums(img.array, out_w, out_h)
    return sums.astype(np.float64) / float(count)


def _area_sums(arr: np.ndarray, out_w: int, out_h: int) -> tuple[np.ndarray, int]:
    """Exact per-cell sums over an out_h x out_w partition of the raster.

    The raster is replicated up to the least common multiple of source and
    target sizes, making every source rectangle an integer block.
    """
    h, w = arr.shape
    lx, ly = math.lcm(w, out_w), math.lcm(h, out_h)
    rx, ry = lx // w, ly // h
    bx, by = lx // out_w, ly // out_h
    big = np.repeat(np.repeat(arr.astype(np.int64), ry, axis=0), rx, axis=1)
    sums = big.reshape(out_h, by, out_w, bx).sum(axis=(1, 3))
    return sums, bx * by


# --------------------------------------------------------------------------
# Scene composition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacementSpec:
    """One synthetic face within a frame and its capture conditions."""

    identity_seed: int
    x: int
    y: int
    size: int
    illumination: float = 1.0
    yaw_degrees: int = 0
    accessory: str = "none"
    spoof: bool = False

    ALLOWED_SIZES = (16, 24, 32, 48, 64)

    def validate(self) -> None:
        if self.size not in self.ALLOWED_SIZES:
            raise ImagingError(f"size {self.size} not in {self.ALLOWED_SIZES}")
        if self.yaw_degrees not in SUPPORTED_YAW_DEGREES:
            raise ImagingError(f"yaw {self.yaw_degrees} not in {SUPPORTED_YAW_DEGREES}")
        if not 0.0 <= self.illumination <= 1.0:
            raise ImagingError(f"illumination {self.illumination} outside [0, 1]")
        if self.accessory not in ("none", "sunglasses"):
            raise ImagingError(f"unknown accessory {self.accessory!r}")

    def to_json(self) -> dict:
        return {
            "identity_seed": self.identity_seed,
            "x": self.x,
            "y": self.y,
            "size": self.size,
            "illumination": self.illumination,
            "yaw_degrees": self.yaw_degrees,
            "accessory": self.accessory,
            "spoof": self.spoof,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PlacementSpec":
        return cls(
            identity_seed=int(doc["identity_seed"]),
            x=int(doc["x"]),
            y=int(doc["y"]),
            size=int(doc["size"]),
            illumination=float(doc.get("illumination", 1.0)),
            yaw_degrees=int(doc.get("yaw_degrees", 0)),
            accessory=str(doc.get("accessory", "none")),
            spoof=bool(doc.get("spoof", False)),
        )


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of one synthetic test frame."""

    width: int
    height: int
    seed: int
    background_level: int = 128
    background_noise_sigma: float = 2.0
    placements: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "background_level": self.background_level,
            "background_noise_sigma": self.background_noise_sigma,
            "placements": [p.to_json() for p in self.placements],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        return cls(
            width=int(doc["width"]),
            height=int(doc["height"]),
            seed=int(doc["seed"]),
            background_level=int(doc.get("background_level", 128)),
            background_noise_sigma=float(doc.get("background_noise_sigma", 2.0)),
            placements=tuple(PlacementSpec.from_json(p) for p in doc.get("placements", [])),
        )


def render_placement(placement: PlacementSpec, yaw_bg_seed: int) -> Image:
    """Render one face tile through the full condition pipeline."""
    tile = generate_identity_texture(placement.identity_seed, placement.size)
    tile = apply_yaw(tile, placement.yaw_degrees, yaw_bg_seed)
    if placement.accessory != "none":
        tile = apply_accessory(tile, placement.accessory)
    tile = apply_illumination(tile, placement.illumination)
    if placement.spoof:
        tile = apply_spoof(tile)
    return tile


def compose_scene(spec: SceneSpec) -> tuple[Image, list[tuple[PlacementSpec, BoundingBox]]]:
    """Assemble a frame: noisy background plus rendered face placements.

    Returns the frame and exact ground-truth boxes in placement order.
    """
    if spec.width < 1 or spec.height < 1:
        raise ImagingError("scene dimensions must be >= 1")
    if not 0 <= spec.background_level <= 255:
        raise ImagingError("background level outside [0, 255]")
    boxes = []
    for placement in spec.placements:
        placement.validate()
        if (
            placement.x < 0
            or placement.y < 0
            or placement.x + placement.size > spec.width
            or placement.y + placement.size > spec.height
        ):
            raise ImagingError(f"placement at ({placement.x},{placement.y}) outside frame")
        boxes.append(BoundingBox(placement.x, placement.y, placement.size, placement.size))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if boxes[i].intersection_area(boxes[j]) > 0:
                raise ImagingError(f"placements {i} and {j} overlap")

    rng = XorShift64Star(spec.seed)
    noise = np.array(
        rng.gauss_block(spec.width * spec.height), dtype=np.float64
    ).reshape(spec.height, spec.width)
    frame = _round_half_up(spec.background_level + spec.background_noise_sigma * noise)
    frame = np.clip(frame, 0, 255).astype(np.uint8)

    ground_truth = []
    for index, placement in enumerate(spec.placements):
        tile = render_placement(placement, yaw_bg_seed=derive_seed(spec.seed, index + 1))
        frame[
            placement.y : placement.y + placement.size,
            placement.x : placement.x + placement.size,
        ] = tile.array
        ground_truth.append((placement, boxes[index]))
    return Image(frame), ground_truth
