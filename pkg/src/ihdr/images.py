"""Image containers, exposure-bracket ingestion, and portable file I/O.

LDR frames live in the nonlinear display-referred domain, normalized to
[0, 1] regardless of the source bit depth.  HDR images live in the linear
irradiance domain and are only required to be finite and non-negative.
Grayscale conversion uses the ITU-R BT.601 weights throughout the package.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

MIN_SIDE = 8  # smallest usable LDR frame edge


class DataError(ValueError):
    """Malformed input data: bad files, bad headers, broken invariants."""


def _as_pixels(pixels, name):
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"{name} pixels must be HxWx3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} pixels contain non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LdrImage:
    """A nonlinear-domain frame in [0, 1] with its exposure metadata."""

    pixels: np.ndarray
    exposure_time: float
    ev: float = 0.0

    def __post_init__(self):
        arr = _as_pixels(self.pixels, "LdrImage")
        if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
            raise DataError(f"LdrImage must be at least {MIN_SIDE}x{MIN_SIDE}, got {arr.shape[:2]}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DataError(
                f"LdrImage pixels must lie in [0, 1], got range [{arr.min():g}, {arr.max():g}]"
            )
        if not self.exposure_time > 0:
            raise DataError(f"exposure_time must be positive, got {self.exposure_time!r}")
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "exposure_time", float(self.exposure_time))
        object.__setattr__(self, "ev", float(self.ev))

    @property
    def shape(self):
        return self.pixels.shape

    def luma(self) -> np.ndarray:
        """BT.601 grayscale projection, shape HxW."""
        return self.pixels @ LUMA_WEIGHTS


@dataclass(frozen=True)
class HdrImage:
    """A linear-domain irradiance map: finite, non-negative floats."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _as_pixels(self.pixels, "HdrImage")
        if arr.min() < 0.0:
            raise DataError(f"HdrImage pixels must be non-negative, min is {arr.min():g}")
        object.__setattr__(self, "pixels", arr)

    @property
    def shape(self):
        return self.pixels.shape

    def luma(self) -> np.ndarray:
        return self.pixels @ LUMA_WEIGHTS


@dataclass(frozen=True)
class Bracket:
    """An ordered exposure bracket of K >= 2 equally sized LDR frames."""

    frames: tuple
    reference_index: int | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise DataError(f"bracket requires K >= 2 frames, got {len(frames)}")
        h, w = frames[0].pixels.shape[:2]
        for i, frame in enumerate(frames):
            fh, fw = frame.pixels.shape[:2]
            if (fh, fw) != (h, w):
                raise DataError(
                    f"bracket frame {i} is {fh}x{fw} but frame 0 is {h}x{w} (dimension mismatch)"
                )
        if self.reference_index is not None:
            if not 0 <= self.reference_index < len(frames):
                raise DataError(
                    f"reference_index {self.reference_index} outside [0, {len(frames)})"
                )
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i) -> LdrImage:
        return self.frames[i]


@dataclass
class BracketManifest:
    """JSON-serializable description of a bracket on disk.

    ``entries`` is a list of ``(path, ev, exposure_time)`` tuples; paths are
    interpreted relative to the manifest file's directory.
    """

    entries: list = field(default_factory=list)
    reference_index: int | None = None

    def to_json(self) -> dict:
        doc = {
            "frames": [
                {"path": p, "ev": ev, "exposure_time": t} for p, ev, t in self.entries
            ]
        }
        if self.reference_index is not None:
            doc["reference_index"] = self.reference_index
        return doc

    @classmethod
    def from_json(cls, doc) -> "BracketManifest":
        if not isinstance(doc, dict) or "frames" not in doc:
            raise DataError("manifest JSON must be an object with a 'frames' list")
        entries = []
        for i, entry in enumerate(doc["frames"]):
            try:
                entries.append(
                    (str(entry["path"]), float(entry["ev"]), float(entry["exposure_time"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"manifest frame {i} is malformed: {exc}") from exc
        paths = [p for p, _, _ in entries]
        if len(set(paths)) != len(paths):
            raise DataError("manifest frame paths must be distinct")
        return cls(entries=entries, reference_index=doc.get("reference_index"))


def _atomic_write_bytes(path, payload: bytes):
    """Write-temp-then-rename so partially written outputs never appear."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_bracket(manifest_path) -> Bracket:
    """Load a bracket from a JSON manifest; see BracketManifest for the schema."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from exc
    manifest = BracketManifest.from_json(doc)
    if len(manifest.entries) < 2:
        raise DataError(f"bracket requires K >= 2 frames, manifest lists {len(manifest.entries)}")

    frames = []
    for rel_path, ev, exposure_time in manifest.entries:
        frame_path = manifest_path.parent / rel_path
        if not frame_path.exists():
            raise DataError(f"bracket frame missing: {frame_path}")
        frames.append(read_png16(frame_path, exposure_time=exposure_time, ev=ev))
    return Bracket(frames=tuple(frames), reference_index=manifest.reference_index)


def write_bracket(bracket: Bracket, out_dir, stem="frame") -> Path:
    """Write a bracket as 16-bit PNG frames plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, frame in enumerate(bracket.frames):
        name = f"{stem}_{i:02d}.png"
        write_png16(frame, out_dir / name)
        entries.append((name, frame.ev, frame.exposure_time))
    manifest = BracketManifest(entries=entries, reference_index=bracket.reference_index)
    manifest_path = out_dir / "manifest.json"
    _atomic_write_bytes(manifest_path, (json.dumps(manifest.to_json(), indent=2) + "\n").encode())
    return manifest_path


# ---------------------------------------------------------------------------
# PFM: binary Portable Float Map. Magic "PF" (color) / "Pf" (gray), then a
# "W H" line, then a scale line whose sign signals endianness (negative =
# little-endian), then 32-bit float rows stored bottom-to-top.
# ---------------------------------------------------------------------------

def write_pfm(image: HdrImage, path):
    """Write a color PFM (little-endian, scale -1.0). Round trip is bit exact."""
    pixels = image.pixels
    if not np.all(np.isfinite(pixels)):
        raise DataError("refusing to write non-finite values to PFM")
    h, w = pixels.shape[:2]
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    payload = np.flipud(pixels).astype("<f4").tobytes()
    _atomic_write_bytes(path, header + payload)


def read_pfm(path) -> HdrImage:
    """Read a PF (color) or Pf (gray, replicated to 3 channels) float map."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"PFM file not found: {path}")
    raw = path.read_bytes()

    def next_token(pos):
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"truncated PFM header in {path}")
        return raw[start:pos].decode("ascii", "replace"), pos

    magic, pos = next_token(0)
    if magic == "PF":
        channels = 3
    elif magic == "Pf":
        channels = 1
    else:
        raise DataError(f"not a PFM file (magic {magic!r}): {path}")
    try:
        width_s, pos = next_token(pos)
        height_s, pos = next_token(pos)
        scale_s, pos = next_token(pos)
        width, height, scale = int(width_s), int(height_s), float(scale_s)
    except ValueError as exc:
        raise DataError(f"malformed PFM header in {path}: {exc}") from exc
    if width <= 0 or height <= 0 or scale == 0.0:
        raise DataError(f"malformed PFM header in {path}: size {width}x{height}, scale {scale}")
    pos += 1  # single whitespace byte terminates the header
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(raw) - pos < count * 4:
        raise DataError(f"PFM payload truncated in {path}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    if not np.all(np.isfinite(data)):
        raise DataError(f"PFM payload contains non-finite values: {path}")
    pixels = np.flipud(data.reshape(height, width, channels)).astype(np.float64)
    if channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return HdrImage(pixels=pixels)


# ---------------------------------------------------------------------------
# PNG: 8- or 16-bit RGB for LDR frames. 16-bit codes map to [0, 1] via
# code / 65535 with round-half-up quantization on write.
# ---------------------------------------------------------------------------

def write_png16(image: LdrImage, path):
    """Write an LDR frame as 16-bit RGB PNG."""
    codes = np.floor(image.pixels * 65535.0 + 0.5).astype(np.uint16)
    ok, buf = cv2.imencode(".png", codes[:, :, ::-1])  # RGB -> BGR
    if not ok:
        raise DataError(f"PNG encoding failed for {path}")
    _atomic_write_bytes(path, buf.tobytes())


def read_png16(path, exposure_time=1.0, ev=0.0) -> LdrImage:
    """Read an 8- or 16-bit RGB PNG into a normalized LDR frame."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"PNG file not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"could not decode image: {path}")
    if raw.dtype == np.uint16:
        peak = 65535.0
    elif raw.dtype == np.uint8:
        peak = 255.0
    else:
        raise DataError(f"unsupported bit depth {raw.dtype} in {path} (expected 8 or 16)")
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    pixels = raw[:, :, ::-1].astype(np.float64) / peak  # BGR -> RGB
    return LdrImage(pixels=pixels, exposure_time=exposure_time, ev=ev)


# ---------------------------------------------------------------------------
# Frame statistics used for reference selection.
# ---------------------------------------------------------------------------

def mean_luminance(image: LdrImage) -> float:
    """Mean BT.601 luma over all pixels, in [0, 1]."""
    return float(image.luma().mean())


LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def sharpness(image: LdrImage) -> float:
    """Variance of the 3x3 Laplacian response of the luma channel.

    Replicate boundary handling, so a constant image scores exactly zero.
    """
    response = ndimage.correlate(image.luma(), LAPLACIAN_3X3, mode="nearest")
    return float(response.var())
