"""Readers and writers for frames, fixation logs, manifests, feature maps and checkpoints.

File formats
------------
FMAP
    ``b"FMAP"`` followed by width, height and channel count as little-endian
    uint32, then ``height * width * channels`` little-endian float32 values in
    row-major order with the channel index varying fastest.
Checkpoint
    ``b"SNCK"``, a uint32 format version, a length-prefixed JSON header
    describing the layer topology, a sequence of named float64 parameter
    blocks with explicit shapes, and a trailing CRC32 over everything before it.
"""
from __future__ import annotations

import csv
import json
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

FMAP_MAGIC = b"FMAP"
CKPT_MAGIC = b"SNCK"
CKPT_VERSION = 1

IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".ppm", ".pgm"}
FIXATION_HEADER = ["video_id", "frame", "x", "y", "subject"]


class FormatError(ValueError):
    """A file exists but its content does not follow the expected layout."""


@dataclass
class FrameSequence:
    video_id: str
    frames: list[np.ndarray]

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Fixation:
    video_id: str
    frame: int
    x: int
    y: int
    subject: str


@dataclass
class FixationLog:
    records: list[Fixation] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def for_frame(self, video_id: str, frame: int) -> list[tuple[int, int]]:
        return [(r.x, r.y) for r in self.records if r.video_id == video_id and r.frame == frame]

    def by_frame(self, video_id: str) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {}
        for r in self.records:
            if r.video_id == video_id:
                out.setdefault(r.frame, []).append((r.x, r.y))
        return out


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    frame_dir: Path
    fixation_file: Path
    width: int
    height: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    split: str = "train"


# ---------------------------------------------------------------------------
# frames

def _frame_number(path: Path) -> int:
    digits = re.findall(r"\d+", path.stem)
    if not digits:
        raise FormatError(f"frame file without an index: {path.name}")
    return int(digits[-1])


def load_frame(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(img, dtype=np.float64) / 65535.0
                arr = np.repeat(arr[..., None], 3, axis=2)
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise FormatError(f"unreadable frame {path}: {exc}") from exc
    return arr


def load_frame_sequence(directory: str | Path, video_id: str | None = None) -> FrameSequence:
    """Load every still image in ``directory`` in ascending numeric order.

    Pixel values are scaled to [0, 1] and returned as H x W x 3 float64 arrays.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    files = [p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise FormatError(f"no frames found in {directory}")
    files.sort(key=lambda p: (_frame_number(p), p.name))
    frames = []
    for p in files:
        frame = load_frame(p)
        if frames and frame.shape != frames[0].shape:
            raise FormatError(
                f"inconsistent frame dimensions in {directory}: "
                f"{p.name} is {frame.shape[:2]}, expected {frames[0].shape[:2]}"
            )
        frames.append(frame)
    return FrameSequence(video_id or directory.name, frames)


def save_frame(frame: np.ndarray, path: str | Path) -> None:
    arr = np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


# ---------------------------------------------------------------------------
# fixations

def load_fixations(
    path: str | Path,
    frame_size: tuple[int, int] | dict[str, tuple[int, int]] | None = None,
    frame_counts: dict[str, int] | None = None,
) -> FixationLog:
    """Parse a fixation CSV (``video_id,frame,x,y,subject``).

    ``frame_size`` is either one ``(width, height)`` pair for every video or a
    mapping from video id to its pair; when given, coordinates outside the
    frame are rejected. Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"fixation file not found: {path}")
    log = FixationLog()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FIXATION_HEADER:
            raise FormatError(f"{path}: expected header {','.join(FIXATION_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise FormatError(f"{path}: malformed row {rowno}: expected 5 fields")
            vid, frame, x, y, subject = (c.strip() for c in row)
            try:
                frame_i, x_i, y_i = int(frame), int(x), int(y)
            except ValueError:
                raise FormatError(f"{path}: malformed row {rowno}: non-integer frame/x/y") from None
            size = frame_size.get(vid) if isinstance(frame_size, dict) else frame_size
            if size is not None:
                w, h = size
                if not (0 <= x_i < w and 0 <= y_i < h):
                    raise FormatError(
                        f"{path}: row {rowno}: coordinate ({x_i},{y_i}) outside {w}x{h} frame"
                    )
            if frame_i < 0 or (frame_counts and vid in frame_counts and frame_i >= frame_counts[vid]):
                raise FormatError(f"{path}: row {rowno}: frame index {frame_i} out of range")
            log.records.append(Fixation(vid, frame_i, x_i, y_i, subject))
    return log


def write_fixations(log: FixationLog | list[Fixation], path: str | Path) -> None:
    records = log.records if isinstance(log, FixationLog) else log
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIXATION_HEADER)
        for r in records:
            w.writerow([r.video_id, r.frame, r.x, r.y, r.subject])


# ---------------------------------------------------------------------------
# manifests

def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a tab-separated manifest; relative paths resolve against its folder.

    Lines starting with ``#`` are comments, except ``#split=<name>``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    entries, split, seen = [], "train", set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*split\s*=\s*(\w+)", line)
            if m:
                split = m.group(1)
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"{path}: line {lineno}: expected 5 tab-separated fields")
        vid, fdir, fix, w, h = parts
        if vid in seen:
            raise FormatError(f"{path}: line {lineno}: duplicate video id {vid!r}")
        seen.add(vid)
        try:
            width, height = int(w), int(h)
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-integer frame size") from None
        entries.append(ManifestEntry(vid, base / fdir, base / fix, width, height))
    return DatasetManifest(entries, split)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [f"#split={manifest.split}"]
    for e in manifest.entries:
        fdir = _relative(e.frame_dir, path.parent)
        fix = _relative(e.fixation_file, path.parent)
        lines.append(f"{e.video_id}\t{fdir}\t{fix}\t{e.width}\t{e.height}")
    path.write_text("\n".join(lines) + "\n")


def _relative(p: Path, base: Path) -> str:
    try:
        return str(Path(p).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p)


def load_video(entry: ManifestEntry) -> tuple[FrameSequence, FixationLog]:
    seq = load_frame_sequence(entry.frame_dir, entry.video_id)
    if (seq.width, seq.height) != (entry.width, entry.height):
        raise FormatError(
            f"{entry.video_id}: frames are {seq.width}x{seq.height}, "
            f"manifest says {entry.width}x{entry.height}"
        )
    log = load_fixations(
        entry.fixation_file,
        frame_size=(entry.width, entry.height),
        frame_counts={entry.video_id: seq.frame_count},
    )
    return seq, log


# ---------------------------------------------------------------------------
# FMAP plane stacks

def write_plane_stack(stack: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(stack)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"plane stack must be H x W x C, got shape {arr.shape}")
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC + struct.pack("<III", w, h, c) + payload)


def read_plane_stack(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FMAP_MAGIC:
        raise FormatError(f"{path}: bad magic")
    w, h, c = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * w * h * c
    if len(data) != expected:
        raise FormatError(f"{path}: truncated payload ({len(data)} of {expected} bytes)")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, c).astype(np.float32)


def write_pgm(values: np.ndarray, path: str | Path) -> None:
    """Write a single-channel map in [0, 1] as 8-bit binary PGM (P5)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    h, w = arr.shape
    pix = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: bad magic")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if maxval < 256 else ">u2"
    n = w * h * (1 if maxval < 256 else 2)
    if len(data) - pos < n:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(data[pos:pos + n], dtype=dtype).reshape(h, w).astype(np.float64) / maxval


def read_map(path: str | Path) -> np.ndarray:
    """Load a single-channel saliency map from FMAP or PGM."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_plane_stack(path)[..., 0].astype(np.float64)


# ---------------------------------------------------------------------------
# checkpoints

def save_model(model, path: str | Path, solver_state=None) -> None:
    """Serialize a ``NetworkModel`` (and optionally the solver's momentum state)."""
    from dataclasses import asdict

    header = {
        "input_shape": list(model.input_shape),
        "layers": [asdict(spec) for spec in model.layers],
        "meta": model.meta,
    }
    blocks: list[tuple[str, np.ndarray]] = []
    for i, params in enumerate(model.params):
        for name in sorted(params):
            blocks.append((f"layer{i}.{name}", params[name]))
    if solver_state is not None:
        header["solver"] = {"iteration": int(solver_state.iteration)}
        for i, vel in enumerate(solver_state.velocity):
            for name in sorted(vel):
                blocks.append((f"velocity{i}.{name}", vel[name]))

    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(hdr)) + hdr)
    out += struct.pack("<I", len(blocks))
    for name, arr in blocks:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def load_model(path: str | Path, with_solver_state: bool = False):
    from .cnn.network import LayerSpec, NetworkModel
    from .cnn.solver import SolverState

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise FormatError(f"{path}: checksum failure (truncated or corrupted file)")
    pos = 12
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (nblocks,) = struct.unpack_from("<I", data, pos)
    pos += 4
    blocks = {}
    for _ in range(nblocks):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        blocks[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += 8 * count

    layers = []
    for d in header["layers"]:
        if d.get("kernel") is not None:
            d["kernel"] = tuple(d["kernel"])
        layers.append(LayerSpec(**d))
    params = [{} for _ in layers]
    velocity = [{} for _ in layers]
    for name, arr in blocks.items():
        prefix, pname = name.split(".", 1)
        if prefix.startswith("layer"):
            params[int(prefix[5:])][pname] = arr
        elif prefix.startswith("velocity"):
            velocity[int(prefix[8:])][pname] = arr
    model = NetworkModel(layers, params, tuple(header["input_shape"]), header.get("meta", {}))
    if not with_solver_state:
        return model
    state = None
    if "solver" in header:
        state = SolverState(iteration=header["solver"]["iteration"], velocity=velocity)
    return model, state
