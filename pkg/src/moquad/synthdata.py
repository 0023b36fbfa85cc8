"""Synthetic moving-sprite videos with independently controlled appearance and motion.

Each video is a static value-noise background with a filled square sprite
moving at a constant integer velocity (wrapping toroidally at the borders).
The motion class fixes the velocity; the background is either unique per
video or shared per appearance class, so a model can solve instance
discrimination from the background alone unless something forces it to
look at motion.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

RAWVID_MAGIC = b"RVID"
RAWVID_VERSION = 1
RAWVID_HEADER = struct.Struct("<4sIIIII")
MIN_SPATIAL = 5

# (dy, dx) per direction: up, down, left, right
DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))

SPLITS = ("train", "test")
BACKGROUND_MODES = ("unique_per_video", "shared_per_class")
SPRITE_STARTS = ("random", "center")


@dataclass(eq=False)
class VideoRecord:
    id: int
    frames: np.ndarray  # uint8, (T, H, W, C)
    motion_class: int
    appearance_class: int
    split: str

    @property
    def T(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, VideoRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.motion_class == other.motion_class
            and self.appearance_class == other.appearance_class
            and self.split == other.split
            and self.frames.dtype == other.frames.dtype
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass
class DatasetConfig:
    num_train: int = 200
    num_test: int = 100
    T: int = 32
    H: int = 32
    W: int = 32
    C: int = 1
    num_motion_classes: int = 4
    num_appearance_classes: int = 4
    background_mode: str = "unique_per_video"
    seed: int = 0
    sprite_size: int = 6
    sprite_start: str = "random"  # "random" or "center"
    # motion classes whose appearance label (and, in shared mode, background) is tied to the class
    appearance_tied_motion_classes: list = field(default_factory=list)

    def validate(self):
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.H < MIN_SPATIAL or self.W < MIN_SPATIAL:
            raise ConfigError(f"H and W must be >= {MIN_SPATIAL}, got {self.H}x{self.W}")
        if self.C not in (1, 3):
            raise ConfigError(f"C must be 1 or 3, got {self.C}")
        if self.num_train <= 0 or self.num_test <= 0:
            raise ConfigError("num_train and num_test must be positive")
        if self.num_motion_classes < 2:
            raise ConfigError("num_motion_classes must be >= 2")
        if self.num_appearance_classes < 1:
            raise ConfigError("num_appearance_classes must be >= 1")
        if self.background_mode not in BACKGROUND_MODES:
            raise ConfigError(f"unknown background_mode {self.background_mode!r}")
        if self.sprite_start not in SPRITE_STARTS:
            raise ConfigError(f"unknown sprite_start {self.sprite_start!r}")
        if not 1 <= self.sprite_size < min(self.H, self.W):
            raise ConfigError(f"sprite_size must be in [1, min(H, W)), got {self.sprite_size}")
        for c in self.appearance_tied_motion_classes:
            if not 0 <= c < self.num_motion_classes:
                raise ConfigError(f"tied motion class {c} out of range")
        return self


def class_velocity(motion_class):
    """Per-frame (dy, dx) displacement for a motion class.

    Classes cycle through the four directions; every further block of four
    moves one pixel per frame faster.
    """
    dy, dx = DIRECTIONS[motion_class % 4]
    speed = 1 + motion_class // 4
    return dy * speed, dx * speed


def value_noise(rng, H, W, C, cells):
    """Bilinearly interpolated random lattice, values in [0, 1]."""
    lattice = rng.random((cells + 1, cells + 1, C))
    ys = np.linspace(0.0, cells, H, endpoint=False) + cells / (2 * H)
    xs = np.linspace(0.0, cells, W, endpoint=False) + cells / (2 * W)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx)


def _background(cfg, video_id, appearance_class):
    if cfg.background_mode == "unique_per_video":
        rng = np.random.default_rng([cfg.seed, 1, video_id])
    else:
        rng = np.random.default_rng([cfg.seed, 2, appearance_class])
    cells = 2 + appearance_class % 4
    tex = value_noise(rng, cfg.H, cfg.W, cfg.C, cells)
    # keep the background strictly darker than the sprite
    return np.round(tex * 160.0)


def sprite_positions(y0, x0, velocity, T, H, W):
    dy, dx = velocity
    t = np.arange(T)
    return (y0 + dy * t) % H, (x0 + dx * t) % W


def make_video(cfg, video_id):
    """Render one video. Pure function of (cfg, video_id)."""
    split = "train" if video_id < cfg.num_train else "test"
    motion_class = video_id % cfg.num_motion_classes
    rng = np.random.default_rng([cfg.seed, 0, video_id])
    appearance_class = int(rng.integers(cfg.num_appearance_classes))
    if motion_class in cfg.appearance_tied_motion_classes:
        appearance_class = motion_class % cfg.num_appearance_classes
    y0 = int(rng.integers(cfg.H))
    x0 = int(rng.integers(cfg.W))
    if cfg.sprite_start == "center":
        y0 = (cfg.H - cfg.sprite_size) // 2
        x0 = (cfg.W - cfg.sprite_size) // 2

    bg = _background(cfg, video_id, appearance_class)
    frames = np.broadcast_to(bg, (cfg.T, cfg.H, cfg.W, cfg.C)).copy()
    ys, xs = sprite_positions(y0, x0, class_velocity(motion_class), cfg.T, cfg.H, cfg.W)
    s = np.arange(cfg.sprite_size)
    for t in range(cfg.T):
        rows = (ys[t] + s) % cfg.H
        cols = (xs[t] + s) % cfg.W
        frames[t][np.ix_(rows, cols)] = 255.0
    return VideoRecord(
        id=video_id,
        frames=frames.astype(np.uint8),
        motion_class=motion_class,
        appearance_class=appearance_class,
        split=split,
    )


def generate_dataset(config):
    config.validate()
    n = config.num_train + config.num_test
    return [make_video(config, i) for i in range(n)]


# -- rawvid I/O --------------------------------------------------------------


def write_rawvid(record, path):
    frames = np.ascontiguousarray(record.frames, dtype=np.uint8)
    if frames.ndim != 4:
        raise FormatError(f"frames must be 4-D (T, H, W, C), got shape {frames.shape}")
    T, H, W, C = frames.shape
    with open(path, "wb") as f:
        f.write(RAWVID_HEADER.pack(RAWVID_MAGIC, RAWVID_VERSION, T, H, W, C))
        f.write(frames.tobytes())


def read_rawvid(path, id=-1, motion_class=-1, appearance_class=-1, split="train"):
    """Read a rawvid file. Labels are not stored in the file; pass them from the manifest."""
    data = Path(path).read_bytes()
    if len(data) < RAWVID_HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    magic, version, T, H, W, C = RAWVID_HEADER.unpack_from(data, 0)
    if magic != RAWVID_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != RAWVID_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    for i, d in enumerate((T, H, W, C)):
        if d == 0:
            raise FormatError("zero dimension", offset=8 + 4 * i)
    payload = T * H * W * C
    available = len(data) - RAWVID_HEADER.size
    if payload > available:
        if payload > 2**40:
            raise FormatError(f"dimension overflow ({T}x{H}x{W}x{C})", offset=8)
        raise FormatError(f"truncated payload: need {payload} bytes, have {available}",
                          offset=len(data))
    if payload < available:
        raise FormatError("trailing bytes after payload", offset=RAWVID_HEADER.size + payload)
    frames = np.frombuffer(data, dtype=np.uint8, offset=RAWVID_HEADER.size).reshape(T, H, W, C)
    return VideoRecord(id=id, frames=frames.copy(), motion_class=motion_class,
                       appearance_class=appearance_class, split=split)


def write_dataset(records, directory):
    """Write every record as ``videos/<id>.rvid`` plus a JSON-lines ``manifest.jsonl``."""
    directory = Path(directory)
    (directory / "videos").mkdir(parents=True, exist_ok=True)
    lines = []
    for r in records:
        rel = f"videos/{r.id:06d}.rvid"
        write_rawvid(r, directory / rel)
        lines.append(json.dumps({"id": r.id, "path": rel, "motion_class": r.motion_class,
                                 "appearance_class": r.appearance_class, "split": r.split}))
    (directory / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return directory / "manifest.jsonl"


def load_dataset(directory):
    directory = Path(directory)
    manifest = directory / "manifest.jsonl"
    if not manifest.exists():
        raise FileNotFoundError(manifest)
    records = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        records.append(read_rawvid(directory / entry["path"], id=entry["id"],
                                   motion_class=entry["motion_class"],
                                   appearance_class=entry["appearance_class"],
                                   split=entry["split"]))
    return records
