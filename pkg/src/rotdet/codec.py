"""Bidirectional mapping between raw grid predictions and image-space boxes.

A raw prediction slot holds the transformed 6-tuple
``(tx, ty, tw, th, ttheta, tconf)`` for one (level, anchor, cell).  Decoding
to image space:

    bx     = s_k * (j + Sig(tx))          bw    = w_anchor * exp(tw)
    by     = s_k * (i + Sig(ty))          bh    = h_anchor * exp(th)
    btheta = alpha * Sig(ttheta) - beta   bconf = Sig(tconf)

Encoding a ground-truth box to regression targets:

    tx = bx/s_k - floor(bx/s_k)           tw = ln(bw / w_anchor)
    ty = by/s_k - floor(by/s_k)           th = ln(bh / h_anchor)
    cell = (i, j) = (floor(by/s_k), floor(bx/s_k))

Grid/anchor configuration can be read from a plain-text key-value file; see
``load_detector_config`` for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import PI, TWO_PI, RotatedBox
from .postprocess import Detection


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


class OutOfBoundsError(ValueError):
    """Raised when a box center falls outside the image."""


# Sigmoid inversion clamps its argument into [eps, 1-eps] to avoid infinities
# at the range edges.
SIGMOID_INV_EPS = 1e-7


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def sigmoid_inv(p):
    p = np.clip(np.asarray(p, dtype=np.float64), SIGMOID_INV_EPS, 1.0 - SIGMOID_INV_EPS)
    out = np.log(p / (1.0 - p))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GridSpec:
    """One pyramid level: stride ``s`` pixels per cell over an (h, w) image."""

    level: int
    stride: int
    image_h: int
    image_w: int

    def __post_init__(self):
        if self.stride <= 0:
            raise ConfigError(f"stride must be positive, got {self.stride}")
        if self.image_h % self.stride or self.image_w % self.stride:
            raise ConfigError(
                f"image size ({self.image_h}, {self.image_w}) not divisible by stride {self.stride}"
            )

    @property
    def rows(self) -> int:
        return self.image_h // self.stride

    @property
    def cols(self) -> int:
        return self.image_w // self.stride


@dataclass(frozen=True)
class AnchorSet:
    """Exactly three (w, h) anchor sizes per grid level, in pixels."""

    by_level: dict[int, tuple[tuple[float, float], ...]]

    def __post_init__(self):
        normalized = {}
        for level, pairs in self.by_level.items():
            pairs = tuple((float(w), float(h)) for w, h in pairs)
            if len(pairs) != 3:
                raise ConfigError(f"level {level} must have exactly 3 anchors, got {len(pairs)}")
            for w, h in pairs:
                if w <= 0 or h <= 0:
                    raise ConfigError(f"anchor sizes must be positive, got ({w}, {h})")
            normalized[int(level)] = pairs
        object.__setattr__(self, "by_level", normalized)

    def get(self, level: int) -> tuple[tuple[float, float], ...]:
        return self.by_level[level]


@dataclass(frozen=True)
class CodecParams:
    """Angle decode parameters; predictions land in ``[-beta, alpha - beta)``."""

    alpha: float = TWO_PI
    beta: float = PI

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


@dataclass
class RawPredictions:
    """Per-level arrays of raw slots, shaped (3, rows, cols, 6).

    Component order along the last axis: tx, ty, tw, th, ttheta, tconf.
    """

    levels: dict[int, np.ndarray]

    @classmethod
    def zeros(cls, grids) -> "RawPredictions":
        return cls(
            {g.level: np.zeros((3, g.rows, g.cols, 6)) for g in grids}
        )

    def copy(self) -> "RawPredictions":
        return RawPredictions({k: v.copy() for k, v in self.levels.items()})


class EncodedTarget(NamedTuple):
    tx: float
    ty: float
    tw: float
    th: float
    i: int
    j: int


def decode(
    raw: np.ndarray,
    grid: GridSpec,
    anchor: tuple[float, float],
    i: int,
    j: int,
    params: CodecParams = CodecParams(),
) -> Detection:
    """Decode one raw 6-component slot at cell ``(i, j)`` into a detection.

    The decoded angle is not canonicalized: it reflects the prediction's own
    (w, h, theta) parameterization.
    """
    if not (0 <= i < grid.rows and 0 <= j < grid.cols):
        raise IndexError(f"cell ({i}, {j}) outside {grid.rows}x{grid.cols} grid")
    t = np.asarray(raw, dtype=np.float64)
    if t.shape != (6,):
        raise ValueError(f"expected 6 components, got shape {t.shape}")
    s = float(grid.stride)
    box = RotatedBox(
        s * (j + sigmoid(t[0])),
        s * (i + sigmoid(t[1])),
        anchor[0] * math.exp(t[2]),
        anchor[1] * math.exp(t[3]),
        params.alpha * sigmoid(t[4]) - params.beta,
    )
    return Detection(box, sigmoid(t[5]))


def decode_all(
    raw: RawPredictions,
    grids,
    anchors: AnchorSet,
    params: CodecParams = CodecParams(),
) -> list[Detection]:
    """Decode every slot of every level, row-major within each level."""
    out: list[Detection] = []
    for grid in grids:
        t = raw.levels[grid.level]
        level_anchors = anchors.get(grid.level)
        s = float(grid.stride)
        sig = sigmoid(t)
        jj = np.arange(grid.cols)
        ii = np.arange(grid.rows)
        for n in range(3):
            aw, ah = level_anchors[n]
            bx = s * (jj[None, :] + sig[n, :, :, 0])
            by = s * (ii[:, None] + sig[n, :, :, 1])
            bw = aw * np.exp(t[n, :, :, 2])
            bh = ah * np.exp(t[n, :, :, 3])
            bt = params.alpha * sig[n, :, :, 4] - params.beta
            bc = sig[n, :, :, 5]
            for i in range(grid.rows):
                for j in range(grid.cols):
                    out.append(
                        Detection(
                            RotatedBox(bx[i, j], by[i, j], bw[i, j], bh[i, j], bt[i, j]),
                            float(bc[i, j]),
                        )
                    )
    return out


def encode_targets(gt: RotatedBox, grid: GridSpec, anchor: tuple[float, float]) -> EncodedTarget:
    """Regression targets and owning cell for a ground-truth box."""
    if not (0 <= gt.cx < grid.image_w and 0 <= gt.cy < grid.image_h):
        raise OutOfBoundsError(
            f"box center ({gt.cx}, {gt.cy}) outside image ({grid.image_h}, {grid.image_w})"
        )
    fx = gt.cx / grid.stride
    fy = gt.cy / grid.stride
    j = int(math.floor(fx))
    i = int(math.floor(fy))
    return EncodedTarget(fx - j, fy - i, math.log(gt.w / anchor[0]), math.log(gt.h / anchor[1]), i, j)


def encode_angle(theta: float, params: CodecParams = CodecParams()) -> float:
    """Raw value whose decode reproduces ``theta`` (clamped at range edges)."""
    return sigmoid_inv((theta + params.beta) / params.alpha)


@dataclass(frozen=True)
class DetectorConfig:
    """Grid strides, anchors and angle-range parameters for one image size."""

    image_h: int
    image_w: int
    strides: tuple[int, ...] = (8, 16, 32)
    anchors: AnchorSet = field(default_factory=lambda: default_anchors())
    params: CodecParams = field(default_factory=CodecParams)

    def grids(self) -> list[GridSpec]:
        return [
            GridSpec(level, stride, self.image_h, self.image_w)
            for level, stride in enumerate(self.strides, start=1)
        ]


def default_anchors(smallest: float = 20.0, largest: float = 400.0, aspect: float = 2.0) -> AnchorSet:
    """Nine anchors spread geometrically from ``smallest`` to ``largest`` px.

    Each size ``s`` becomes the pair ``(s / sqrt(aspect), s * sqrt(aspect))``
    so anchors are taller than wide; the three smallest go to level 1 (finest
    grid) and the three largest to level 3.
    """
    sizes = smallest * (largest / smallest) ** (np.arange(9) / 8.0)
    root = math.sqrt(aspect)
    pairs = [(s / root, s * root) for s in sizes]
    return AnchorSet({1: tuple(pairs[0:3]), 2: tuple(pairs[3:6]), 3: tuple(pairs[6:9])})


def default_config(image_size: int = 1024) -> DetectorConfig:
    return DetectorConfig(image_h=image_size, image_w=image_size)


def read_kv(path) -> dict[str, str]:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, value = stripped.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _parse_anchor_list(text: str, where: str):
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "x" not in item:
            raise ConfigError(f"{where}: anchor {item!r} must look like WxH")
        w, h = item.split("x", 1)
        try:
            pairs.append((float(w), float(h)))
        except ValueError as exc:
            raise ConfigError(f"{where}: bad anchor {item!r}") from exc
    return tuple(pairs)


def load_detector_config(path) -> DetectorConfig:
    """Read a detector config from a key-value file.

    Recognized keys (all optional except image size)::

        image_height = 1024
        image_width  = 1024
        strides      = 8, 16, 32
        anchors_level1 = 14.1x28.3, 20.6x41.1, 29.9x59.8
        anchors_level2 = ...
        anchors_level3 = ...
        alpha = 6.283185307179586
        beta  = 3.141592653589793
    """
    kv = read_kv(path)
    try:
        image_h = int(kv["image_height"])
        image_w = int(kv["image_width"])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: image size must be an integer") from exc

    strides = (8, 16, 32)
    if "strides" in kv:
        try:
            strides = tuple(int(s) for s in kv["strides"].split(","))
        except ValueError as exc:
            raise ConfigError(f"{path}: bad strides {kv['strides']!r}") from exc
        if tuple(sorted(strides)) != strides:
            raise ConfigError(f"{path}: strides must be strictly increasing")

    anchor_keys = [k for k in kv if k.startswith("anchors_level")]
    if anchor_keys:
        by_level = {}
        for key in anchor_keys:
            try:
                level = int(key.removeprefix("anchors_level"))
            except ValueError as exc:
                raise ConfigError(f"{path}: bad anchor key {key!r}") from exc
            by_level[level] = _parse_anchor_list(kv[key], f"{path}: {key}")
        if sorted(by_level) != list(range(1, len(strides) + 1)):
            raise ConfigError(f"{path}: anchors must cover levels 1..{len(strides)}")
        anchors = AnchorSet(by_level)
    else:
        anchors = default_anchors()

    try:
        params = CodecParams(float(kv.get("alpha", TWO_PI)), float(kv.get("beta", PI)))
    except ValueError as exc:
        raise ConfigError(f"{path}: alpha/beta must be numbers") from exc

    return DetectorConfig(image_h, image_w, strides, anchors, params)
