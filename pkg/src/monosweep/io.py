"""Readers/writers for PFM depth maps, PPM images and manifest files."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InvalidConfig


def write_pfm(path, data: np.ndarray) -> None:
    """Write a single-channel float32 PFM (little-endian, bottom-up rows)."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise InvalidConfig(f"PFM writer expects a 2D grid, got ndim={data.ndim}")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a float64 (H, W) array."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ConfigError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read(4 * w * h)
        if len(raw) != 4 * w * h:
            raise ConfigError(f"{path}: truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(float)


def write_ppm(path, image: np.ndarray) -> None:
    """Write a P6 binary PPM; float input in [0, 1] is quantised to uint8.

    Single-channel images are replicated to RGB.
    """
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidConfig(f"PPM writer expects (H, W) or (H, W, 3), got {img.shape}")
    if img.dtype != np.uint8:
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P5/P6 binary PPM into float64 in [0, 1]; RGB is kept as (H, W, 3)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"P5", b"P6"):
            raise ConfigError(f"{path}: unsupported PNM magic {magic!r}")
        fields = []
        while len(fields) < 3:
            line = fh.readline()
            if not line:
                raise ConfigError(f"{path}: truncated PNM header")
            line = line.split(b"#", 1)[0]
            fields.extend(line.split())
        w, h, maxval = (int(x) for x in fields)
        channels = 3 if magic == b"P6" else 1
        raw = fh.read(w * h * channels)
        if len(raw) != w * h * channels:
            raise ConfigError(f"{path}: truncated PNM payload")
    img = np.frombuffer(raw, dtype=np.uint8).astype(float) / maxval
    if channels == 3:
        return img.reshape(h, w, 3)
    return img.reshape(h, w)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, 3) image to (H, W) luminance; pass 2D through."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        return img
    return img @ np.array([0.299, 0.587, 0.114])


def write_manifest(path, entries: dict[str, str]) -> None:
    """Write key=value lines in insertion order."""
    with open(path, "w", encoding="ascii") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict[str, str]:
    """Read key=value lines; '#' starts a comment, blank lines are skipped."""
    entries: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, value = stripped.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries
