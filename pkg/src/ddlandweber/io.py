"""File formats: 8-bit PGM images, sinogram CSV, training manifests."""
import csv
import os

import numpy as np
from PIL import Image

from .core import as_grid

__all__ = [
    "IngestionError",
    "read_pgm",
    "write_pgm",
    "write_sinogram_csv",
    "read_sinogram_csv",
    "read_manifest",
    "write_manifest",
]


class IngestionError(ValueError):
    """Raised when an input file cannot be read or has the wrong shape."""


def read_pgm(path, expected_shape=None):
    """Grayscale image scaled to ``[0, 1]`` (8-bit: value / 255)."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "I"):
                raise IngestionError(f"{path}: not a grayscale image (mode {im.mode})")
            maxval = 255.0 if im.mode == "L" else 65535.0
            arr = np.asarray(im, dtype=np.float64) / maxval
    except IngestionError:
        raise
    except Exception as exc:
        raise IngestionError(f"{path}: cannot read image ({exc})") from exc
    if expected_shape is not None and arr.shape != tuple(expected_shape):
        raise IngestionError(f"{path}: shape {arr.shape}, expected {tuple(expected_shape)}")
    return arr


def write_pgm(path, image, vmin=0.0, vmax=1.0):
    """Write ``image`` as binary 8-bit PGM after mapping ``[vmin, vmax]`` to ``[0, 255]``."""
    u = as_grid(image, name="image")
    scale = vmax - vmin if vmax > vmin else 1.0
    q = np.clip(np.rint((u - vmin) / scale * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PPM")


def write_sinogram_csv(path, sino, angles_degrees):
    """Rows ``s_index,theta_degrees,value`` in column-major order (all bins of one angle first)."""
    sino = as_grid(sino, name="sinogram")
    if sino.shape[1] != len(angles_degrees):
        raise ValueError("sinogram columns do not match the number of angles")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s_index", "theta_degrees", "value"])
        for a, theta in enumerate(angles_degrees):
            for j in range(sino.shape[0]):
                w.writerow([j, repr(float(theta)), repr(float(sino[j, a]))])


def read_sinogram_csv(path):
    """Return ``(sinogram, angles_degrees)``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    if not rows or rows[0] != ["s_index", "theta_degrees", "value"]:
        raise IngestionError(f"{path}: missing sinogram CSV header")
    body = rows[1:]
    try:
        s_idx = np.array([int(r[0]) for r in body])
        theta = np.array([float(r[1]) for r in body])
        vals = np.array([float(r[2]) for r in body])
    except (ValueError, IndexError) as exc:
        raise IngestionError(f"{path}: malformed row ({exc})") from exc
    angles = list(dict.fromkeys(theta.tolist()))
    nb = int(s_idx.max()) + 1 if body else 0
    if nb * len(angles) != len(body):
        raise IngestionError(f"{path}: {len(body)} rows do not form a full bins x angles grid")
    sino = vals.reshape((nb, len(angles)), order="F")
    return sino, np.array(angles)


def read_manifest(path):
    """List of ``(input_path, output_path)``; relative paths resolve against the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 'input_path,output_path'")
            pairs.append(tuple(os.path.join(base, p) for p in parts))
    if not pairs:
        raise IngestionError(f"{path}: manifest lists no pairs")
    return pairs


def write_manifest(path, pairs):
    with open(path, "w") as fh:
        for a, b in pairs:
            fh.write(f"{a},{b}\n")
