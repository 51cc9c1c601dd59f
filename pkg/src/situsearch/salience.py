"""Category-independent location prior from simple center-surround salience.

The map is a lightweight take on classic center-surround salience: intensity
difference-of-Gaussians at three scales, color-opponency channels when RGB is
available, and gradient-orientation energy at four orientations. Channel maps
are individually normalized and summed, then heavily smoothed (the raw
response sits on object edges, but proposals are sampled at object centers)
and renormalized into a probability distribution over grid cells.

The smoothing std is a fixed fraction of the normalized image width; channel
weights are equal and the pyramid is fixed, because the prior only needs to
be qualitatively right: it nudges search toward foreground-object regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, ParseError
from .gaussian import LocationMap, grid_shape
from .geometry import ImageFrame

CENTER_SIGMAS = (2.0, 4.0, 8.0)  # in rasterization cells
SURROUND_FACTOR = 4.0
ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
SMOOTHING_FRACTION = 0.10  # of normalized image width
WORKING_CELL = 4.0  # scaled pixels per cell while computing channels

SALIENCE_MAGIC = "SALIENCE v1"


@dataclass(eq=False)
class SalienceMap(LocationMap):
    """A LocationMap whose mass came from image salience rather than a model."""


def default_epsilon(num_cells: int) -> float:
    return 1e-6 / num_cells


def smooth_grid(grid: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing with reflected boundaries (mass-preserving)."""
    if sigma <= 0:
        return np.array(grid, dtype=float)
    return ndimage.gaussian_filter(np.asarray(grid, dtype=float), sigma=sigma, mode="reflect")


def _resize(grid: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to an exact shape."""
    if grid.shape == shape:
        return grid
    zoom = (shape[0] / grid.shape[0], shape[1] / grid.shape[1])
    out = ndimage.zoom(grid, zoom, order=1, mode="nearest", grid_mode=True)
    # zoom rounds its output shape; trim or edge-pad the stray row/column
    out = out[: shape[0], : shape[1]]
    if out.shape != shape:
        pad = ((0, shape[0] - out.shape[0]), (0, shape[1] - out.shape[1]))
        out = np.pad(out, pad, mode="edge")
    return out


def _normalized(channel: np.ndarray) -> np.ndarray:
    peak = float(channel.max())
    if peak < 1e-9:  # numerically flat: no signal, not structure to amplify
        return np.zeros_like(channel)
    return channel / peak


def compute_salience(
    image: np.ndarray, frame: ImageFrame, cell_size: float = 1.0
) -> SalienceMap:
    """Salience distribution over the rasterization grid of a frame.

    ``image`` is a 2-D luminance array or an (H, W, 3) RGB array in [0, 1]
    whose pixel dimensions match the frame's original size.
    """
    img = np.asarray(image, dtype=float)
    if img.size == 0:
        raise InvalidInputError("image is empty")
    if img.ndim == 3 and img.shape[2] == 3:
        rgb = img
        lum = img.mean(axis=2)
    elif img.ndim == 2:
        rgb = None
        lum = img
    else:
        raise InvalidInputError(f"expected 2-d or (H, W, 3) image, got shape {img.shape}")
    if lum.shape != (int(round(frame.orig_height)), int(round(frame.orig_width))):
        raise InvalidInputError(
            f"image shape {lum.shape} does not match frame "
            f"{int(frame.orig_height)}x{int(frame.orig_width)}"
        )

    final_shape = grid_shape(frame, cell_size)
    working_cell = max(cell_size, WORKING_CELL)
    work_shape = grid_shape(frame, working_cell)
    cells_per_working = working_cell / cell_size

    channels = [_resize(lum, work_shape)]
    if rgb is not None:
        r, g, b = (_resize(rgb[:, :, i], work_shape) for i in range(3))
        channels.append(r - g)
        channels.append(b - (r + g) / 2)

    total = np.zeros(work_shape)
    for chan in channels:
        for sigma_cells in CENTER_SIGMAS:
            sigma = sigma_cells / cells_per_working
            center = smooth_grid(chan, sigma)
            surround = smooth_grid(chan, sigma * SURROUND_FACTOR)
            total += _normalized(np.abs(center - surround))

    gy, gx = np.gradient(channels[0])
    for degrees in ORIENTATIONS:
        theta = math.radians(degrees)
        energy = np.abs(math.cos(theta) * gx + math.sin(theta) * gy)
        total += _normalized(smooth_grid(energy, 2.0 / cells_per_working))

    sigma_smooth = SMOOTHING_FRACTION * frame.norm_width / working_cell
    total = smooth_grid(total, sigma_smooth)
    total = _resize(total, final_shape)
    total = np.maximum(total, 0.0)
    total += default_epsilon(total.size) * max(float(total.sum()), 1.0)
    return SalienceMap(frame=frame, cell_size=cell_size, grid=total)


def save_salience(salience: SalienceMap, path: str | Path) -> None:
    rows, cols = salience.grid.shape
    lines = [SALIENCE_MAGIC, f"{rows} {cols}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in salience.grid]
    Path(path).write_text("\n".join(lines) + "\n")


def load_salience(path: str | Path, frame: ImageFrame, cell_size: float = 1.0) -> SalienceMap:
    """Read a SALIENCE v1 grid and normalize it against the expected frame."""
    path = Path(path)
    text = path.read_text().strip().splitlines()
    if not text or text[0].strip() != SALIENCE_MAGIC:
        raise ParseError(f"{path}:1: expected header {SALIENCE_MAGIC!r}")
    try:
        rows, cols = (int(t) for t in text[1].split())
        values = np.array(" ".join(text[2:]).split(), dtype=float)
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed salience file ({exc})") from exc
    if values.size != rows * cols:
        raise ParseError(f"{path}: expected {rows * cols} values, got {values.size}")
    grid = values.reshape(rows, cols)
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise InvalidInputError(f"{path}: salience values must be finite and non-negative")
    expected = grid_shape(frame, cell_size)
    if (rows, cols) != expected:
        raise InvalidInputError(
            f"{path}: grid {rows}x{cols} does not match expected {expected[0]}x{expected[1]}"
        )
    if float(grid.sum()) <= 0:
        grid = np.full((rows, cols), 1.0 / (rows * cols))
    return SalienceMap(frame=frame, cell_size=cell_size, grid=grid)


def combine(location: LocationMap, salience: SalienceMap, epsilon: float | None = None) -> LocationMap:
    """Pointwise product of two maps plus a floor, renormalized.

    The floor keeps every cell reachable even where the supports are
    disjoint; by default it is 1e-6 spread across the grid.
    """
    if location.grid.shape != salience.grid.shape:
        raise InvalidInputError(
            f"grid shapes differ: {location.grid.shape} vs {salience.grid.shape}"
        )
    if epsilon is None:
        epsilon = default_epsilon(location.grid.size)
    if epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    product = location.grid * salience.grid + epsilon
    return LocationMap(frame=location.frame, cell_size=location.cell_size, grid=product)
