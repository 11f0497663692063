"""Test signals: the Shepp-Logan phantom, a fixed horizontal slice of it, and
seeded piecewise-constant signals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, TooSmallError

__all__ = [
    "Phantom1D",
    "Phantom2D",
    "SHEPP_LOGAN_ORIGINAL",
    "SHEPP_LOGAN_MODIFIED",
    "slice_row",
    "shepp_logan_2d",
    "shepp_logan_slice",
    "piecewise_constant",
]

# Columns: intensity, semi-axis a (x), semi-axis b (y), centre x0, centre y0,
# rotation in degrees (counter-clockwise). y points up, so image row 0 is y ~ +1.
SHEPP_LOGAN_ORIGINAL = np.array([
    [2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
    [-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
    [-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
    [-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
    [0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
    [0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
    [0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
    [0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
    [0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
    [0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
])

# Toft's high-contrast variant, same geometry.
SHEPP_LOGAN_MODIFIED = SHEPP_LOGAN_ORIGINAL.copy()
SHEPP_LOGAN_MODIFIED[:, 0] = [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]

_TABLES = {"original": SHEPP_LOGAN_ORIGINAL, "modified": SHEPP_LOGAN_MODIFIED}
# peak of the additive sum (the skull rim), used to map intensities into [0, 1]
_PEAKS = {"original": 2.0, "modified": 1.0}


MIN_SIDE = 16


@dataclass(frozen=True, eq=False)
class Phantom1D:
    samples: np.ndarray
    name: str
    edge_set: np.ndarray = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "edge_set", np.flatnonzero(np.diff(s)))

    @property
    def length(self) -> int:
        return self.samples.size


@dataclass(frozen=True, eq=False)
class Phantom2D:
    pixels: np.ndarray
    name: str

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


def _pixel_centres(n):
    # symmetric about 0 exactly: coordinate k and n-1-k are negatives of each other
    return (2.0 * np.arange(n) + 1.0 - n) / n


def ellipse_mask(x, y, row):
    """Boolean membership of the points (x, y) in the ellipse described by ``row``."""
    _, a, b, x0, y0, phi = row
    t = np.deg2rad(phi)
    c, s = np.cos(t), np.sin(t)
    dx, dy = x - x0, y - y0
    u = dx * c + dy * s
    v = dy * c - dx * s
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _rasterize(x, y, table, peak):
    img = np.zeros(np.broadcast(x, y).shape)
    for row in table:
        img[ellipse_mask(x, y, row)] += row[0]
    return np.clip(img / peak, 0.0, 1.0)


def shepp_logan_2d(n: int, variant: str = "original") -> Phantom2D:
    """Rasterize the 10-ellipse Shepp-Logan phantom on an n x n grid.

    Membership is tested at pixel centres, intensities add, and the result
    is divided by the rim peak so it lies in [0, 1].
    """
    if n < MIN_SIDE:
        raise TooSmallError(f"phantom side must be >= {MIN_SIDE}, got {n}")
    table = _TABLES[variant]
    c = _pixel_centres(n)
    x = c[None, :]
    y = -c[:, None]
    return Phantom2D(_rasterize(x, y, table, _PEAKS[variant]), f"shepp-logan-{variant}-{n}")


def slice_row(n: int) -> int:
    """Grid row used for the 1D slice.

    Row ``n // 2`` sits just below the centre line. It crosses the skull,
    the brain and both large tilted ellipses and nothing else, which gives
    8 edges at n = 128.
    """
    return n // 2


def shepp_logan_slice(n: int, variant: str = "original") -> Phantom1D:
    """Row :func:`slice_row` of the n x n rasterized phantom.

    Only that row is rasterized; the values are identical to
    ``shepp_logan_2d(n).pixels[slice_row(n)]``.
    """
    if n < MIN_SIDE:
        raise TooSmallError(f"slice length must be >= {MIN_SIDE}, got {n}")
    table = _TABLES[variant]
    c = _pixel_centres(n)
    y = -c[slice_row(n)]
    samples = _rasterize(c, np.full(n, y), table, _PEAKS[variant])
    return Phantom1D(samples, f"shepp-logan-slice-{variant}-{n}")


def piecewise_constant(n: int, k: int, seed: int, scale: float = 1.0) -> Phantom1D:
    """Signal with exactly ``k`` jumps at distinct random positions.

    Jump heights are ``scale * sign * (0.5 + |N(0, 1)|)`` so none is zero;
    the first sample is drawn uniformly from ``scale * [0.5, 1.5)``.
    """
    if n < 1:
        raise InfeasibleError(f"signal length must be positive, got {n}")
    if k < 0 or k > n - 1:
        raise InfeasibleError(f"need 0 <= k <= n-1 jumps, got k={k} for n={n}")
    rng = np.random.default_rng(seed)
    edges = np.sort(rng.choice(n - 1, size=k, replace=False))
    heights = scale * rng.choice([-1.0, 1.0], size=k) * (0.5 + np.abs(rng.standard_normal(k)))
    base = scale * (0.5 + rng.random())
    steps = np.zeros(n - 1)
    steps[edges] = heights
    samples = base + np.concatenate([[0.0], np.cumsum(steps)])
    return Phantom1D(samples, f"piecewise-constant-n{n}-k{k}-s{seed}")
