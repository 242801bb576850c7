"""4x4 region grid and sliding-window placement."""

from __future__ import annotations

from dataclasses import dataclass

GRID = 4


@dataclass(frozen=True)
class Region:
    index: int
    x0: int
    y0: int
    width: int
    height: int

    @property
    def slices(self):
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)

    @property
    def center(self):
        return self.x0 + 0.5 * self.width, self.y0 + 0.5 * self.height


def _splits(length, n):
    base = length // n
    sizes = [base] * (n - 1) + [length - base * (n - 1)]
    starts = [base * i for i in range(n)]
    return starts, sizes


def tile_grid(width, height, grid=GRID):
    """Split the image into ``grid x grid`` regions, row-major.

    The last row and column absorb any remainder pixels.
    """
    if width < grid or height < grid:
        raise ValueError(f"image {width}x{height} is smaller than the {grid}x{grid} grid")
    xs, ws = _splits(width, grid)
    ys, hs = _splits(height, grid)
    return [
        Region(r * grid + c, xs[c], ys[r], ws[c], hs[r])
        for r in range(grid)
        for c in range(grid)
    ]


def region_index_of(x, y, width, height, grid=GRID):
    col = min(int(x // (width // grid)), grid - 1)
    row = min(int(y // (height // grid)), grid - 1)
    return row * grid + col


def window_starts(length, patch, stride):
    """Window offsets along one axis; the last window sits flush with the end."""
    if length <= patch:
        return [0]
    starts = list(range(0, length - patch + 1, stride))
    if starts[-1] + patch < length:
        starts.append(length - patch)
    return starts
