"""Axis-aligned pixel rectangles (face boxes, mask squares, fill regions)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RegionError


@dataclass(frozen=True)
class Region:
    """Rows [top, top+height) × columns [left, left+width)."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise RegionError(f"empty region {self}")

    @classmethod
    def square(cls, top: int, left: int, size: int) -> Region:
        return cls(top=top, left=left, height=size, width=size)

    @classmethod
    def parse(cls, text: str) -> Region:
        """Parse ``top,left,height,width``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"expected top,left,height,width, got {text!r}")
        try:
            top, left, height, width = (int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"non-integer box {text!r}") from exc
        return cls(top, left, height, width)

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def area(self) -> int:
        return self.height * self.width

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.bottom), slice(self.left, self.right)

    def fits(self, height: int, width: int) -> bool:
        return self.top >= 0 and self.left >= 0 and self.bottom <= height and self.right <= width

    def require_inside(self, height: int, width: int) -> None:
        if not self.fits(height, width):
            raise RegionError(f"region {self} exceeds image bounds {height}×{width}")

    def mask(self, height: int, width: int) -> np.ndarray:
        """Boolean H×W grid, True inside the region."""
        self.require_inside(height, width)
        grid = np.zeros((height, width), dtype=bool)
        grid[self.slices] = True
        return grid

    def pixels(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.top, self.bottom) for j in range(self.left, self.right)]

    def __str__(self) -> str:
        return f"{self.top},{self.left},{self.height},{self.width}"
