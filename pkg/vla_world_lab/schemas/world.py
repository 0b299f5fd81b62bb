from enum import IntEnum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator


class CellClass(IntEnum):
    FREE = 0
    EGO = 1
    VEHICLE = 2
    PEDESTRIAN = 3
    BOUNDARY = 4
    RESERVED_5 = 5
    RESERVED_6 = 6
    RESERVED_7 = 7


class GridSpec(BaseModel):
    """Top-down raster covering [-extent/2, extent/2]^2 around the ego."""

    model_config = ConfigDict(frozen=True)

    cells_per_side: int = Field(32, gt=0)
    extent_m: float = Field(32.0, gt=0)
    num_classes: int = Field(8, ge=2)

    @property
    def num_cells(self) -> int:
        return self.cells_per_side * self.cells_per_side

    @property
    def cell_size(self) -> float:
        return self.extent_m / self.cells_per_side

    def cell_centers(self) -> np.ndarray:
        """(N, 2) row-major centers; row 0 is the far-forward edge."""
        n, size, half = self.cells_per_side, self.cell_size, self.extent_m / 2
        rows, cols = np.divmod(np.arange(n * n), n)
        return np.stack([-half + (cols + 0.5) * size, half - (rows + 0.5) * size], axis=1)


class OccupancyGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: GridSpec = GridSpec()
    cells: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_cells(self) -> "OccupancyGrid":
        if len(self.cells) != self.spec.num_cells:
            raise ValueError(f"expected {self.spec.num_cells} cells, got {len(self.cells)}")
        if self.cells and not (0 <= min(self.cells) and max(self.cells) < self.spec.num_classes):
            raise ValueError("cell class outside [0, V)")
        return self

    @classmethod
    def from_array(cls, arr: np.ndarray, spec: GridSpec) -> "OccupancyGrid":
        return cls(spec=spec, cells=tuple(int(c) for c in np.asarray(arr).ravel()))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.cells, dtype=np.int64)


class Codebook(BaseModel):
    """Fixed bijection between cell classes and visual token ids."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(8, ge=2)
    class_to_token: Tuple[int, ...] = Field((), validate_default=True)

    @field_validator("class_to_token")
    @classmethod
    def _bijective(cls, v: Tuple[int, ...], info: ValidationInfo) -> Tuple[int, ...]:
        size = info.data.get("size", 8)
        mapping = tuple(v) or tuple(range(size))
        if sorted(mapping) != list(range(size)):
            raise ValueError("codebook must be a bijection onto 0..size-1")
        return mapping

    @property
    def token_to_class(self) -> Tuple[int, ...]:
        inverse = [0] * self.size
        for cls_idx, token in enumerate(self.class_to_token):
            inverse[token] = cls_idx
        return tuple(inverse)


class TokenSequence(BaseModel):
    model_config = ConfigDict(frozen=True)

    tokens: Tuple[int, ...] = ()

    @field_validator("tokens")
    @classmethod
    def _non_negative(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if v and min(v) < 0:
            raise ValueError("token ids are non-negative integers")
        return v

    def __len__(self) -> int:
        return len(self.tokens)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tokens, dtype=np.int64)
