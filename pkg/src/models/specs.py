from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..errors import ConfigError


class GeneratorSpec(BaseModel):
    """Conditional generator layout; in_rows = F+N+1 (F in baseline mode)"""

    model_config = ConfigDict(extra="forbid")

    in_rows: Optional[int] = Field(default=None, gt=0)
    base_channels: int = Field(default=16, gt=0)
    n_residual_blocks: int = Field(default=2, ge=0)
    n_downsample: int = Field(default=2, ge=1)

    @property
    def downsample_factor(self) -> int:
        return 2 ** self.n_downsample

    def resolve(self, in_rows: int) -> "GeneratorSpec":
        return self.model_copy(update={"in_rows": in_rows})

    def rows(self) -> int:
        if self.in_rows is None:
            raise ConfigError("generator spec has no row count yet")
        return self.in_rows


class DiscriminatorSpec(BaseModel):
    """Patch discriminator layout"""

    model_config = ConfigDict(extra="forbid")

    in_rows: Optional[int] = Field(default=None, gt=0)
    base_channels: int = Field(default=16, gt=0)
    n_layers: int = Field(default=4, ge=1)

    def resolve(self, in_rows: int) -> "DiscriminatorSpec":
        return self.model_copy(update={"in_rows": in_rows})

    def rows(self) -> int:
        if self.in_rows is None:
            raise ConfigError("discriminator spec has no row count yet")
        return self.in_rows
