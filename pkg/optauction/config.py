"""
Runtime configuration.
Defaults can be overridden through OPTAUCTION_* environment variables; every
library entry point also accepts explicit keyword overrides.
"""

import os
from functools import lru_cache
from typing import Literal

from pydantic import BaseModel, Field

NetworkMode = Literal["explicit", "lattice"]


class Settings(BaseModel):
    log_level: str = "WARNING"
    n_jobs: int = Field(default=1, description="joblib workers for strips and pair solves")
    brute_force_limit: int = Field(default=200_000, description="max alpha vectors enumerated by brute_force2")
    brute_force_points: int = Field(default=64, description="max grid points for brute_force_n")
    segment_limit: int = Field(default=4096, description="max segments per intersection component")
    segment_clique_limit: int = Field(default=24, description="components up to this size use the clique search")
    max_resolution: int = 200
    resolution_factor: float = 1.0
    max_subsamples_x: int = 64
    max_subsamples_y: int = 16
    quantization_bits: int = 40
    discrete_network: NetworkMode = "explicit"
    continuous_network: NetworkMode = "lattice"
    spot_checks: int = 256
    seed: int = 42

    @classmethod
    def from_env(cls) -> "Settings":
        defaults = cls()
        return cls(
            log_level=os.getenv("OPTAUCTION_LOG_LEVEL", defaults.log_level).upper(),
            n_jobs=int(os.getenv("OPTAUCTION_N_JOBS", defaults.n_jobs)),
            brute_force_limit=int(os.getenv("OPTAUCTION_BRUTE_FORCE_LIMIT", defaults.brute_force_limit)),
            brute_force_points=int(os.getenv("OPTAUCTION_BRUTE_FORCE_POINTS", defaults.brute_force_points)),
            segment_limit=int(os.getenv("OPTAUCTION_SEGMENT_LIMIT", defaults.segment_limit)),
            segment_clique_limit=int(os.getenv("OPTAUCTION_SEGMENT_CLIQUE_LIMIT", defaults.segment_clique_limit)),
            max_resolution=int(os.getenv("OPTAUCTION_MAX_RESOLUTION", defaults.max_resolution)),
            resolution_factor=float(os.getenv("OPTAUCTION_RESOLUTION_FACTOR", defaults.resolution_factor)),
            max_subsamples_x=int(os.getenv("OPTAUCTION_MAX_SUBSAMPLES", defaults.max_subsamples_x)),
            max_subsamples_y=int(os.getenv("OPTAUCTION_MAX_SUBSAMPLES_Y", defaults.max_subsamples_y)),
            quantization_bits=int(os.getenv("OPTAUCTION_QUANTIZATION_BITS", defaults.quantization_bits)),
            discrete_network=os.getenv("OPTAUCTION_DISCRETE_NETWORK", defaults.discrete_network),
            continuous_network=os.getenv("OPTAUCTION_CONTINUOUS_NETWORK", defaults.continuous_network),
            spot_checks=int(os.getenv("OPTAUCTION_SPOT_CHECKS", defaults.spot_checks)),
            seed=int(os.getenv("OPTAUCTION_SEED", defaults.seed)),
        )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.from_env()
