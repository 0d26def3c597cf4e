"""sdtransit - social-distancing analytics for onboard public-transport CCTV."""

from src.config import DistancingConfig, FilterConfig, RunConfig

__all__ = ["DistancingConfig", "FilterConfig", "RunConfig"]
__version__ = "0.1.0"
