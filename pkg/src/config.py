"""Configuration for sdtransit."""

import logging
import os
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from src.errors import InputOutputError, InvalidConfig

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_FPS = 4.0

# Range of persistence windows studied on the recorded journeys (1 s to 75 s at 4 fps).
MIN_FRAMES_STUDIED = (4, 300)


@dataclass
class FilterConfig:
    """Tunables of the bounding-box persistence filter.

    Attributes:
        tolerance_px: Per-axis centroid tolerance for associating a detection
            with a track (default: 10 px; 15 px is the other studied value).
        min_persistence_frames: Appearances a track needs to be confirmed (K).
        gap_frames: Longest unseen interval before a track is closed (G).
        allow_out_of_range: Accept K outside the studied [4, 300] range.
    """

    tolerance_px: float = 10.0
    min_persistence_frames: int = 40
    gap_frames: int = 8
    allow_out_of_range: bool = False

    def validate(self) -> None:
        """Validate configuration.

        Raises:
            InvalidConfig: If configuration is invalid.
        """
        if not self.tolerance_px > 0:
            raise InvalidConfig("tolerance_px must be positive", field="tolerance_px")
        if self.gap_frames < 1:
            raise InvalidConfig("gap_frames must be at least 1", field="gap_frames")
        if self.min_persistence_frames < 1:
            raise InvalidConfig(
                "min_persistence_frames must be at least 1", field="min_persistence_frames"
            )
        low, high = MIN_FRAMES_STUDIED
        if not low <= self.min_persistence_frames <= high:
            if not self.allow_out_of_range:
                raise InvalidConfig(
                    f"min_persistence_frames={self.min_persistence_frames} is outside "
                    f"[{low}, {high}]; set allow_out_of_range to use it anyway",
                    field="min_persistence_frames",
                )
            logger.warning(
                "min_persistence_frames=%d is outside the studied range [%d, %d]",
                self.min_persistence_frames, low, high,
            )


@dataclass
class DistancingConfig:
    """Thresholds for the social-distancing assessment, in image pixels.

    Attributes:
        danger_distance: Nearest-neighbour distance below which a passenger is Danger.
        warn_distance: Nearest-neighbour distance below which a passenger is Warning.
        eps: DBSCAN neighbourhood radius (None means warn_distance).
        min_pts: DBSCAN core-point threshold, counting the point itself.
    """

    danger_distance: float = 60.0
    warn_distance: float = 120.0
    eps: float | None = None
    min_pts: int = 2

    @property
    def effective_eps(self) -> float:
        return self.warn_distance if self.eps is None else self.eps

    def validate(self) -> None:
        """Validate configuration.

        Raises:
            InvalidConfig: If configuration is invalid.
        """
        if not self.danger_distance > 0:
            raise InvalidConfig("danger_distance must be positive", field="danger_distance")
        if not self.danger_distance < self.warn_distance:
            raise InvalidConfig(
                "danger_distance must be smaller than warn_distance", field="warn_distance"
            )
        if self.eps is not None and not self.eps > 0:
            raise InvalidConfig("eps must be positive", field="eps")
        if self.min_pts < 1:
            raise InvalidConfig("min_pts must be at least 1", field="min_pts")


@dataclass
class RunConfig:
    """Settings shared by every CLI command.

    Attributes:
        input_path: Detection stream to read ("-" for stdin).
        output_path: Where the command writes its main artifact ("-" for stdout).
        fmt: Interchange format, "ndjson" or "csv" (None infers it from the suffix).
        score_threshold: Detections scoring below this are dropped before analytics.
        label: Detector class kept for analytics.
        frames: Optional inclusive frame range restriction.
        workers: Videos processed concurrently.
        filter: Persistence-filter settings.
        distancing: Distancing settings.
    """

    input_path: Path | None = None
    output_path: Path | None = None
    fmt: str | None = None
    score_threshold: float = field(
        default_factory=lambda: float(os.environ.get("SDTRANSIT_SCORE_THRESHOLD", "0.5"))
    )
    label: str = "person"
    frames: tuple[int, int] | None = None
    workers: int = field(
        default_factory=lambda: int(os.environ.get("SDTRANSIT_WORKERS", "4"))
    )
    filter: FilterConfig = field(default_factory=FilterConfig)
    distancing: DistancingConfig = field(default_factory=DistancingConfig)

    def __post_init__(self) -> None:
        """Ensure paths are Path objects."""
        if isinstance(self.input_path, str):
            self.input_path = Path(self.input_path)
        if isinstance(self.output_path, str):
            self.output_path = Path(self.output_path)

    def validate(self) -> None:
        """Validate configuration.

        Raises:
            InvalidConfig: If configuration is invalid.
        """
        if self.input_path is not None and not str(self.input_path):
            raise InvalidConfig("input path must not be empty", field="input_path")
        if self.output_path is not None and not str(self.output_path):
            raise InvalidConfig("output path must not be empty", field="output_path")
        if self.fmt not in (None, "ndjson", "csv"):
            raise InvalidConfig(f"unknown format {self.fmt!r}", field="fmt")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise InvalidConfig("score_threshold must lie in [0, 1]", field="score_threshold")
        if not self.label:
            raise InvalidConfig("label must not be empty", field="label")
        if self.frames is not None:
            start, end = self.frames
            if start < 0 or end < start:
                raise InvalidConfig(f"invalid frame range {start}..{end}", field="frames")
        if self.workers < 1:
            raise InvalidConfig("workers must be at least 1", field="workers")
        self.filter.validate()
        self.distancing.validate()


def log_level_from_env() -> str:
    """Log level named by SDTRANSIT_LOG (default: WARNING)."""
    return os.environ.get("SDTRANSIT_LOG", "WARNING").upper()


def load_config_file(path: Path | str) -> dict[str, dict[str, Any]]:
    """Read a TOML config file with optional [run], [filter] and [distancing] tables.

    Raises:
        InputOutputError: If the file cannot be read.
        InvalidConfig: If it is not valid TOML or names unknown tables.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise InputOutputError(path, e.strerror or str(e)) from e
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise InvalidConfig(f"{path}: {e}") from e

    unknown = set(data) - {"run", "filter", "distancing"}
    if unknown:
        raise InvalidConfig(f"{path}: unknown config tables {sorted(unknown)}")
    for name, table in data.items():
        if not isinstance(table, dict):
            raise InvalidConfig(f"{path}: [{name}] must be a table")
    return data
