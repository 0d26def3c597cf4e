"""SVG overlays of distancing tiers.

Footage is not available, so boxes are drawn on a blank canvas of the
configured frame size: green for safe, amber for warning, red for danger.
"""

from collections.abc import Sequence

from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from src.distancing import NOISE, FrameAssessment, RiskTier
from src.errors import InvariantViolation
from src.ingest import Detection
from src.metrics import svg_bytes

TIER_STROKES = {
    RiskTier.SAFE: "#00a000",
    RiskTier.WARNING: "#ffbf00",
    RiskTier.DANGER: "#e00000",
}

DEFAULT_CANVAS = (640, 480)

_DPI = 100


def render_frame_svg(
    assessment: FrameAssessment,
    detections: Sequence[Detection],
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> bytes:
    """Draw one frame's boxes stroked by tier and return the SVG document."""
    if len(detections) != len(assessment.tiers):
        raise InvariantViolation(None, "assessment and detections differ in length")
    width, height = canvas

    fig = Figure(figsize=(width / _DPI, height / _DPI), dpi=_DPI)
    ax = fig.add_axes((0, 0, 1, 1))
    ax.set_xlim(0, width)
    ax.set_ylim(height, 0)
    ax.set_axis_off()
    ax.text(4, 14, f"frame {assessment.frame_index}", fontsize=8, color="#404040")

    for det, tier, cluster in zip(detections, assessment.tiers, assessment.cluster_labels):
        box = det.box
        ax.add_patch(Rectangle(
            (box.x_min, box.y_min), box.width, box.height,
            fill=False, edgecolor=TIER_STROKES[tier], linewidth=2,
        ))
        if cluster != NOISE:
            ax.text(box.x_min + 2, box.y_min + 10, f"c{cluster}", fontsize=7, color=TIER_STROKES[tier])

    return svg_bytes(fig)


def overlay_name(video_id: str, frame_index: int) -> str:
    return f"{video_id}_{frame_index:06d}.svg"
