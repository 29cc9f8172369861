"""Normal velocities of the two flows."""

from __future__ import annotations

import enum

import numpy as np

from .geometry import FrameField


class FlowKind(str, enum.Enum):
    """Curve diffusion moves with speed ``k_ss``; the elastic flow adds ``k^3 / 2``."""

    CURVE_DIFFUSION = "cd"
    ELASTIC = "e"

    @classmethod
    def parse(cls, value) -> "FlowKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "cd": cls.CURVE_DIFFUSION, "curve-diffusion": cls.CURVE_DIFFUSION,
            "curvediffusion": cls.CURVE_DIFFUSION,
            "e": cls.ELASTIC, "elastic": cls.ELASTIC,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown flow kind {value!r} (expected 'cd' or 'e')") from None


def normal_velocity(frame: FrameField, flow: FlowKind) -> np.ndarray:
    """Per-node normal speed F; the curve moves by ``-F nu``."""
    flow = FlowKind.parse(flow)
    if flow is FlowKind.CURVE_DIFFUSION:
        return frame.k_ss.copy()
    return frame.k_ss + 0.5 * frame.k ** 3
