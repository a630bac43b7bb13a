"""Water-usage-effectiveness pipeline: weather -> wet bulb -> m^3/kWh.

Onsite cooling water scales with wet-bulb temperature (free cooling uses
no water below a threshold; evaporative load grows with wet bulb above
it).  Offsite water is the electricity-generation water intensity (EWIF)
of the local grid, a per-region constant here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["wet_bulb", "WueModel", "DEFAULT_WUE_MODEL"]

DRY_BULB_RANGE = (-20.0, 50.0)
WET_BULB_RANGE = (-20.0, 45.0)


def wet_bulb(dry_bulb, relative_humidity):
    """Wet-bulb temperature (degC) via Stull's one-equation approximation.

    Accepts scalars or arrays.  Valid for dry bulb in [-20, 50] degC and
    relative humidity in [0, 100] percent.
    """
    T = np.asarray(dry_bulb, dtype=float)
    rh = np.asarray(relative_humidity, dtype=float)
    if np.any(rh < 0) or np.any(rh > 100):
        raise ValueError("relative humidity must lie in [0, 100]")
    if np.any(T < DRY_BULB_RANGE[0]) or np.any(T > DRY_BULB_RANGE[1]):
        raise ValueError(f"dry bulb must lie in {DRY_BULB_RANGE}")
    tw = (
        T * np.arctan(0.151977 * np.sqrt(rh + 8.313659))
        + np.arctan(T + rh)
        - np.arctan(rh - 1.676331)
        + 0.00391838 * rh**1.5 * np.arctan(0.023101 * rh)
        - 4.686035
    )
    if tw.ndim == 0:
        return float(tw)
    return tw


@dataclass(frozen=True)
class WueModel:
    """Piecewise-linear onsite WUE in wet bulb, plus a constant offsite EWIF.

    Onsite water is zero up to ``free_cooling_wb`` (free cooling), rises
    linearly to ``max_onsite`` at ``max_wb``, and is flat beyond.
    """

    free_cooling_wb: float = 10.0   # degC
    max_wb: float = 30.0            # degC
    max_onsite: float = 0.0018      # m^3/kWh at and above max_wb

    def __post_init__(self):
        if self.max_wb <= self.free_cooling_wb:
            raise ValueError("max_wb must exceed free_cooling_wb")
        if self.max_onsite < 0:
            raise ValueError("max_onsite must be nonnegative")

    def onsite(self, wb):
        """Onsite WUE (m^3/kWh) at wet-bulb temperature wb."""
        wb_arr = np.asarray(wb, dtype=float)
        if np.any(wb_arr < WET_BULB_RANGE[0]) or np.any(wb_arr > WET_BULB_RANGE[1]):
            raise ValueError(f"wet bulb must lie in {WET_BULB_RANGE}")
        frac = np.clip(
            (wb_arr - self.free_cooling_wb) / (self.max_wb - self.free_cooling_wb), 0.0, 1.0
        )
        out = self.max_onsite * frac
        return float(out) if out.ndim == 0 else out

    def total(self, dry_bulb, relative_humidity, offsite_ewif):
        """Combined onsite + offsite WUE from raw weather inputs."""
        return self.onsite(wet_bulb(dry_bulb, relative_humidity)) + offsite_ewif


DEFAULT_WUE_MODEL = WueModel()
