"""Fixed-beam codebook with a rectangular main-lobe gain profile."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class BeamCodebook:
    """Horizontal fan of ``n_beams`` beams centred on the site boresight.

    Beam m points at ``boresight + (m - (M - 1) / 2) * step_deg`` and has gain
    ``peak_gain_db`` over the half-open azimuth interval of width ``step_deg``
    around its centre, ``floor_gain_db`` elsewhere. The lobes tile
    ``n_beams * step_deg`` degrees without gaps or overlap.
    """

    n_beams: int = 19
    step_deg: float = 10.0
    peak_gain_db: float = 18.0
    floor_gain_db: float = -10.0
    downtilt_deg: float = 8.0
    # None disables elevation gating; otherwise rays departing outside
    # downtilt +/- width/2 (degrees below horizon) see the floor gain.
    vertical_beamwidth_deg: Optional[float] = None

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError("codebook needs at least one beam")
        if self.step_deg <= 0:
            raise ValueError("beam step must be positive")

    @property
    def offsets_deg(self) -> np.ndarray:
        return (np.arange(self.n_beams) - (self.n_beams - 1) / 2.0) * self.step_deg

    def beam_index(self, rel_az_deg, el_deg=None) -> np.ndarray:
        """Index of the beam whose main lobe contains each direction, -1 if none.

        ``rel_az_deg`` is the azimuth relative to boresight, ``el_deg`` the
        departure elevation (negative below the horizon).
        """
        rel = wrap_deg(np.asarray(rel_az_deg, dtype=float))
        half_span = self.n_beams * self.step_deg / 2.0
        idx = np.floor((rel + half_span) / self.step_deg).astype(np.int64)
        ok = (idx >= 0) & (idx < self.n_beams)
        if self.vertical_beamwidth_deg is not None and el_deg is not None:
            tilt = -np.asarray(el_deg, dtype=float)
            ok &= np.abs(tilt - self.downtilt_deg) <= self.vertical_beamwidth_deg / 2.0
        return np.where(ok, idx, -1)

    def gain_db(self, rel_az_deg, el_deg=None) -> np.ndarray:
        """Per-beam gain in dB, shape (..., n_beams)."""
        idx = self.beam_index(rel_az_deg, el_deg)
        beams = np.arange(self.n_beams)
        return np.where(idx[..., None] == beams, self.peak_gain_db, self.floor_gain_db)


def wrap_deg(angle):
    """Wrap to [-180, 180)."""
    return (np.asarray(angle) + 180.0) % 360.0 - 180.0
