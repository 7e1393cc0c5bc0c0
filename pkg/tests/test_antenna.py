import numpy as np
import pytest

from mmwsched.antenna import BeamCodebook, wrap_deg


def test_default_codebook():
    cb = BeamCodebook()
    assert cb.n_beams == 19
    assert cb.offsets_deg[0] == -90 and cb.offsets_deg[-1] == 90
    assert np.allclose(np.diff(cb.offsets_deg), 10)


def test_beams_tile_the_covered_range():
    cb = BeamCodebook()
    az = np.linspace(-95, 95 - 1e-9, 20001)
    idx = cb.beam_index(az)
    assert np.all(idx >= 0)
    assert np.all(np.diff(idx) >= 0)
    assert set(idx.tolist()) == set(range(19))
    assert cb.beam_index(-95.01) == -1 and cb.beam_index(95.0) == -1


def test_gain_profile_peak_and_floor():
    cb = BeamCodebook()
    g = cb.gain_db(cb.offsets_deg[4])
    assert g[4] == 18 and np.all(np.delete(g, 4) == -10)
    assert np.all(cb.gain_db(180.0) == -10)


def test_elevation_gating_optional():
    cb = BeamCodebook(vertical_beamwidth_deg=10.0)
    assert cb.beam_index(0.0, -8.0) == 9
    assert cb.beam_index(0.0, -20.0) == -1
    assert BeamCodebook().beam_index(0.0, -20.0) == 9


def test_wrap_deg():
    assert wrap_deg(190.0) == -170.0
    assert wrap_deg(-180.0) == -180.0


def test_rejects_empty_codebook():
    with pytest.raises(ValueError):
        BeamCodebook(n_beams=0)
