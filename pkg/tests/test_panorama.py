"""Seam blending and the staged generation ladder."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panosplat.adapters.stubs import ProceduralGeneratorStub
from panosplat.errors import ConfigurationError, ContractError, PipelineError
from panosplat.geometry import PanoDims, Panorama
from panosplat.panorama import (
    STAGES,
    GenerationLadderConfig,
    circular_blend,
    resize_panorama,
    run_generation_ladder,
    seam_discontinuity,
)

SMALL_LADDER = GenerationLadderConfig(
    base_dims=PanoDims(64, 32),
    stylized_dims=PanoDims(96, 48),
    detailed_dims=PanoDims(128, 64),
    blend_width=8,
)


# ---------------------------------------------------------------------------
# circular_blend


def test_blend_width_zero_is_identity(rng):
    f = rng.uniform(size=(4, 16, 3))
    np.testing.assert_array_equal(circular_blend(f, 0), f)


def test_blend_constant_field_unchanged():
    f = np.full((3, 24, 3), 0.4)
    np.testing.assert_allclose(circular_blend(f, 4), f, atol=1e-15)


def test_blend_ramp_hand_check():
    """W=8 row [0..7], width 2: the strip interpolates from the preserved
    column 5 toward the wrapped column 0, hitting it at column 7."""
    f = np.arange(8.0)[None, :]
    out = circular_blend(f, 2)
    np.testing.assert_array_equal(out[:, :6], f[:, :6])
    anchor_r, anchor_l = 5.0, 0.0
    np.testing.assert_allclose(out[0, 6], anchor_r + (anchor_l - anchor_r) * 0.5)
    np.testing.assert_allclose(out[0, 7], anchor_l)
    assert abs(out[0, 0] - out[0, 7]) <= abs(f[0, 0] - f[0, 7])


def test_blend_rejects_large_width():
    f = np.zeros((2, 16))
    with pytest.raises(ConfigurationError):
        circular_blend(f, 5)
    with pytest.raises(ConfigurationError):
        circular_blend(f, -1)


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    width=st.sampled_from([16, 32, 64]),
    bw=st.integers(1, 4),
)
def test_blend_idempotent_local_and_seam_reducing(seed, width, bw):
    rng = np.random.default_rng(seed)
    f = rng.uniform(size=(5, width, 3))
    once = circular_blend(f, bw)
    twice = circular_blend(once, bw)
    assert np.max(np.abs(twice - once)) <= 1e-12
    np.testing.assert_array_equal(once[:, : width - bw], f[:, : width - bw])
    assert seam_discontinuity(once) <= seam_discontinuity(f) + 1e-12


def test_seam_discontinuity_values():
    assert seam_discontinuity(np.full((4, 8, 3), 0.3)) == 0.0
    assert seam_discontinuity(np.array([[0.0, 1.0]])) == 1.0
    with pytest.raises(ContractError):
        seam_discontinuity(np.zeros((4, 1)))


# ---------------------------------------------------------------------------
# generation ladder


def test_ladder_runs_stub_to_final_dims():
    pano = run_generation_ladder("study", ProceduralGeneratorStub(seed=3), SMALL_LADDER)
    assert pano.dims == SMALL_LADDER.detailed_dims
    assert seam_discontinuity(pano.rgb) <= 1e-6
    assert [s["stage"] for s in pano.metadata["stages"]] == list(STAGES)


def test_ladder_deterministic():
    a = run_generation_ladder("study", ProceduralGeneratorStub(seed=3), SMALL_LADDER)
    b = run_generation_ladder("study", ProceduralGeneratorStub(seed=3), SMALL_LADDER)
    np.testing.assert_array_equal(a.rgb, b.rgb)


def test_ladder_without_blending_matches_raw_composition():
    cfg = GenerationLadderConfig(
        base_dims=PanoDims(64, 32),
        stylized_dims=PanoDims(96, 48),
        detailed_dims=PanoDims(128, 64),
        blend_width=0,
    )
    stub = ProceduralGeneratorStub(seed=1)
    pano = run_generation_ladder("x", stub, cfg)
    img = None
    for stage, (w, h) in zip(STAGES, ((64, 32), (96, 48), (128, 64), (128, 64))):
        img = stub.stage(stage, prompt="x", image=img, width=w, height=h)
    np.testing.assert_array_equal(pano.rgb, np.clip(img, 0.0, 1.0))


def test_ladder_wrong_dims_adapter_raises():
    class BadStub:
        def stage(self, stage, prompt="", image=None, width=0, height=0):
            return np.zeros((height + 2, width, 3))

    with pytest.raises(ContractError):
        run_generation_ladder("x", BadStub(), SMALL_LADDER)


def test_ladder_failing_adapter_names_stage():
    class Boom:
        def stage(self, stage, **kw):
            raise RuntimeError("weights missing")

    with pytest.raises(PipelineError, match="base"):
        run_generation_ladder("x", Boom(), SMALL_LADDER)


def test_ladder_config_validation():
    with pytest.raises(ConfigurationError):
        GenerationLadderConfig(
            base_dims=PanoDims(128, 64),
            stylized_dims=PanoDims(96, 48),
            detailed_dims=PanoDims(256, 128),
        )


# ---------------------------------------------------------------------------
# resize


def test_resize_panorama_dims_and_constancy():
    pano = Panorama(PanoDims(128, 64), np.full((64, 128, 3), 0.55))
    small = resize_panorama(pano, PanoDims(64, 32))
    assert small.dims == PanoDims(64, 32)
    np.testing.assert_allclose(small.rgb, 0.55, atol=1e-6)
    assert small.depth is None
