import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxshapley.core import AttributionVector, Method, clip_and_renormalize
from maxshapley.errors import DomainError


def vec(*xs):
    return AttributionVector(phi=list(xs), method=Method.FULL_SHAPLEY)


def test_clip_then_divide():
    out = clip_and_renormalize(vec(0.90, 0.04, 0.06), 0.05)
    np.testing.assert_allclose(out.phi, [0.9375, 0, 0.0625])
    assert out.clipped and not out.degenerate


def test_everything_clipped_is_degenerate():
    out = clip_and_renormalize(vec(0.01, 0.02), 0.05)
    assert out.tolist() == [0, 0]
    assert out.degenerate


def test_renormalize_only():
    np.testing.assert_allclose(clip_and_renormalize(vec(0.5, 0.3), 0.05).phi, [0.625, 0.375])


def test_negative_entries_are_clipped():
    np.testing.assert_allclose(clip_and_renormalize(vec(-0.2, 0.4, 0.4), 0.05).phi, [0, 0.5, 0.5])


def test_rejects_negative_threshold():
    with pytest.raises(DomainError):
        clip_and_renormalize(vec(0.5), -1)


def test_keeps_provenance():
    out = clip_and_renormalize(AttributionVector(phi=[0.5, 0.5], method=Method.MCU, seed=9), 0.05)
    assert out.method is Method.MCU and out.seed == 9


@given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=8))
def test_idempotent_and_argmax_preserved(xs):
    once = clip_and_renormalize(vec(*xs), 0.05)
    if once.degenerate:
        return
    survivors = once.phi[once.phi > 0]
    if survivors.min() >= 0.05:
        np.testing.assert_allclose(clip_and_renormalize(once, 0.05).phi, once.phi, atol=1e-12)
    assert once.total == pytest.approx(1.0)
    assert int(np.argmax(once.phi)) == int(np.argmax(xs))
