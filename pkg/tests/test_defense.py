import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairfl.defense import DefensePolicy, apply_defense, median_norm
from fairfl.model import ClientUpdate


def _updates(norms, d=5, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i, n in enumerate(norms):
        v = rng.standard_normal(d)
        out.append(ClientUpdate(v / np.linalg.norm(v) * n, reported_count=10 + i))
    return out


def test_below_bound_is_identity():
    ups = _updates([1.0, 2.0, 3.0])
    kept, actions = apply_defense(ups, DefensePolicy("clip", bound=5.0))
    assert actions == [] and all(a is b for a, b in zip(kept, ups))


def test_none_policy_passes_through():
    ups = _updates([1.0, 100.0])
    kept, actions = apply_defense(ups, DefensePolicy())
    assert kept == ups and actions == []
    assert apply_defense(ups, None) == (ups, [])


def test_outlier_excluded_and_recorded():
    ups = _updates([1.0, 1.1, 0.9, 1.0, 10.0])
    kept, actions = apply_defense(ups, DefensePolicy("flag_outliers", threshold_multiplier=3.0),
                                  client_ids=[7, 8, 9, 10, 11])
    assert len(kept) == 4 and ups[4] not in kept
    assert [(a.client_id, a.action) for a in actions] == [(11, "excluded")]


def test_clipped_norm_equals_bound():
    ups = _updates([1.0, 4.0, 9.0])
    kept, actions = apply_defense(ups, DefensePolicy("clip", bound=2.0))
    assert abs(kept[1].norm - 2.0) <= 1e-12 and abs(kept[2].norm - 2.0) <= 1e-12
    assert kept[0] is ups[0]
    assert [a.client_id for a in actions] == [1, 2]


def test_counts_untouched():
    ups = _updates([1.0, 4.0, 9.0])
    kept, _ = apply_defense(ups, DefensePolicy("clip"))
    assert [u.reported_count for u in kept] == [u.reported_count for u in ups]


def test_adaptive_median_uses_round_norms():
    ups = _updates([1.0, 3.0, 8.0, 20.0])
    assert median_norm([u.norm for u in ups]) == pytest.approx(3.0)
    kept, actions = apply_defense(ups, DefensePolicy("clip"))
    np.testing.assert_allclose([u.norm for u in kept], [1.0, 3.0, 3.0, 3.0])
    assert len(actions) == 2


def test_policy_validation():
    with pytest.raises(ValueError):
        DefensePolicy("flag_outliers", threshold_multiplier=1.0)
    with pytest.raises(ValueError):
        DefensePolicy("clip", bound=-1.0)
    with pytest.raises(ValueError):
        DefensePolicy("krum")


norm_lists = st.lists(st.floats(0.01, 100.0), min_size=1, max_size=9)


@settings(max_examples=50, deadline=None)
@given(norms=norm_lists, adaptive=st.booleans(), bound=st.floats(0.05, 50.0))
def test_clip_idempotent_and_direction_preserving(norms, adaptive, bound):
    policy = DefensePolicy("clip", bound=None if adaptive else bound)
    ups = _updates(norms)
    once, _ = apply_defense(ups, policy)
    twice, _ = apply_defense(once, policy)
    for orig, a, b in zip(ups, once, twice):
        np.testing.assert_allclose(a.delta, b.delta, rtol=1e-12, atol=1e-15)
        scale = a.delta @ orig.delta / (orig.delta @ orig.delta)
        assert scale > 0
        np.testing.assert_allclose(a.delta, scale * orig.delta, rtol=1e-12, atol=1e-15)
