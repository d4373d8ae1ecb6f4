import numpy as np
import pytest

from symskill.errors import ConfigError
from symskill.mirrors import (
    ACTION_DIM,
    ACTION_SIGNS,
    MIRROR_IDS,
    STATE_DIM,
    STATE_SIGNS,
    action_sign_table,
    compose,
    inverse,
    mirror_action,
    mirror_state,
    state_sign_table,
)


def test_identity_tables_are_all_ones():
    assert np.all(STATE_SIGNS[1] == 1.0)
    assert np.all(ACTION_SIGNS[1] == 1.0)


def test_sign_entries_are_unit_magnitude():
    for k in MIRROR_IDS:
        assert np.all(np.abs(STATE_SIGNS[k]) == 1.0)
        assert np.all(np.abs(ACTION_SIGNS[k]) == 1.0)


@pytest.mark.parametrize("a", MIRROR_IDS)
@pytest.mark.parametrize("b", MIRROR_IDS)
def test_composition_matches_sign_products(a, b):
    c = compose(a, b)
    assert np.array_equal(STATE_SIGNS[a] * STATE_SIGNS[b], STATE_SIGNS[c])
    assert np.array_equal(ACTION_SIGNS[a] * ACTION_SIGNS[b], ACTION_SIGNS[c])


def test_klein_four_structure():
    # involutions
    for k in MIRROR_IDS:
        assert compose(k, k) == 1
        assert inverse(k) == k
    # any two distinct reflections compose to the third
    assert compose(2, 3) == 4
    assert compose(3, 2) == 4
    assert compose(2, 4) == 3
    assert compose(3, 4) == 2


@pytest.mark.parametrize("a", MIRROR_IDS)
@pytest.mark.parametrize("b", MIRROR_IDS)
def test_mirror_state_composes_exactly(a, b):
    rng = np.random.default_rng(7)
    s = rng.standard_normal((32, STATE_DIM))
    lhs = mirror_state(mirror_state(s, b), a)
    rhs = mirror_state(s, compose(a, b))
    assert np.array_equal(lhs, rhs)


@pytest.mark.parametrize("k", MIRROR_IDS)
def test_mirror_action_is_involution(k):
    rng = np.random.default_rng(11)
    u = rng.standard_normal((16, ACTION_DIM)).astype(np.float32)
    assert np.array_equal(mirror_action(mirror_action(u, k), k), u)


def test_specific_state_flips():
    s = np.arange(1.0, STATE_DIM + 1.0)
    m2 = mirror_state(s, 2)
    # left-right keeps px, flips py / sin / vy / wz / roll
    assert m2[0] == s[0] and m2[1] == -s[1]
    assert m2[2] == s[2] and m2[3] == -s[3]
    assert m2[4] == s[4] and m2[5] == -s[5]
    assert m2[6] == -s[6] and m2[7] == s[7]
    assert m2[8] == -s[8] and m2[9] == s[9]
    m3 = mirror_state(s, 3)
    # front-back keeps px, flips py, maps th -> pi - th (cos flips, sin kept)
    assert m3[0] == s[0] and m3[1] == -s[1]
    assert m3[2] == -s[2] and m3[3] == s[3]
    assert m3[4] == -s[4] and m3[5] == s[5]
    assert m3[6] == -s[6] and m3[7] == s[7]
    assert m3[8] == s[8] and m3[9] == -s[9]
    m4 = mirror_state(s, 4)
    # 180 turn keeps position, flips heading vector and body velocity
    assert m4[0] == s[0] and m4[1] == s[1]
    assert m4[2] == -s[2] and m4[3] == -s[3]
    assert m4[4] == -s[4] and m4[5] == -s[5]
    assert m4[6] == s[6] and m4[7] == s[7]
    assert m4[8] == -s[8] and m4[9] == -s[9]


def test_heading_vector_norm_preserved():
    rng = np.random.default_rng(3)
    th = rng.uniform(-np.pi, np.pi, size=50)
    s = np.zeros((50, STATE_DIM))
    s[:, 2] = np.cos(th)
    s[:, 3] = np.sin(th)
    for k in MIRROR_IDS:
        m = mirror_state(s, k)
        assert np.allclose(m[:, 2] ** 2 + m[:, 3] ** 2, 1.0, atol=1e-12)


def test_bad_mirror_id_rejected():
    with pytest.raises(ConfigError):
        mirror_state(np.zeros(STATE_DIM), 5)
    with pytest.raises(ConfigError):
        mirror_action(np.zeros(ACTION_DIM), 0)
    with pytest.raises(ConfigError):
        compose(1, 7)


def test_bad_shapes_rejected():
    with pytest.raises(ConfigError):
        mirror_state(np.zeros(9), 2)
    with pytest.raises(ConfigError):
        mirror_action(np.zeros(5), 2)


def test_json_tables_match_arrays():
    st = state_sign_table()
    at = action_sign_table()
    for k in MIRROR_IDS:
        assert st[k] == list(STATE_SIGNS[k])
        assert at[k] == list(ACTION_SIGNS[k])
        assert all(isinstance(v, float) for v in st[k])
