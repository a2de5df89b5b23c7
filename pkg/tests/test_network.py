import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimopower.network import (
    NetworkScenario,
    ScenarioConfig,
    bs_layout,
    build_scenario,
    dbm_to_watts,
    generate_scenario,
    mirror_shifts,
    watts_to_dbm,
    wrap_distance,
)


def test_dbm_to_watts_examples():
    assert dbm_to_watts(10) == pytest.approx(0.01, rel=1e-15)
    assert dbm_to_watts(0) == pytest.approx(0.001, rel=1e-15)
    # -169 dBm/Hz over 1 MHz is -109 dBm
    assert dbm_to_watts(-169 + 10 * math.log10(1e6)) == pytest.approx(1.2589254117941673e-14, rel=1e-12)
    assert watts_to_dbm(0.01) == pytest.approx(10.0)


def test_noise_power_from_config():
    cfg = ScenarioConfig()
    assert cfg.noise_power == pytest.approx(1.2589254117941673e-14, rel=1e-12)
    assert cfg.pmax == pytest.approx(0.01)


def test_default_scenario_has_63_users():
    scen = generate_scenario(ScenarioConfig(num_cells=7, users_per_cell=9))
    assert scen.num_users == 63
    assert scen.large_scale.shape == (7, 63)
    assert np.all(scen.large_scale > 0)
    assert scen.noise_power > 0


def test_same_seed_same_scenario():
    cfg = ScenarioConfig(seed=42)
    a, b = generate_scenario(cfg), generate_scenario(cfg)
    assert np.array_equal(a.large_scale, b.large_scale)
    assert np.array_equal(a.user_positions, b.user_positions)
    c = generate_scenario(cfg.replace(seed=43))
    assert not np.array_equal(a.large_scale, c.large_scale)


def test_shadowing_std_matches_config():
    cfg = ScenarioConfig(num_cells=1, users_per_cell=1)
    vals = []
    for s in range(10_000):
        scen = generate_scenario(cfg.replace(seed=s))
        vals.append(10 * np.log10(scen.large_scale * scen.distances**3).ravel())
    sd = np.std(np.concatenate(vals), ddof=1)
    assert abs(sd - 8.0) < 0.05 * 8.0


def test_users_inside_own_cell():
    scen = generate_scenario(ScenarioConfig(seed=3))
    r = scen.config.cell_radius
    apothem = math.sqrt(3) / 2 * r
    normals = np.array([[math.cos(a), math.sin(a)] for a in np.arange(6) * np.pi / 3])
    for u, i in enumerate(scen.user_cell):
        d = scen.user_positions[u] - scen.bs_positions[i]
        # pointy-top hexagon = intersection of 6 half-planes with face normals at k*60 deg
        assert np.all(normals @ d <= apothem * (1 + 1e-9))


def test_seven_cell_layout_spacing():
    cfg = ScenarioConfig()
    bs = bs_layout(cfg)
    d = np.linalg.norm(bs[1:] - bs[0], axis=1)
    assert np.allclose(d, cfg.isd)
    assert cfg.isd == pytest.approx(math.sqrt(3) * 500)


def test_wrap_distance_same_point_is_floor():
    cfg = ScenarioConfig()
    assert wrap_distance([10.0, 20.0], [10.0, 20.0], cfg) == cfg.min_distance


def test_wrap_distance_interior_is_euclidean():
    cfg = ScenarioConfig()
    a, b = np.array([0.0, 0.0]), np.array([cfg.isd, 0.0])
    assert wrap_distance(a, b, cfg) == pytest.approx(cfg.isd)


def _lattice_min_distance(a, b, cfg, reach=3):
    # brute force over the whole cluster lattice generated by the wrap period
    t1 = cfg.isd * np.array([2.5, math.sqrt(3) / 2])
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    t2 = np.array([c * t1[0] - s * t1[1], s * t1[0] + c * t1[1]])
    best = np.inf
    for n1, n2 in itertools.product(range(-reach, reach + 1), repeat=2):
        best = min(best, np.linalg.norm(a - b + n1 * t1 + n2 * t2))
    return max(best, cfg.min_distance)


def test_wrap_distance_edge_uses_mirror():
    cfg = ScenarioConfig()
    bs = bs_layout(cfg)
    # a user at the outer edge of cell 1 and the BS of the opposite cell 4
    a = bs[1] + np.array([0.8 * cfg.cell_radius * math.sqrt(3) / 2, 0.0])
    b = bs[4]
    direct = np.linalg.norm(a - b)
    w = wrap_distance(a, b, cfg)
    assert w < direct
    assert w == pytest.approx(_lattice_min_distance(a, b, cfg), rel=1e-12)


def test_wrap_distance_matches_lattice_brute_force():
    cfg = ScenarioConfig()
    scen = generate_scenario(cfg.replace(seed=11))
    for u in range(0, scen.num_users, 4):
        for j in range(7):
            a, b = scen.user_positions[u], scen.bs_positions[j]
            assert wrap_distance(a, b, cfg) == pytest.approx(_lattice_min_distance(a, b, cfg), rel=1e-12)


def test_seven_cell_mirrors_are_lattice_vectors_of_length_sqrt7_isd():
    cfg = ScenarioConfig()
    m = mirror_shifts(cfg)
    assert len(m) == 7
    assert np.allclose(np.linalg.norm(m[1:], axis=1), math.sqrt(7) * cfg.isd)


points = st.tuples(st.floats(-1200, 1200), st.floats(-1200, 1200))


@given(points, points)
def test_wrap_distance_symmetric_and_shorter(a, b):
    cfg = ScenarioConfig()
    a, b = np.array(a), np.array(b)
    d_ab = wrap_distance(a, b, cfg)
    assert d_ab == pytest.approx(wrap_distance(b, a, cfg), rel=1e-12)
    assert d_ab <= max(np.linalg.norm(a - b), cfg.min_distance) + 1e-9


def test_ring_layout_and_single_cell():
    cfg = ScenarioConfig(num_cells=3, users_per_cell=2)
    assert mirror_shifts(cfg).shape == (3, 2)
    # first and last cell of the ring are neighbours through the wrap
    bs = bs_layout(cfg)
    assert wrap_distance(bs[0], bs[2], cfg) == pytest.approx(cfg.isd)
    one = ScenarioConfig(num_cells=1, users_per_cell=2)
    assert np.array_equal(mirror_shifts(one), np.zeros((1, 2)))


def test_symmetric_layout_gain_depends_on_distance_only():
    cfg = ScenarioConfig(num_cells=7, users_per_cell=1, shadowing_std_db=0.0)
    scen = build_scenario(cfg, bs_layout(cfg))
    d = np.round(scen.distances, 6)
    for val in np.unique(d):
        sel = scen.large_scale[d == val]
        assert np.allclose(sel, sel[0], rtol=1e-12)
    assert np.allclose(np.diag(scen.large_scale), cfg.min_distance ** -3.0)


@pytest.mark.parametrize("field,value", [
    ("cell_radius", -5.0), ("num_cells", 0), ("antennas", 0),
    ("bandwidth_hz", 0.0), ("shadowing_std_db", -1.0),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ValueError, match=field):
        ScenarioConfig(**{field: value, **({"users_per_cell": 1} if field == "num_cells" else {})})


def test_users_per_cell_zero_rejected():
    with pytest.raises(ValueError, match="users_per_cell"):
        ScenarioConfig(num_cells=2, users_per_cell=(3, 0))


def test_json_round_trip():
    scen = generate_scenario(ScenarioConfig(num_cells=3, users_per_cell=(2, 3, 1), seed=5))
    back = NetworkScenario.from_json(scen.to_json())
    assert back.config == scen.config
    assert np.array_equal(back.large_scale, scen.large_scale)
    assert np.array_equal(back.user_cell, scen.user_cell)
    json.loads(scen.to_json())


def test_from_dict_rejects_unknown_field():
    with pytest.raises(ValueError, match="bogus"):
        ScenarioConfig.from_dict({"bogus": 1})


def test_normalized_has_unit_noise():
    scen = generate_scenario(ScenarioConfig(num_cells=3, users_per_cell=2))
    n = scen.normalized()
    assert n.noise_power == 1.0
    assert np.allclose(n.large_scale * scen.noise_power, scen.large_scale, rtol=1e-15)


def test_scenario_arrays_read_only():
    scen = generate_scenario(ScenarioConfig(num_cells=1, users_per_cell=2))
    with pytest.raises(ValueError):
        scen.large_scale[0, 0] = 1.0
