import json

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon

from vvsearch.geometry import (Environment, EnvironmentFormatError, EnvironmentValidationError,
                               Obstacle, RoadNetwork, load_environment, save_environment,
                               segment_intersects_obstacle, segments_hit_prism, signed_area)


def _road():
    return RoadNetwork(((-90.0, -90.0), (90.0, -90.0)), ((0, 1),))


def _oracle_hit(p0, p1, poly, h):
    """Clip to the slab 0 <= z <= h, then ask shapely about the 2D footprint."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    dz = p1[2] - p0[2]
    if dz == 0:
        if not 0 <= p0[2] <= h:
            return False
        lo, hi = 0.0, 1.0
    else:
        ta, tb = -p0[2] / dz, (h - p0[2]) / dz
        lo, hi = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
        if lo > hi:
            return False
    a = p0[:2] + lo * (p1[:2] - p0[:2])
    b = p0[:2] + hi * (p1[:2] - p0[:2])
    geom = LineString([a, b]) if np.any(a != b) else LineString([a, a + 1e-12])
    return geom.intersects(Polygon(poly))


class TestObstacle:
    def test_box_is_ccw(self):
        o = Obstacle.box(0, 0, 2, 1, 5)
        assert signed_area(o.vertices) == pytest.approx(2.0)

    def test_clockwise_rejected(self):
        with pytest.raises(EnvironmentValidationError, match="counter-clockwise"):
            Obstacle(((0, 0), (0, 1), (1, 1), (1, 0)), 3)

    def test_self_intersecting_rejected(self):
        with pytest.raises(EnvironmentValidationError, match="simple"):
            Obstacle(((0, 0), (1, 1), (1, 0), (0, 1)), 3)

    @pytest.mark.parametrize("h", [0.0, -1.0])
    def test_nonpositive_height(self, h):
        with pytest.raises(EnvironmentValidationError, match="height"):
            Obstacle.box(0, 0, 1, 1, h)

    def test_too_few_vertices(self):
        with pytest.raises(EnvironmentValidationError):
            Obstacle(((0, 0), (1, 0)), 1)


class TestEnvironmentValidation:
    def test_overlap_names_both(self):
        a = Obstacle.box(0, 0, 10, 10, 5)
        b = Obstacle.box(5, 5, 15, 15, 5)
        with pytest.raises(EnvironmentValidationError, match="obstacles 0 and 1"):
            Environment((a, b), (-100, 100, -100, 100), _road(), 60)

    def test_shared_edge_is_not_overlap(self):
        a = Obstacle.box(0, 0, 10, 10, 5)
        b = Obstacle.box(10, 0, 20, 10, 5)
        Environment((a, b), (-100, 100, -100, 100), _road(), 60)

    def test_feasible_height_must_exceed_buildings(self):
        with pytest.raises(EnvironmentValidationError, match="h_feasible"):
            Environment((Obstacle.box(0, 0, 10, 10, 50),), (-100, 100, -100, 100), _road(), 40)

    def test_outside_bounds(self):
        with pytest.raises(EnvironmentValidationError, match="outside"):
            Environment((Obstacle.box(95, 0, 110, 10, 5),), (-100, 100, -100, 100), _road(), 60)

    def test_road_through_building(self):
        with pytest.raises(EnvironmentValidationError, match="road edge 0 crosses obstacle 0"):
            Environment((Obstacle.box(-10, -95, 10, -85, 5),), (-100, 100, -100, 100), _road(), 60)

    def test_disconnected_road(self):
        road = RoadNetwork(((0, 0), (10, 0), (50, 50), (60, 50)), ((0, 1), (2, 3)))
        with pytest.raises(EnvironmentValidationError, match="connected"):
            Environment((), (-100, 100, -100, 100), road, 60)

    def test_bad_edge_index(self):
        with pytest.raises(EnvironmentValidationError):
            RoadNetwork(((0, 0),), ((0, 3),))


class TestSegmentPrism:
    def test_through_box(self):
        env = Environment((Obstacle.box(-10, -10, 10, 10, 20),), (-100, 100, -100, 100), _road(), 60)
        assert segment_intersects_obstacle((-50, 0, 5), (50, 0, 5), env)
        assert not segment_intersects_obstacle((-50, 0, 25), (50, 0, 25), env)

    def test_grazing_top_face_counts(self):
        env = Environment((Obstacle.box(-10, -10, 10, 10, 20),), (-100, 100, -100, 100), _road(), 60)
        assert segment_intersects_obstacle((-50, 0, 20), (50, 0, 20), env)

    def test_grazing_side_face_counts(self):
        env = Environment((Obstacle.box(-10, -10, 10, 10, 20),), (-100, 100, -100, 100), _road(), 60)
        assert segment_intersects_obstacle((-50, 10, 5), (50, 10, 5), env)

    def test_nonfinite_raises(self):
        env = Environment((), (-100, 100, -100, 100), _road(), 60)
        with pytest.raises(ValueError):
            segment_intersects_obstacle((np.nan, 0, 0), (1, 1, 1), env)

    def test_random_against_clipped_shapely(self, rng):
        # nonconvex L-shaped footprint
        poly = np.array([(0, 0), (30, 0), (30, 10), (10, 10), (10, 30), (0, 30)], float)
        n = 4000
        p0 = rng.uniform([-20, -20, 0], [50, 50, 60], (n, 3))
        p1 = rng.uniform([-20, -20, 0], [50, 50, 60], (n, 3))
        got = segments_hit_prism(p0, p1, poly, 25.0)
        want = np.array([_oracle_hit(a, b, poly, 25.0) for a, b in zip(p0, p1)])
        assert np.array_equal(got, want)


class TestIO:
    def test_roundtrip(self, tmp_path, u_env):
        f = tmp_path / "env.json"
        save_environment(u_env, f)
        back = load_environment(f)
        assert back == u_env
        assert back.digest() == u_env.digest()

    def test_syntax_error_line(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text('{\n "bounds": [0, 1, 0, 1],\n "obstacles": [,\n}')
        with pytest.raises(EnvironmentFormatError) as exc:
            load_environment(f)
        assert exc.value.line == 3

    def test_missing_key(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"bounds": [0, 1, 0, 1]}))
        with pytest.raises(EnvironmentFormatError, match="missing"):
            load_environment(f)

    def test_invalid_obstacle_reports_line(self, tmp_path, u_env):
        d = u_env.to_dict()
        d["obstacles"][0]["height"] = -3
        f = tmp_path / "bad.json"
        f.write_text(json.dumps(d, indent=1))
        with pytest.raises(EnvironmentFormatError) as exc:
            load_environment(f)
        assert exc.value.line is not None
