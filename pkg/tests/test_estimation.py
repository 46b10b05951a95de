import math
import warnings

import numpy as np
import pytest

from vvsearch.estimation import (DegenerateUpdateWarning, SensorParams, belief_covariance, eta,
                                 false_alarm_source_dist, likelihood, rbe_predict, rbe_update,
                                 sense)


def gauss2(x, m, R):
    """Bivariate normal density written out by hand."""
    a, b, c, d = R[0][0], R[0][1], R[1][0], R[1][1]
    det = a * d - b * c
    dx, dy = x[0] - m[0], x[1] - m[1]
    q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det
    return math.exp(-0.5 * q) / (2 * math.pi * math.sqrt(det))


def oracle_likelihood(xi, f, xy, p_d, mu, R, l_c):
    n = len(f)
    if xi is None:
        return [(1 - mu) * (1 - p_d * f[s]) for s in range(n)]
    nvis = sum(f)
    fa = 0.0
    if nvis:
        for j in range(n):
            if f[j]:
                fa += gauss2(xi, xy[j], R) * l_c * l_c / nvis
    return [(1 - mu) * p_d * f[s] * gauss2(xi, xy[s], R) * l_c * l_c + mu * fa for s in range(n)]


def random_scene(rng):
    n = int(rng.integers(1, 40))
    xy = rng.uniform(-60, 60, (n, 2))
    f = (rng.random(n) < rng.random()).astype(int)
    A = rng.normal(size=(2, 2))
    R = A @ A.T * 10 + np.eye(2) * rng.uniform(1, 30)
    p = SensorParams(float(rng.random()), float(rng.random() * 0.5), tuple(map(tuple, R)))
    xi = None if rng.random() < 0.3 else rng.uniform(-60, 60, 2)
    return xi, f, xy, p


class TestLikelihood:
    def test_matches_term_by_term(self, rng):
        for _ in range(1000):
            xi, f, xy, p = random_scene(rng)
            l_c = float(rng.choice([1.0, 5.0, 10.0]))
            got = likelihood(xi, f.astype(bool), xy, p, l_c)
            want = oracle_likelihood(xi, f.tolist(), xy.tolist(), p.p_d, p.mu, p.R, l_c)
            assert np.allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_eta_single_state(self):
        R = np.array([[20.0, 0.0], [0.0, 20.0]])
        got = eta((1.0, 2.0), np.array([[0.0, 0.0]]), R, 5.0)[0]
        assert got == pytest.approx(25 * math.exp(-5 / 40) / (2 * math.pi * 20), rel=1e-14)

    def test_false_alarm_source_uniform(self):
        g = false_alarm_source_dist(np.array([1, 0, 1, 1]))
        assert np.allclose(g, [1 / 3, 0, 1 / 3, 1 / 3])
        assert not false_alarm_source_dist(np.zeros(3)).any()

    def test_null_measurement_perfect_sensor(self):
        p = SensorParams(1.0, 0.0)
        f = np.array([1, 0, 1, 0], bool)
        assert list(likelihood(None, f, np.zeros((4, 2)), p, 5.0)) == [0, 1, 0, 1]

    @pytest.mark.parametrize("kw", [{"p_d": 1.5}, {"mu": -0.1}, {"R": ((1, 2), (2, 1))},
                                    {"R": ((1, 0), (1, 1))}, {"l_max": 0}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            SensorParams(**kw)


class TestRBE:
    def test_normalization_over_many_updates(self, u_model, u_graph):
        rng = np.random.default_rng(7)
        worst = 0.0
        n = u_model.n
        xy = u_graph.node_xy
        p = SensorParams(0.8, 0.2)
        for _seq in range(100):
            b = u_graph.uniform_belief()
            for _ in range(100):
                b = rbe_predict(b, u_model)
                f = rng.random(n) < 0.5
                xi = None if rng.random() < 0.5 else xy[rng.integers(n)] + rng.normal(0, 4, 2)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateUpdateWarning)
                    b = rbe_update(b, likelihood(xi, f, xy, p, 5.0))
                worst = max(worst, abs(b.sum() - 1))
        assert worst <= 1e-9

    def test_null_zeroes_visible_support(self, rng):
        p = SensorParams(1.0, 0.0)
        for _ in range(200):
            n = int(rng.integers(2, 50))
            prior = rng.random(n) + 1e-3
            prior /= prior.sum()
            f = rng.random(n) < 0.5
            if f.all():
                f[0] = False
            post = rbe_update(prior, likelihood(None, f, np.zeros((n, 2)), p, 5.0))
            assert np.all(post[f] == 0)
            assert np.all(post[~f] > 0)

    def test_degenerate_keeps_prior(self):
        prior = np.array([0.5, 0.5])
        with pytest.warns(DegenerateUpdateWarning):
            post, ok = rbe_update(prior, np.zeros(2), return_flag=True)
        assert not ok and np.array_equal(post, prior)

    def test_predict_zero_steps(self, u_model, u_graph):
        b = u_graph.uniform_belief()
        assert np.array_equal(rbe_predict(b, u_model, 0), b)
        with pytest.raises(ValueError):
            rbe_predict(b, u_model, -1)


class TestSense:
    def test_case_frequencies(self):
        p = SensorParams(0.7, 0.2)
        xy = np.array([[0.0, 0.0], [100.0, 0.0]])
        f = np.array([True, True])
        n = 20000
        rd, rf, rn = (np.random.default_rng(i) for i in range(3))
        cases = {"fa": 0, "det": 0, "miss": 0}
        for _ in range(n):
            # peek at the false-alarm draw by replaying the same stream
            state = rf.bit_generator.state
            r_f = rf.random()
            rf.bit_generator.state = state
            xi = sense(0, f, xy, p, rd, rf, rn)
            if r_f <= p.mu:
                cases["fa"] += 1
            elif xi is not None:
                cases["det"] += 1
            else:
                cases["miss"] += 1
        want = {"fa": p.mu, "det": (1 - p.mu) * p.p_d, "miss": (1 - p.mu) * (1 - p.p_d)}
        for k, pk in want.items():
            sd = math.sqrt(n * pk * (1 - pk))
            assert abs(cases[k] - n * pk) <= 3 * sd, (k, cases[k], n * pk)

    def test_invisible_target_never_detected(self):
        p = SensorParams(1.0, 0.0)
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert sense(1, np.array([True, False]), np.zeros((2, 2)), p, rng, rng) is None

    def test_false_alarm_without_view_is_null(self):
        p = SensorParams(1.0, 1.0)
        rng = np.random.default_rng(0)
        assert sense(0, np.zeros(2, bool), np.zeros((2, 2)), p, rng, rng) is None

    def test_detection_noise_covariance(self):
        p = SensorParams(1.0, 0.0, ((20.0, 5.0), (5.0, 10.0)))
        rng = np.random.default_rng(1)
        xs = np.array([sense(0, np.array([True]), np.array([[3.0, 4.0]]), p, rng, rng)
                       for _ in range(20000)])
        assert np.allclose(xs.mean(axis=0), (3, 4), atol=0.1)
        assert np.allclose(np.cov(xs.T), p.R_array, rtol=0.05)


class TestCovariance:
    def test_pairwise_enumeration(self, u_graph, rng):
        from vvsearch.target import all_pairs_graph_distance
        D = all_pairs_graph_distance(u_graph)
        npnt, spd = u_graph.node_point, u_graph.node_speed
        for _ in range(5):
            p = rng.random(u_graph.n_nodes) ** 8
            p /= p.sum()
            cov = belief_covariance(p, npnt, spd, D)
            sn = sv = 0.0
            for i in range(len(p)):
                for j in range(len(p)):
                    w = p[i] * p[j]
                    sn += w * D[npnt[i], npnt[j]] ** 2
                    sv += w * (spd[i] - spd[j]) ** 2
            assert cov.sigma_n2 == pytest.approx(sn, rel=1e-9, abs=1e-9)
            assert cov.sigma_v2 == pytest.approx(sv, rel=1e-9, abs=1e-9)
            assert cov.trace == pytest.approx(sn + sv, rel=1e-9)

    def test_point_mass_has_zero_spread(self, u_graph):
        from vvsearch.target import all_pairs_graph_distance
        p = np.zeros(u_graph.n_nodes)
        p[17] = 1.0
        cov = belief_covariance(p, u_graph.node_point, u_graph.node_speed,
                                all_pairs_graph_distance(u_graph))
        assert cov.trace == 0.0
