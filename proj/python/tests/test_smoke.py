import json
import math

import pytest

import blockpf


def small_model(seed=3):
    return blockpf.random_local_hmm(blockpf.build_chain(4, 1), seed=seed)


def test_version_and_graphs():
    assert blockpf.__version__
    g = blockpf.build_lattice(1, 2, 1)
    assert g.vertex_count == 5
    assert g.max_neighborhood == 3
    assert g.distance(0, 4) == 4


def test_exact_filter_matches_path_posterior():
    m = blockpf.random_local_hmm(blockpf.build_chain(3, 1), seed=7)
    _, obs = blockpf.simulate(m, [0, 0, 0], 4, 11)
    filt = blockpf.exact_filter(m, [0, 0, 0], obs)
    assert len(filt) == 5
    post = blockpf.path_posterior(m, [0, 0, 0], obs)
    assert blockpf.local_tv(filt[-1], post) < 1e-10


def test_block_filter_and_particles():
    m = small_model()
    part = blockpf.build_chain_blocks(m.graph, 2)
    _, obs = blockpf.simulate(m, [0] * 4, 5, 2)
    exact = blockpf.exact_block_filter_marginals(m, part, [0] * 4, obs)
    pf = blockpf.particle_filter_marginals(m, part, [0] * 4, obs, 5000, 9)
    for p, q in zip(exact, pf):
        assert abs(sum(q) - 1.0) < 1e-12
        assert blockpf.local_tv(p, q) < 0.1
    again = blockpf.particle_filter_marginals(m, part, [0] * 4, obs, 5000, 9)
    assert again == pf


def test_single_block_pf_matches_bootstrap():
    m = small_model()
    whole = blockpf.single_block(m.graph)
    _, obs = blockpf.simulate(m, [0] * 4, 3, 2)
    a = blockpf.particle_filter_marginals(m, whole, [0] * 4, obs, 300, 4, kind="block")
    b = blockpf.particle_filter_marginals(m, None, [0] * 4, obs, 300, 4, kind="bootstrap")
    assert a == b


def test_metrics():
    assert blockpf.local_tv([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.4)
    assert blockpf.tnorm_exact([[0.1, -0.1], [-0.1, 0.1]]) == pytest.approx(0.2)
    assert blockpf.effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(1 / 0.375)


def test_dobrushin_two_site():
    theta = 0.7
    dens = [math.exp(theta * a * b) for a in (-1, 1) for b in (-1, 1)]
    c = blockpf.dobrushin_coefficients(blockpf.FiniteMRF([2, 2], dens))
    assert c[0][1] == pytest.approx(abs(math.tanh(theta)))


def test_model_json_round_trip_and_errors():
    m = small_model()
    doc = m.to_json()
    model, part = blockpf.parse_model(doc)
    assert part is None
    assert model.vertex_count == 4
    doc["trans"][0][0] = [0.5, 0.4]
    with pytest.raises(blockpf.ConfigError):
        blockpf.parse_model(doc)


def test_scenario_is_reproducible():
    a = blockpf.run_scenario("bias_decay")
    b = blockpf.run_scenario("bias_decay")
    assert a["csv"] == b["csv"]
    assert a["metadata"]["all_passed"]
    json.dumps(a["metadata"])
    with pytest.raises(blockpf.ConfigError):
        blockpf.run_scenario("bias_decay", {"no_such_key": 1})
