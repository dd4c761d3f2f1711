import math

import numpy as np
import pytest

from jointdp.data import ProblemSpec, generate, sample_task
from jointdp.harness import analytic_minimizer
from jointdp.losses import (
    grad_mean_blocks,
    paired_excess_estimate,
    shared_mean_huber_model,
    shared_mean_norm_model,
)
from jointdp.optim import (
    OptimizerConfig,
    default_smooth_T,
    initial_params,
    run,
    run_full_dp,
    run_nsgd,
    run_per_silo,
    run_rsgd,
    run_smooth_nsgd,
)
from jointdp.params import ConfigurationError, DomainSpec, in_domain
from jointdp.privacy import PrivacySpec


def build(n=4, k=2, ell=8, d_x=1.0, d_u=2.0, m=8, r=None, noise=0.1, het=0.5, seed=0,
          kind="shared_mean"):
    dom = DomainSpec(n=n, k=k, ell=ell, d_x=d_x, d_u=d_u)
    task = sample_task(kind, dom, het, noise, seed)
    r = m if r is None else r
    prob = ProblemSpec(n, m, r, task.record_dim, seed + 1)
    return dom, task, generate(task, prob)


MODEL = shared_mean_norm_model()


def test_config_validation():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(paradigm="bogus", T=10)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(paradigm="collab_no_dp", T=0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(paradigm="joint_dp", T=10)  # level none for a DP paradigm
    with pytest.raises(ConfigurationError):
        OptimizerConfig(paradigm="joint_dp", T=10, privacy=PrivacySpec(1.0, 1e-5, "full_dp_record"))
    with pytest.raises(ConfigurationError):
        OptimizerConfig(paradigm="collab_no_dp", T=10, eta=-1.0)


def test_initial_params_policies():
    dom = DomainSpec(3, 2, 4, 1.0, 2.0)
    origin = initial_params(dom, "origin")
    assert not origin.personalized.any() and not origin.shared.any()
    a = initial_params(dom, "random_in_domain", seed=5)
    b = initial_params(dom, "random_in_domain", seed=5)
    assert np.array_equal(a.personalized, b.personalized)
    assert np.array_equal(a.shared, b.shared)
    assert in_domain(a, dom, tol=0.0)
    with pytest.raises(ConfigurationError):
        initial_params(dom, "bogus")


def test_T1_returns_initial_point():
    dom, task, fed = build()
    for init in ("origin", "random_in_domain"):
        cfg = OptimizerConfig(paradigm="collab_no_dp", T=1, init=init, seed_init=3)
        res = run_rsgd(fed, MODEL, dom, cfg)
        start = initial_params(dom, init, 3)
        assert res.final_params.distance(start) == 0.0


def test_eta_zero_returns_initial_point():
    dom, task, fed = build()
    cfg = OptimizerConfig(paradigm="collab_no_dp", T=50, eta=0.0)
    res = run_rsgd(fed, MODEL, dom, cfg)
    assert res.final_params.distance(initial_params(dom, "origin")) == 0.0


def test_determinism_bitwise():
    dom, task, fed = build()
    cfg = OptimizerConfig(
        paradigm="joint_dp", T=300, privacy=PrivacySpec(1.0, 1e-5, "record"),
        seed_sampling=11, seed_noise=12,
    )
    a = run_nsgd(fed, MODEL, dom, cfg)
    b = run_nsgd(fed, MODEL, dom, cfg)
    assert np.array_equal(a.final_params.personalized, b.final_params.personalized)
    assert np.array_equal(a.final_params.shared, b.final_params.shared)


def test_noise_off_reduction_matches_rsgd_per_iterate():
    dom, task, fed = build()
    base = dict(T=64, seed_sampling=7, seed_noise=8, record_iterates=True)
    plain = run_rsgd(fed, MODEL, dom, OptimizerConfig(paradigm="collab_no_dp", **base))
    noisy = run_nsgd(
        fed, MODEL, dom,
        OptimizerConfig(paradigm="joint_dp", privacy=PrivacySpec(1.0, 1e-5, "record"),
                        force_zero_noise=True, eta=plain.eta, **base),
    )
    fulldp = run_full_dp(
        fed, MODEL, dom,
        OptimizerConfig(paradigm="full_dp", privacy=PrivacySpec(1.0, 1e-5, "full_dp_record"),
                        force_zero_noise=True, eta=plain.eta, **base),
    )
    for other in (noisy, fulldp):
        for it_a, it_b in zip(plain.iterates, other.iterates):
            assert it_a.distance(it_b) <= 1e-12
        assert plain.final_params.distance(other.final_params) <= 1e-12


def test_k0_full_dp_bitwise_equals_joint_dp():
    dom, task, fed = build(k=0, d_x=0.0)
    base = dict(T=200, seed_sampling=5, seed_noise=6, eta=0.01)
    joint = run_nsgd(
        fed, MODEL, dom,
        OptimizerConfig(paradigm="joint_dp", privacy=PrivacySpec(1.0, 1e-5, "record"), **base),
    )
    full = run_full_dp(
        fed, MODEL, dom,
        OptimizerConfig(paradigm="full_dp", privacy=PrivacySpec(1.0, 1e-5, "full_dp_record"), **base),
    )
    assert np.array_equal(joint.final_params.shared, full.final_params.shared)
    assert np.array_equal(joint.final_params.personalized, full.final_params.personalized)


def test_untouched_owner_blocks_keep_initial_value():
    dom, task, fed = build(n=16, m=4)
    cfg = OptimizerConfig(
        paradigm="joint_dp", T=8, privacy=PrivacySpec(1.0, 1e-5, "record"),
        init="random_in_domain", seed_init=9, seed_sampling=1,
    )
    res = run_nsgd(fed, MODEL, dom, cfg)
    start = initial_params(dom, "random_in_domain", 9)
    # sampling stream: i-draws come first, j-draws second; recompute exactly
    rng = np.random.default_rng(1)
    rng.integers(0, fed.m, size=8)
    touched = set(int(j) for j in rng.integers(0, 16, size=8))
    untouched = [j for j in range(16) if j not in touched]
    assert untouched, "test needs at least one untouched owner"
    for j in untouched:
        assert np.array_equal(res.final_params.personalized[j], start.personalized[j])


def test_every_iterate_in_domain():
    dom, task, fed = build(d_x=0.5, d_u=1.0)
    cfg = OptimizerConfig(
        paradigm="joint_dp", T=100, privacy=PrivacySpec(0.5, 1e-5, "record"),
        eta=0.5, record_iterates=True, seed_sampling=2, seed_noise=3,
    )
    res = run_nsgd(fed, MODEL, dom, cfg)
    for it in res.iterates:
        assert in_domain(it, dom, tol=1e-12)
    assert in_domain(res.final_params, dom, tol=1e-12)


def test_rsgd_excess_decreases_monotonically_in_T():
    # degenerate noise: population loss equals empirical loss, measured exactly
    dom, task, fed = build(noise=0.0, het=0.6, seed=4)
    reference = analytic_minimizer(task)
    means = []
    for T in (100, 1000, 10_000):
        excesses = []
        for s in range(20):
            cfg = OptimizerConfig(paradigm="collab_no_dp", T=T, seed_sampling=s)
            res = run_rsgd(fed, MODEL, dom, cfg)
            exc = paired_excess_estimate(MODEL, res.final_params, reference, task, 64, seed=0)
            excesses.append(exc.value)
        means.append(float(np.mean(excesses)))
    init_excess = paired_excess_estimate(
        MODEL, initial_params(dom, "origin"), reference, task, 64, seed=0
    ).value
    assert means[0] <= init_excess
    assert means[0] > means[1] > means[2]


def test_nsgd_epsilon_ordering_mean_over_seeds():
    dom, task, fed = build(n=2, m=4, ell=32, noise=0.05, seed=6)
    diffs = []
    for s in range(12):
        results = {}
        for eps in (0.5, 10.0):
            cfg = OptimizerConfig(
                paradigm="joint_dp", T=1024, privacy=PrivacySpec(eps, 1e-5, "record"),
                seed_sampling=100 + s, seed_noise=200 + s,
            )
            res = run_nsgd(fed, MODEL, dom, cfg)
            exc = paired_excess_estimate(
                MODEL, res.final_params, analytic_minimizer(task), task, 2000, seed=s
            )
            results[eps] = exc.value
        diffs.append(results[10.0] - results[0.5])
    assert np.mean(diffs) < 0


def test_per_silo_n1_identical_to_rsgd():
    dom, task, fed = build(n=1, m=16)
    cfg_silo = OptimizerConfig(paradigm="per_silo", T=400, seed_sampling=3)
    cfg_rsgd = OptimizerConfig(paradigm="collab_no_dp", T=400, seed_sampling=3)
    silo = run_per_silo(fed, MODEL, dom, cfg_silo)
    plain = run_rsgd(fed, MODEL, dom, cfg_rsgd)
    assert silo.T == plain.T == 400
    assert silo.final_params.distance(plain.final_params) <= 1e-12
    assert np.allclose(silo.per_owner_shared[0], plain.final_params.shared, atol=1e-12)


def test_per_silo_identical_owners_produce_identical_params():
    dom, task, fed = build(noise=0.0, het=0.0, seed=8)  # all owners hold the same records
    cfg = OptimizerConfig(paradigm="per_silo", T=1600, seed_sampling=4)
    res = run_per_silo(fed, MODEL, dom, cfg)
    for j in range(1, dom.n):
        assert np.array_equal(res.final_params.personalized[j], res.final_params.personalized[0])
        assert np.array_equal(res.per_owner_shared[j], res.per_owner_shared[0])


def test_per_silo_approaches_collab_with_large_m_when_homogeneous():
    gaps = []
    for m in (16, 64, 256):
        dom, task, fed = build(n=2, m=m, noise=0.15, het=0.0, seed=9)
        reference = analytic_minimizer(task)
        T = min(m * m * 4, 65536)
        silo_exc, collab_exc = [], []
        for s in range(6):
            silo = run_per_silo(fed, MODEL, dom, OptimizerConfig(paradigm="per_silo", T=T, seed_sampling=50 + s))
            collab = run_rsgd(fed, MODEL, dom, OptimizerConfig(paradigm="collab_no_dp", T=T, seed_sampling=50 + s))
            silo_exc.append(
                paired_excess_estimate(MODEL, silo.final_params, reference, task, 2000, seed=s,
                                       per_owner_shared=silo.per_owner_shared).value
            )
            collab_exc.append(
                paired_excess_estimate(MODEL, collab.final_params, reference, task, 2000, seed=s).value
            )
        gaps.append(float(np.mean(silo_exc) - np.mean(collab_exc)))
    assert abs(gaps[-1]) < abs(gaps[0])
    assert abs(gaps[-1]) < 0.02


def test_smooth_zero_noise_matches_owner_batch_oracle():
    model = shared_mean_huber_model(0.1)
    dom, task, fed = build(n=4, m=16, r=4, noise=0.1, seed=10)
    T = 64
    cfg = OptimizerConfig(
        paradigm="smooth_joint_dp", T=T, privacy=PrivacySpec(1.0, 1e-5, "user"),
        force_zero_noise=True, seed_sampling=21, seed_noise=22, record_iterates=True,
    )
    res = run_smooth_nsgd(fed, model, dom, cfg)

    # independent oracle: projected SGD on the sampled owner's full-batch mean
    rng = np.random.default_rng(21)
    j_arr = rng.integers(0, dom.n, size=T)
    pers = np.zeros((dom.n, dom.k))
    u = np.zeros(dom.ell)
    rx, ru = dom.d_x / 2, dom.d_u / 2
    eta = res.eta
    for t in range(T):
        j = int(j_arr[t])
        gx, gu = grad_mean_blocks(model, pers[j], u, fed.shards[j])
        v = pers[j] - eta * gx
        nv = np.linalg.norm(v)
        pers[j] = v if nv <= rx else v * (rx / nv)
        w = u - eta * gu
        nw = np.linalg.norm(w)
        u = w if nw <= ru else w * (ru / nw)
        it = res.iterates[t]
        # compare the recorded pre-update iterate at step t against the oracle state
        if t + 1 < T:
            assert np.allclose(res.iterates[t + 1].personalized, pers, atol=1e-12)
            assert np.allclose(res.iterates[t + 1].shared, u, atol=1e-12)


def test_smooth_singleton_shards_allowed_and_zero_grad_fixed_point():
    model = shared_mean_huber_model(0.1)
    # d_x = 0 and shared_offset 0 put every record at the origin; the huber
    # gradient at the origin is 0, so the run never moves
    dom = DomainSpec(n=4, k=0, ell=6, d_x=0.0, d_u=2.0)
    task = sample_task("shared_mean", dom, 0.0, 0.0, seed=2, shared_offset=0.0)
    prob = ProblemSpec(4, 8, 8, task.record_dim, 3)
    fed = generate(task, prob)
    cfg = OptimizerConfig(
        paradigm="smooth_joint_dp", T=16, privacy=PrivacySpec(1.0, 1e-5, "user"),
        force_zero_noise=True, seed_sampling=1, seed_noise=2,
    )
    res = run_smooth_nsgd(fed, model, dom, cfg)
    assert not res.final_params.shared.any()


def test_smooth_requires_smoothness_and_two_users():
    dom, task, fed = build(r=1, m=8)
    cfg = OptimizerConfig(
        paradigm="smooth_joint_dp", T=4, privacy=PrivacySpec(1.0, 1e-5, "user")
    )
    with pytest.raises(ConfigurationError):
        run_smooth_nsgd(fed, MODEL, dom, cfg)  # norm loss is not smooth
    model = shared_mean_huber_model(0.1)
    with pytest.raises(ConfigurationError):
        run_smooth_nsgd(fed, model, dom, cfg)  # r = 1


def test_default_smooth_T():
    assert default_smooth_T(32, 1e-5) == round(1024 / math.log(1e5))
    assert default_smooth_T(1, 0.5) >= 1


def test_trace_collects_checkpoints(tmp_path):
    dom, task, fed = build()
    path = tmp_path / "trace.txt"
    cfg = OptimizerConfig(
        paradigm="collab_no_dp", T=50, trace_every=10, trace_path=str(path), seed_sampling=1
    )
    res = run_rsgd(fed, MODEL, dom, cfg)
    assert [t for t, _ in res.trace] == [0, 10, 20, 30, 40]
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 5
    t0, val0, _ = lines[0].split(",")
    assert int(t0) == 0 and float(val0) == res.trace[0][1]


def test_dispatcher_routes_by_paradigm():
    dom, task, fed = build()
    cfg = OptimizerConfig(paradigm="per_silo", T=64, seed_sampling=1)
    res = run(fed, MODEL, dom, cfg)
    assert res.paradigm == "per_silo"
    assert res.per_owner_shared is not None
