import numpy as np
import pytest

from conftest import crandn
from fda_codesign import sdp
from fda_codesign.codesign import (DesignContext, build_waveform_sdp, build_weight_sdp,
                                   load_weights, randomize_waveform, randomize_weights,
                                   run_mode, seed_streams, similarity_lift)
from fda_codesign.scenario import (InfeasibleScenario, SharedBandSpec, standard_scenario,
                                   reduced_scenario)
from fda_codesign.signal_model import WaveformSet

cp = pytest.importorskip("cvxpy")


@pytest.fixture(scope="module")
def standard_ctx():
    return DesignContext(standard_scenario())


def test_similarity_lift_matches_euclidean_bound(rng):
    ref = crandn(rng, 5)
    ref *= np.sqrt(5) / np.linalg.norm(ref)
    M, rhs = similarity_lift(ref, 5.0, 2.0)
    for _ in range(200):
        x = crandn(rng, 5)
        x *= np.sqrt(5) / np.linalg.norm(x)
        # best phase of x relative to the reference
        x_al = x * np.exp(-1j * np.angle(np.vdot(ref, x)))
        lifted_ok = np.vdot(x, M @ x).real <= rhs + 1e-12
        assert lifted_ok == (np.linalg.norm(x_al - ref) ** 2 <= 2.0 + 1e-12)
    assert similarity_lift(ref, 5.0, 20.0) is None  # vacuous: ||x - ref||^2 <= 20 always
    M, rhs = similarity_lift(ref, 5.0, 3.0, verbatim=True)
    np.testing.assert_allclose(M, np.eye(5) - np.outer(ref, ref.conj()))
    assert rhs == 3.0


def test_standard_similarity_settings_are_vacuous(standard_ctx):
    assert similarity_lift(standard_ctx.w_ref, 6, 15.0) is None
    assert similarity_lift(standard_ctx.s_ref, 1.0, 6.0) is None


def test_weight_sdp_unconstrained_is_eigenprojector(standard_ctx):
    scn = standard_scenario().replace(shared_bands=()).with_controls(weight_similarity=1e6)
    ctx = DesignContext(scn)
    prob = build_weight_sdp(ctx.s_ref, ctx)
    assert len(prob.le_constraints) == 0
    sol = sdp.solve(prob)
    lam = np.linalg.eigvalsh(prob.objective)
    assert sol.objective_value == pytest.approx(6 * lam[-1], rel=1e-7)


def test_weight_similarity_zero_pins_reference():
    scn = reduced_scenario().with_controls(weight_similarity=0.0)
    ctx = DesignContext(scn)
    sol = sdp.solve(build_weight_sdp(ctx.s_ref, ctx))
    np.testing.assert_allclose(sol.x_opt, np.outer(ctx.w_ref, ctx.w_ref), atol=1e-4)


def test_weight_sdp_standard_against_conic_oracle(standard_ctx):
    prob = build_weight_sdp(standard_ctx.s_ref, standard_ctx)
    sol = sdp.solve(prob)
    assert sol.status == "optimal"
    assert max(prob.residuals(sol.x_opt).values()) <= 1e-6
    n = prob.dim
    X = cp.Variable((n, n), hermitian=True)
    tr = lambda A: cp.real(cp.trace(A @ X))
    cons = [X >> 0] + [tr(A) == b for A, b in prob.eq_constraints] \
        + [tr(A) <= b for A, b in prob.le_constraints]
    ref = cp.Problem(cp.Maximize(tr(prob.objective)), cons)
    ref.solve(solver=cp.CLARABEL)
    assert sol.objective_value == pytest.approx(ref.value, rel=1e-6)


def test_waveform_sdp_single_channel_lambda_max():
    scn = reduced_scenario(n_tx=1, n_rx=2, n_samples=2, interferers=()) \
        .with_controls(waveform_similarity=10.0)
    scn = scn.replace(array=scn.array.__class__(**{**scn.array.__dict__, "inband_tolerance": 1e-6}))
    ctx = DesignContext(scn)
    prob = build_waveform_sdp(np.ones(1, dtype=complex), ctx)
    sol = sdp.solve(prob)
    assert sol.objective_value == pytest.approx(np.linalg.eigvalsh(prob.objective)[-1], rel=1e-7)


def test_waveform_similarity_zero_pins_reference():
    scn = reduced_scenario(n_tx=2, n_samples=4).with_controls(waveform_similarity=0.0)
    ctx = DesignContext(scn)
    sol = sdp.solve(build_waveform_sdp(ctx.w_ref.astype(complex), ctx))
    np.testing.assert_allclose(sol.x_opt, np.outer(ctx.s_ref, ctx.s_ref.conj()), atol=1e-4)


def test_waveform_sdp_reduced_runtime():
    import time

    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05),))
    ctx = DesignContext(scn)
    t0 = time.perf_counter()
    sol = sdp.solve(build_waveform_sdp(ctx.w_ref.astype(complex), ctx))
    assert sol.status == "optimal" and time.perf_counter() - t0 < 60


def test_rank_one_shortcut_returns_phase_of_input(standard_ctx):
    ctx = standard_ctx
    w = np.exp(1j * np.linspace(0, 0.3, 6))
    out = randomize_weights(np.outer(w, w.conj()), ctx.s_ref, DesignContext(
        standard_scenario().replace(shared_bands=())), 50, np.random.default_rng(0))
    assert out.rank_one and out.n_trials == 1
    ph = np.vdot(w, out.vector) / 6
    assert abs(abs(ph) - 1) < 1e-10
    np.testing.assert_allclose(out.vector, w * ph, atol=1e-10)


def test_single_draw_feasible_without_constraints():
    scn = reduced_scenario(interferers=()).with_controls(weight_similarity=1e6)
    ctx = DesignContext(scn)
    G = crandn(np.random.default_rng(1), 3, 3)
    out = randomize_weights(G @ G.conj().T, ctx.s_ref, ctx, 1, np.random.default_rng(2))
    assert not out.exhausted and out.n_feasible == out.n_trials == 2
    assert np.linalg.norm(out.vector) ** 2 == pytest.approx(3, rel=1e-14)


def test_weight_rounding_regression(standard_ctx):
    sol = sdp.solve(build_weight_sdp(standard_ctx.s_ref, standard_ctx))
    out = randomize_weights(sol.x_opt, standard_ctx.s_ref, standard_ctx, 1000,
                            np.random.default_rng(12345))
    # fixture recorded from the first verified run
    assert (out.n_trials, out.n_feasible, out.winner) == (1001, 285, 608)
    assert out.objective == pytest.approx(3.9650030627346133, rel=1e-9)
    assert out.objective <= sol.objective_value + 1e-9


def test_waveform_rounding_block_energies_and_regression():
    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05),))
    ctx = DesignContext(scn)
    w = ctx.w_ref.astype(complex)
    sol = sdp.solve(build_waveform_sdp(w, ctx))
    out = randomize_waveform(sol.x_opt, w, ctx, 500, np.random.default_rng(12345))
    S = out.vector.reshape(3, 16)
    np.testing.assert_allclose(np.sum(np.abs(S) ** 2, axis=1), 1 / 3, atol=1e-14)
    assert ctx.feasible(out.vector, w)
    assert (out.n_trials, out.n_feasible, out.winner) == (501, 58, 295)
    assert out.objective == pytest.approx(1.999999996122418, rel=1e-9)


def test_rank_one_waveform_returns_point():
    scn = reduced_scenario()
    ctx = DesignContext(scn)
    out = randomize_waveform(np.outer(ctx.s_ref, ctx.s_ref.conj()), ctx.w_ref.astype(complex),
                             ctx, 10, np.random.default_rng(0))
    np.testing.assert_allclose(out.vector, ctx.s_ref, atol=1e-10)


def test_exhausted_rounding_keeps_incumbent():
    scn = reduced_scenario(bands=(SharedBandSpec(0.0, 0.34, 1e-9),))
    ctx = DesignContext(scn)
    G = crandn(np.random.default_rng(3), 3, 3)
    out = randomize_weights(G @ G.conj().T, ctx.s_ref, ctx, 20, np.random.default_rng(4),
                            incumbent=np.array([0, 0, np.sqrt(3)], dtype=complex))
    assert out.exhausted and out.n_feasible == 0
    np.testing.assert_array_equal(out.vector, [0, 0, np.sqrt(3)])


def test_interference_free_ceiling_all_modes():
    scn = standard_scenario(max_iters=1, n_randomizations=50).replace(interferers=(),
                                                                    shared_bands=())
    for mode in ("baseline", "joint"):
        assert run_mode(scn, mode).sinr_db == pytest.approx(6.0206, abs=0.1)


def test_waveform_only_precheck_names_band():
    with pytest.raises(InfeasibleScenario) as ei:
        run_mode(standard_scenario("joint", max_iters=1), "waveform_only")
    assert ei.value.constraint == "shared_band[1]"


def test_unknown_mode():
    with pytest.raises(ValueError):
        run_mode(reduced_scenario(), "both")


def test_trace_monotone_and_feasible():
    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05), SharedBandSpec(0.5, 0.9, 0.1)),
                           max_iters=3)
    res = run_mode(scn, "joint")
    assert res.feasible
    assert all(b >= a for a, b in zip(res.sinr_trace_db, res.sinr_trace_db[1:]))
    assert abs(np.linalg.norm(res.weights) ** 2 - 3) <= 1e-10
    np.testing.assert_allclose(res.waveform.energies, 1 / 3, atol=1e-10)
    assert all(e <= eta + 1e-8 for e, eta in zip(res.band_energies, res.band_limits))
    assert res.sinr_db == pytest.approx(res.sinr_trace_db[-1])


def test_determinism():
    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05),), rng_seed=9)
    a, b = run_mode(scn, "joint"), run_mode(scn, "joint")
    assert a.to_dict() == b.to_dict()
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.waveform.samples, b.waveform.samples)


def test_seed_streams_independent():
    s = seed_streams(7)
    draws = [np.random.default_rng(v).standard_normal(4) for v in s.values()]
    assert not np.allclose(draws[0], draws[1]) and not np.allclose(draws[1], draws[2])
    again = seed_streams(7)
    np.testing.assert_array_equal(np.random.default_rng(again["weight"]).standard_normal(4),
                                  draws[0])


def test_save_round_trip(tmp_path):
    res = run_mode(reduced_scenario(max_iters=1), "joint")
    res.save(tmp_path)
    np.testing.assert_array_equal(load_weights(tmp_path / "weights.csv"), res.weights)
    np.testing.assert_array_equal(WaveformSet.from_csv(tmp_path / "waveforms.csv").samples,
                                  res.waveform.samples)


def test_verbatim_similarity_weight_design_runs():
    res = run_mode(standard_scenario(), "weight_only", verbatim_similarity=True)
    assert res.feasible
    assert res.sinr_trace_db == sorted(res.sinr_trace_db)
