import warnings

import numpy as np
import pytest

from ilc_sos.polyalg import AffinePoly
from ilc_sos import timedomain as td
from ilc_sos import verify as vf
from ilc_sos.freqdomain import UncertainTransferFunction, simplexify


def const_markov(values, lam=()):
    return tuple(AffinePoly.constant(lam, v) for v in values)


def lin(lam, c0, *cs):
    """c0 + sum of cs[i]*lam[i]."""
    p = AffinePoly.constant(lam, c0)
    for i, c in enumerate(cs):
        exps = tuple(1 if j == i else 0 for j in range(len(lam)))
        p = p + AffinePoly.monomial(lam, exps, c)
    return p


LAM2 = ("lam1", "lam2")


def at(pt):
    return dict(zip(LAM2, pt))


# -- impulse-response extraction --------------------------------------------


def test_markov_matches_difference_equation():
    # simulate the monic difference equation directly as the oracle
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(0, n))
        num = rng.normal(size=m + 1)
        den = rng.normal(size=n + 1)
        den[-1] = rng.choice([-1, 1]) * (1 + rng.random())
        K = 12
        a = den / den[-1]
        b = np.zeros(n + 1)
        b[: m + 1] = num / den[-1]
        y = np.zeros(K + 2)
        u = np.zeros(K + 2)
        u[0] = 1.0
        for k in range(K + 1):
            acc = 0.0
            for i in range(n + 1):
                if k - (n - i) >= 0:
                    acc += b[i] * u[k - (n - i)]
            for i in range(n):
                if k - (n - i) >= 0:
                    acc -= a[i] * y[k - (n - i)]
            y[k] = acc
        h = td.markov_from_coeffs(num, den, K)
        # h[i] is the response one step after the pulse
        assert np.allclose(h, y[1 : K + 1], atol=1e-10)


def test_markov_paper_plant_first_sample():
    # long division of (-40z + 60*th + 16) / (20z^2 + (4+20*th)z + 16*th + 1)
    for th in np.linspace(-0.7, -0.5, 7):
        h = td.markov_from_coeffs([16 + 60 * th, -40.0],
                                  [16 * th + 1, 4 + 20 * th, 20.0], 4)
        assert h[0] == pytest.approx(-2.0, abs=1e-12)


def test_markov_rejects_improper():
    with pytest.raises(ValueError):
        td.markov_from_coeffs([1.0, 2.0], [0.5, 1.0], 3)


# -- lifted matrices ---------------------------------------------------------


def test_build_lifted_plant_small():
    P = td.build_lifted_plant(const_markov([1.0, 2.0]), 2)
    vals = P.evaluate({}, {})
    assert np.array_equal(vals, [[1.0, 0.0], [2.0, 1.0]])


def test_build_lifted_plant_placement():
    p = (lin(LAM2, 0, 1, 0), lin(LAM2, 0, 0, 1), lin(LAM2, 1))
    P = td.build_lifted_plant(p, 3)
    vals = P.evaluate(at([0.3, 0.7]), {})
    assert vals[2][0] == pytest.approx(1.0)
    assert vals[2][2] == pytest.approx(0.3)
    assert vals[0][1] == 0.0 and vals[0][2] == 0.0


def test_build_filter_matrix_full_toeplitz():
    # taps (l_{-1}, l0, l1) = (a, b, c) -> [[b, a], [c, b]]
    f = td.LiftedFilter(2, ("a", "b", "c"))
    L = td.build_filter_matrix(f, 2)
    vals = L.evaluate({}, {"a": 0.1, "b": 0.2, "c": 0.3})
    assert np.allclose(vals, [[0.2, 0.1], [0.3, 0.2]])


def test_build_filter_matrix_identity_and_leads():
    q = td.LiftedFilter.identity(3)
    vals = td.build_filter_matrix(q, 3).evaluate({}, {})
    assert np.array_equal(vals, np.eye(3))
    l = td.LiftedFilter.full_decision(3)
    M = td.build_filter_matrix(l, 3)
    zero_gains = {d: 0.0 for d in l.decision_ids()}
    assert M.evaluate({}, zero_gains)[0][2] == 0.0
    lead_only = dict(zero_gains)
    lead_only[l.coeffs[0]] = 1.0  # the two-step lead tap c_{-2}
    assert M.evaluate({}, lead_only)[0][2] == 1.0


def test_filter_length_checked():
    with pytest.raises(ValueError):
        td.LiftedFilter(2, (1.0, 0.0))


# -- the LMI block matrix ----------------------------------------------------


def test_build_M_scalar_nominal():
    plant = td.LiftedUncertainPlant(1, const_markov([1.0]), ())
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(1),
                                   td.LiftedFilter.causal_decision(1))
    M = td.build_M(prob)
    for l0, eta in [(0.0, 1.0), (0.7, 0.4), (1.0, 0.0)]:
        vals = M.evaluate({}, {"eta": eta, "l0": l0})
        assert np.allclose(vals, [[eta, 1 - l0], [1 - l0, 1.0]])


def test_build_M_uncertain_scalar_hand_expansion():
    plant = td.LiftedUncertainPlant(1, (lin(LAM2, 0, 1, 2),), LAM2)
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(1),
                                   td.LiftedFilter.causal_decision(1))
    M = td.build_M(prob)
    # every entry homogeneous of degree 2 in lambda
    for e in M.entries:
        assert {sum(exp) for exp in e.terms} <= {2}
    rng = np.random.default_rng(3)
    for _ in range(100):
        pt = rng.dirichlet([1, 1])
        eta, l0 = rng.normal(size=2)
        a = pt[0] + 2 * pt[1]
        W = a * (1 - l0 * a)
        vals = M.evaluate(at(pt), {"eta": eta, "l0": l0})
        assert np.allclose(vals, [[eta * a * a, W], [W, 1.0]], atol=1e-12)


def test_build_M_symmetric():
    rng = np.random.default_rng(8)
    plant = td.LiftedUncertainPlant(
        3, tuple(lin(LAM2, rng.normal() + 2, rng.normal(), rng.normal())
                 for _ in range(3)), LAM2)
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(3),
                                   td.LiftedFilter.causal_decision(3))
    M = td.build_M(prob)
    gains = {d: rng.normal() for d in prob.lstructure.decision_ids()}
    gains["eta"] = 0.3
    for _ in range(10):
        vals = np.asarray(M.evaluate(at(rng.dirichlet([1, 1])), gains))
        assert np.allclose(vals, vals.T, atol=1e-12)


def test_error_dynamics_factorization():
    # P Q (I - L P) P^-1 must equal W / det(P) everywhere
    rng = np.random.default_rng(17)
    N = 3
    plant = td.LiftedUncertainPlant(
        N, tuple(lin(LAM2, rng.normal() + 2.5, rng.normal(), rng.normal())
                 for _ in range(N)), LAM2)
    q = td.LiftedFilter.identity(N)
    lstr = td.LiftedFilter.causal_decision(N)
    prob = td.TimeSynthesisProblem(plant, q, lstr)
    M = td.build_M(prob)
    for _ in range(100):
        pt = rng.dirichlet([1, 1])
        gains = {d: rng.normal() for d in lstr.decision_ids()}
        gains["eta"] = 0.0
        G = td.contraction_matrix(plant, q.numeric(), lstr.numeric(gains), pt)
        vals = np.asarray(M.evaluate(at(pt), gains))
        det = plant.markov_at(pt)[0] ** N
        W = vals[N:, :N]
        assert np.max(np.abs(G - W / det)) < 1e-8


# -- synthesis ---------------------------------------------------------------


def test_synth_nominal_scalar_deadbeat():
    plant = td.LiftedUncertainPlant(1, const_markov([1.0]), ())
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(1),
                                   td.LiftedFilter.causal_decision(1))
    res = prob.solve()
    assert res.certified
    assert res.gamma <= 1e-4
    assert res.gains["l0"] == pytest.approx(1.0, abs=1e-3)


def test_synth_uncertain_n2_vs_sampled():
    plant = td.LiftedUncertainPlant(
        2, (lin(LAM2, 1.0), lin(LAM2, 0, 1, -1)), LAM2)
    q = td.LiftedFilter.identity(2)
    prob = td.TimeSynthesisProblem(plant, q, td.LiftedFilter.causal_decision(2),
                                   k_max=2)
    res = prob.solve()
    assert res.certified and res.gamma < 1
    taps = np.concatenate([np.zeros(1), res.gain_list])  # (l_{-1}, l0, l1)
    # dense segment grid over the 1-simplex
    t = np.linspace(0, 1, 201)
    grid = vf.SampleGrid(np.column_stack([t, 1 - t]), np.zeros(1), seed=0)
    gam_hat, _ = vf.sampled_gamma_time(plant, q.numeric(), taps, grid)
    assert gam_hat <= res.gamma + 1e-6
    assert abs(gam_hat - res.gamma) <= 0.01 * res.gamma


def test_synth_k_escalation_monotone():
    rng = np.random.default_rng(29)
    for _ in range(2):
        plant = td.LiftedUncertainPlant(
            2, (lin(LAM2, 2 + rng.random(), rng.normal(), rng.normal()),
                lin(LAM2, 0, rng.normal(), rng.normal())), LAM2)
        prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(2),
                                       td.LiftedFilter.causal_decision(2),
                                       k_max=1, k_tol=0.0)
        trace = dict(prob.solve().k_trace)
        assert trace[1] <= trace[0] + 1e-6


def test_large_horizon_rejected():
    plant = td.LiftedUncertainPlant(9, const_markov([1.0] + [0.0] * 8), ())
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(9),
                                   td.LiftedFilter.causal_decision(9))
    with pytest.raises(ValueError, match="synth_freq"):
        prob.solve()


def test_vanishing_lead_markov_rejected():
    with pytest.raises(td.SingularPlant):
        td.LiftedUncertainPlant(1, (lin(LAM2, 0, 1, 0),), LAM2)


def test_problem_validation():
    plant = td.LiftedUncertainPlant(1, const_markov([1.0]), ())
    with pytest.raises(ValueError):
        td.TimeSynthesisProblem(plant, td.LiftedFilter.identity(1),
                                td.LiftedFilter.causal_decision(1), epsilon=0.0)
    with pytest.raises(ValueError):
        td.TimeSynthesisProblem(plant, td.LiftedFilter.causal_decision(1),
                                td.LiftedFilter.causal_decision(1))


def test_from_transfer_lifts_paper_plant():
    tv = ("theta",)
    plant = simplexify(
        [lin(tv, 16, 60), lin(tv, -40)],
        [lin(tv, 1, 16), lin(tv, 4, 20), lin(tv, -20)],
        [[-0.5], [-0.7]], theta_vars=tv)
    lifted = td.LiftedUncertainPlant.from_transfer(plant, 4)
    # markov samples must match plain numeric long division at each theta
    for pt in [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.4, 0.6])]:
        th = -0.5 * pt[0] - 0.7 * pt[1]
        ref = td.markov_from_coeffs([16 + 60 * th, -40.0],
                                    [16 * th + 1, 4 + 20 * th, -20.0], 4)
        assert np.allclose(lifted.markov_at(pt), ref, atol=1e-12)


def test_from_transfer_requires_strictly_proper():
    plant = UncertainTransferFunction.from_coeffs([1.0, 1.0], [0.5, 1.0], ())
    with pytest.raises(ValueError):
        td.LiftedUncertainPlant.from_transfer(plant, 3)


def test_infeasible_contraction_warns_not_raises():
    # Q = 2I forces gamma >= 2|1 - l0 p1| with p1 in [1, 4]: best is 1.2
    plant = td.LiftedUncertainPlant(1, (lin(LAM2, 0, 1.0, 4.0),), LAM2)
    prob = td.TimeSynthesisProblem(plant, td.LiftedFilter(1, (2.0,)),
                                   td.LiftedFilter.causal_decision(1), k_max=1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = prob.solve()
    assert res.not_monotone
    assert res.gamma >= 1.0
    assert any(issubclass(w.category, td.InfeasibleAtAllK) for w in caught)
