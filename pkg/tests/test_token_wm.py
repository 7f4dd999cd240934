import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from wmlab import lm, prg, token_wm as tw
from wmlab.errors import DomainError, PreconditionError

KEY = prg.WatermarkKey.from_seed(2024)


def identity_aux(m):
    return prg.AuxAlphabet.from_permutation(range(m))


def point_mass_model(m, x):
    row = np.zeros(m)
    row[x] = 1.0
    return lm.NgramModel(0, m, table={(): row})


def test_build_aux_dist_examples():
    np.testing.assert_allclose(tw.build_aux_dist([0.5, 0.3, 0.2], identity_aux(3), 0.2).probs,
                               [0.2, 0.2, 0.2, 0.4], atol=1e-15)
    np.testing.assert_allclose(tw.build_aux_dist([0.5, 0.5], identity_aux(2), 1.0).probs, [0.5, 0.5, 0.0])
    np.testing.assert_allclose(tw.build_aux_dist([1.0, 0.0], identity_aux(2), 0.25).probs, [0.25, 0.0, 0.75])
    aux = prg.AuxAlphabet.from_permutation([2, 0, 1])
    # symbol h(x) carries token x's capped mass
    np.testing.assert_allclose(tw.build_aux_dist([0.5, 0.3, 0.2], aux, 0.4).probs, [0.3, 0.2, 0.4, 0.1])
    with pytest.raises(DomainError):
        tw.build_aux_dist([0.5, 0.5], identity_aux(2), 0.0)


def test_residual_examples():
    np.testing.assert_allclose(tw.residual_dist([0.5, 0.3, 0.2], 0.2).probs, [0.75, 0.25, 0.0])
    np.testing.assert_allclose(tw.residual_dist([1.0, 0.0], 0.25).probs, [1.0, 0.0])
    np.testing.assert_allclose(tw.residual_dist([0.6, 0.4], 0.5).probs, [1.0, 0.0])
    with pytest.raises(PreconditionError):
        tw.residual_dist([0.5, 0.5], 0.5)


@given(st.integers(2, 40), st.floats(0.01, 1.0), st.integers(0, 2**32))
def test_distortion_free_identity(m, eta, seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.full(m, 0.3))
    aux = prg.AuxAlphabet.from_permutation(rng.permutation(m))
    assert np.abs(tw.induced_marginal(q, eta, aux) - q).max() <= 1e-12
    p = tw.build_aux_dist(q, identity_aux(m), eta).probs
    assert p[:-1].max() <= eta + 1e-15


def test_point_mass_generation():
    model = point_mass_model(5, 3)
    tr = tw.generate(model, [], KEY, tw.SchemeParams(eta=1.0, T=50))
    assert tr.tokens == [3] * 50 and tr.redundant_count == 0
    tr = tw.generate(model, [], KEY, tw.SchemeParams(eta=0.2, T=1000, context_window=1))
    assert tr.tokens == [3] * 1000


def test_point_mass_redundancy_rate():
    # a constant text repeats its hash window, so each draw gets its own key
    model = point_mass_model(5, 3)
    flags = [tw.generate(model, [], prg.WatermarkKey.from_seed(s), tw.SchemeParams(eta=0.2, T=1)).redundant_flags[0]
             for s in range(1000)]
    assert abs(sum(flags) - 800) <= 3 * math.sqrt(1000 * 0.8 * 0.2)


def test_trace_invariants_and_perfect_surrogate():
    model = lm.random_markov_model(2, 12, 0.3, seed=4, mix=0.5)
    params = tw.SchemeParams(eta=0.15, lam=0.5, context_window=2, T=300)
    aux = prg.derive_aux_alphabet(KEY, 12)
    tr = tw.generate(model, [], KEY, params, seed=8)
    assert any(tr.redundant_flags) and not all(tr.redundant_flags)
    for x, z, f in zip(tr.tokens, tr.aux_ids, tr.redundant_flags):
        assert f == (z == aux.redundant_id)
        if not f:
            assert x == aux.g(z)
    rep = tw.detect(model, tr.tokens, KEY, params)
    assert rep.per_token_match == [not f for f in tr.redundant_flags]
    assert rep.score == 1 - tr.redundant_count / params.T
    assert rep.redundant_count == tr.redundant_count
    assert rep.decision == ("watermarked" if rep.score > 0.5 else "unwatermarked")


def test_generate_follows_explicit_route():
    # the fused kernel must agree with seed -> gumbel vector -> argmax composed by hand
    model = lm.random_markov_model(1, 7, 0.5, seed=1)
    params = tw.SchemeParams(eta=0.2, context_window=1, T=200)
    aux = prg.derive_aux_alphabet(KEY, 7)
    tr = tw.generate(model, [], KEY, params, seed=3)
    for t in range(params.T):
        q = model.ntp(tr.tokens[:t])
        g = prg.gumbel_vector(prg.seed_from_context(KEY, tr.tokens[max(0, t - 1):t]), aux.size)
        assert prg.gumbel_argmax(tw.build_aux_dist(q, aux, 0.2), g) == tr.aux_ids[t]


def test_strict_threshold():
    model = point_mass_model(4, 1)
    params = tw.SchemeParams(eta=1.0, lam=1.0, T=10)
    tr = tw.generate(model, [], KEY, params)
    rep = tw.detect(model, tr.tokens, KEY, params)
    assert rep.score == 1.0 and rep.decision == "unwatermarked"


def test_detect_errors():
    model = lm.random_markov_model(1, 6, 1.0, seed=1)
    params = tw.SchemeParams()
    with pytest.raises(DomainError):
        tw.detect(model, [], KEY, params)
    with pytest.raises(DomainError):
        tw.detect(model, [9], KEY, params)
    with pytest.raises(DomainError):
        tw.detect(model, [1, 2], KEY, params, aux=prg.derive_aux_alphabet(KEY, 7))


def test_human_match_rate_below_eta():
    model = lm.random_markov_model(1, 16, 0.5, seed=3)
    surrogate = lm.NgramModel(0, 16, table={(): np.eye(16)[5]})
    params = tw.SchemeParams(eta=0.1, T=100)
    texts = [lm.sample_sequence(model, [], 100, s) for s in range(300)]
    keys = [KEY.child(i) for i in range(len(texts))]
    rates = [tw.detect(model, t, k, params).score for t, k in zip(texts, keys)]
    rates_pm = [tw.detect(surrogate, t, k, params).score for t, k in zip(texts, keys)]
    for r in (rates, rates_pm):
        assert np.mean(r) <= 0.1 + 3 * np.sqrt(0.1 * 0.9 / (300 * 100))


def test_wrong_key_matches_human_baseline():
    model = lm.random_markov_model(1, 16, 0.5, seed=3)
    # a window as long as the text keeps every hash window distinct
    params = tw.SchemeParams(eta=0.2, T=100, context_window=100)
    wm = [tw.generate(model, [], KEY.child(s), params, seed=s).tokens for s in range(200)]
    human = [lm.sample_sequence(model, [], 100, 1000 + s) for s in range(200)]
    other = prg.WatermarkKey.from_seed(1)
    a = [tw.detect(model, t, other.child(i), params).score for i, t in enumerate(wm)]
    b = [tw.detect(model, t, other.child(i), params).score for i, t in enumerate(human)]
    assert stats.mannwhitneyu(a, b).pvalue > 0.01


def test_calibration_table_values():
    # theoretical false-alarm bounds at T=50, eta=0.1
    expected = {14: 9.4e-3, 15: 2.2e-3, 16: 4.9e-4, 17: 9.8e-5}
    for k, v in expected.items():
        assert tw.sequence_fpr_bound_count(50, 0.1, k) == pytest.approx(v, rel=0.05)
    assert tw.ceil_count(50, 0.28) == 14
    assert tw.sequence_fpr_bound(50, 0.1, 0.28) == pytest.approx(9.4e-3, rel=0.01)
    assert tw.sequence_fpr_bound(50, 0.1, 0.32) == pytest.approx(4.9e-4, rel=0.01)
    implied = tw.sequence_fpr_bound(50, 0.1, 0.28)
    assert tw.calibrate_eta(implied, 50, 0.28) == pytest.approx(0.1, rel=1e-12)
    assert tw.calibrate_eta(0.05, 1, 0.5) == pytest.approx(0.05)
    assert tw.sequence_fpr_bound(50, 1.0, 0.3) == 1.0
    with pytest.raises(DomainError):
        tw.calibrate_eta(1.5, 50, 0.3)
    with pytest.raises(DomainError):
        tw.calibrate_eta(0.01, 50, 1.0)


def test_large_t_no_overflow():
    eta = tw.calibrate_eta(1e-6, 5000, 0.3)
    assert 0 < eta < 1
    assert tw.sequence_fpr_bound(5000, eta, 0.3) == pytest.approx(1e-6, rel=1e-9)


@given(st.floats(1e-9, 0.99), st.integers(1, 400), st.floats(0.01, 0.99))
def test_calibration_inverse(alpha, T, lam):
    eta = tw.calibrate_eta(alpha, T, lam)
    bound = tw.sequence_fpr_bound(T, eta, lam)
    assert bound <= alpha * (1 + 1e-9)
    if eta < 1:
        assert bound == pytest.approx(alpha, rel=1e-9)


def test_expected_replaceable_examples():
    params = tw.SchemeParams(eta=0.2, T=100)
    est = tw.expected_replaceable(point_mass_model(4, 2), [], KEY, params, 3)
    assert est.analytic == pytest.approx(80.0)
    flat = lm.NgramModel(0, 10, table={(): [0.1] * 10})
    est = tw.expected_replaceable(flat, [], KEY, params, 3)
    assert est.analytic == 0.0 and est.empirical == 0.0
    skew = lm.NgramModel(0, 3, table={(): [0.5, 0.3, 0.2]})
    # the identity needs fresh noise at every step, so no window may repeat
    params = tw.SchemeParams(eta=0.2, T=50, context_window=50)
    est = tw.expected_replaceable(skew, [], KEY, params, 400, seed=2)
    assert est.analytic == pytest.approx(20.0)
    assert abs(est.empirical - est.analytic) <= 3 * est.stderr


def test_child_keys_distinct():
    kids = {KEY.child(i).hex() for i in range(50)}
    assert len(kids) == 50 and KEY.hex() not in kids
    assert KEY.child(3) == KEY.child(3)


def test_jsonl_round_trip(tmp_path):
    model = lm.random_markov_model(1, 6, 1.0, seed=1)
    params = tw.SchemeParams(T=20)
    tr = tw.generate(model, [], KEY, params)
    rep = tw.detect(model, tr.tokens, KEY, params)
    path = tmp_path / "r.jsonl"
    tw.write_jsonl(path, [tw.report_record(rep, tr.tokens)], header={"seed": 1})
    rec = tw.read_jsonl(path)[0]
    assert rec["tokens"] == tr.tokens and rec["score"] == rep.score
    assert rec["matches"] == [int(v) for v in rep.per_token_match]
    path.write_text('{"no": 1}\n')
    with pytest.raises(DomainError):
        tw.read_jsonl(path)
