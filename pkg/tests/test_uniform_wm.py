import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from wmlab import lm, prg, seq_opt
from wmlab import uniform_wm as uw
from wmlab.dist import excess_closed_form
from wmlab.errors import DomainError

KEY = prg.WatermarkKey.from_seed(77)


def ident(m):
    return prg.AuxAlphabet.from_permutation(range(m))


def test_modified_ntp_examples():
    np.testing.assert_allclose(uw.uniform_modified_ntp([0.5, 0.3, 0.2], 2, ident(3)), [0.4, 0.0, 0.6], atol=1e-12)
    for z in range(3):
        np.testing.assert_allclose(uw.uniform_modified_ntp([1 / 3] * 3, z, ident(3)), np.eye(3)[z])
    np.testing.assert_allclose(uw.uniform_modified_ntp([1.0, 0.0], 0, ident(2)), [1.0, 0.0])
    np.testing.assert_allclose(uw.uniform_modified_ntp([1.0, 0.0], 1, ident(2)), [1.0, 0.0])
    with pytest.raises(DomainError):
        uw.uniform_modified_ntp([0.5, 0.5], 0, ident(3))


def test_modified_ntp_follows_permutation():
    aux = prg.AuxAlphabet.from_permutation([2, 0, 1])
    # symbol 0 belongs to token 1 under this permutation
    np.testing.assert_allclose(uw.uniform_modified_ntp([0.5, 0.3, 0.2], 0, aux),
                               uw.uniform_modified_ntp([0.5, 0.3, 0.2], 1, ident(3)), atol=1e-15)


@given(st.integers(2, 30), st.integers(0, 2**32))
def test_coupling_marginal_identity(m, seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.full(m, 0.5))
    aux = prg.AuxAlphabet.from_permutation(rng.permutation(m))
    rows = np.array([uw.uniform_modified_ntp(q, z, aux) for z in range(m)])
    np.testing.assert_allclose(rows.mean(axis=0), q, atol=1e-9)
    assert np.all(rows >= 0)
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)
    # the token's own symbol is hit with probability sum(min(q, 1/m))
    own = np.mean([rows[z, aux.g(z)] for z in range(m)])
    assert own == pytest.approx(np.minimum(q, 1 / m).sum(), abs=1e-9)


def test_symbol_uniformity():
    m = 16
    seeds = np.random.default_rng(0).integers(0, 2**63, size=100_000)
    counts = np.bincount([uw.uniform_symbol(int(s), m) for s in seeds], minlength=m)
    assert stats.chisquare(counts).pvalue > 0.001
    assert 0.5 * np.abs(counts / counts.sum() - 1 / m).sum() < 0.01


def test_point_mass_generation():
    model = lm.NgramModel(0, 2, table={(): [0.0, 1.0]})
    tr = uw.uniform_generate(model, [], KEY, 40, context_window=40)
    assert tr.tokens == [1] * 40


def test_match_rate_five_sixths():
    model = lm.NgramModel(0, 3, table={(): [0.5, 0.3, 0.2]})
    matches = []
    for i in range(150):
        k = KEY.child(i)
        tr = uw.uniform_generate(model, [], k, 100, context_window=100, seed=i)
        matches.extend(uw.uniform_detect(tr.tokens, k, 0.5, 3, context_window=100).per_token_match)
    n = len(matches)
    assert abs(np.mean(matches) - 5 / 6) <= 3 * np.sqrt(5 / 36 / n)


def test_generation_records_symbols():
    model = lm.random_markov_model(1, 8, 1.0, seed=2)
    tr = uw.uniform_generate(model, [], KEY, 60, context_window=2, seed=1)
    aux = prg.derive_aux_alphabet(KEY, 8)
    rep = uw.uniform_detect(tr.tokens, KEY, 0.5, 8, context_window=2)
    assert rep.per_token_match == [aux.h(x) == z for x, z in zip(tr.tokens, tr.aux_ids)]


def test_human_baseline_one_over_m():
    m = 10
    model = lm.random_markov_model(1, m, 0.5, seed=4)
    texts = [lm.sample_sequence(model, [], 100, s) for s in range(200)]
    rates = [uw.uniform_detect(t, KEY.child(i), 0.5, m, context_window=100).score for i, t in enumerate(texts)]
    n = 200 * 100
    assert abs(np.mean(rates) - 1 / m) <= 3 * np.sqrt(0.1 * 0.9 / n)
    other = prg.WatermarkKey.from_seed(5)
    wm = [uw.uniform_generate(model, [], KEY.child(i), 100, context_window=100, seed=i).tokens for i in range(200)]
    a = [uw.uniform_detect(t, other.child(i), 0.5, m, context_window=100).score for i, t in enumerate(wm)]
    assert stats.mannwhitneyu(a, rates).pvalue > 0.01


def test_detect_errors():
    with pytest.raises(DomainError):
        uw.uniform_detect([], KEY, 0.5, 4)
    with pytest.raises(DomainError):
        uw.uniform_detect([4], KEY, 0.5, 4)


def test_min_type2_examples():
    assert uw.uniform_min_type2([0.5, 0.3, 0.2], 3, 0.0) == pytest.approx(1 / 6)
    assert uw.uniform_min_type2([0.25] * 4, 4, 0.0) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        uw.uniform_min_type2([0.5, 0.3, 0.2], 2, 0.0)


def test_gap_against_free_symbol_law():
    rng = np.random.default_rng(9)
    for _ in range(50):
        m = int(rng.integers(2, 6))
        z = m + int(rng.integers(0, 3))
        q = rng.dirichlet(np.ones(m))
        eps = float(rng.uniform(0, 0.2))
        u = uw.uniform_min_type2(q, z, eps)
        assert u == pytest.approx(excess_closed_form(q, 1 / z, eps), abs=1e-12)
        alpha = 1 / z + float(rng.uniform(0.05, 0.3))
        if excess_closed_form(q, 1 / z, eps) > 1e-9:
            assert u > excess_closed_form(q, alpha, eps)


def test_gap_matches_sweep_small():
    q = [0.6, 0.4]
    assert uw.uniform_min_type2(q, 3, 0.0) == pytest.approx(
        seq_opt.universal_min_type2(q, 1 / 3, 0.0, 3).value, abs=1e-9)


def test_eps_generation_runs():
    model = lm.NgramModel(0, 3, table={(): [0.8, 0.1, 0.1]})
    tr = uw.uniform_generate(model, [], KEY, 30, eps=0.1)
    assert len(tr.tokens) == 30 and set(tr.tokens) <= {0, 1, 2}
