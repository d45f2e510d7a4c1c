import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fouriervmf.augment import (
    AugPolicy,
    AugRecord,
    Beta,
    Fixed,
    StylePool,
    Uniform,
    amplitude_mix,
    apply_policy,
    format_sampler,
    mix_from_spectra,
    parse_sampler,
    phase_preservation_check,
    plan_policy,
    resize_bilinear,
    sample_lambda,
)
from fouriervmf.dataio import rng_stream
from fouriervmf.errors import ShapeError
from fouriervmf.spectral import decompose, fft2d
from oracles import naive_amplitude_mix


def _pair(seed, shape=(8, 8, 3)):
    r = np.random.default_rng(seed)
    return r.random(shape), r.random(shape)


def test_fixed_sampler():
    assert sample_lambda(AugPolicy(sampler=Fixed(0.3)), rng_stream(0, 0)) == 0.3


def test_uniform_moments():
    rng = rng_stream(1, 0)
    pol = AugPolicy(sampler=Uniform(0.0, 1.0))
    draws = np.array([sample_lambda(pol, rng) for _ in range(100_000)])
    assert 0.497 <= draws.mean() <= 0.503


def test_beta_moments_gamma_path():
    rng = rng_stream(2, 0)
    pol = AugPolicy(sampler=Beta(0.5))
    draws = np.array([sample_lambda(pol, rng) for _ in range(100_000)])
    assert 0.494 <= draws.mean() <= 0.506
    assert draws.var() == pytest.approx(1 / 8, abs=0.005)


def test_beta_inverse_cdf_moments():
    from fouriervmf.dataio import counter_uniform

    u = counter_uniform(3, (9,), np.arange(100_000, dtype=np.uint64))
    lam = Beta(0.5).from_uniform(u)
    assert 0.494 <= lam.mean() <= 0.506
    assert lam.var() == pytest.approx(1 / 8, abs=0.005)


@pytest.mark.parametrize("text,expected", [
    ("uniform:0.0,1.0", Uniform(0.0, 1.0)),
    ("uniform:0.2,0.4", Uniform(0.2, 0.4)),
    ("beta:0.5", Beta(0.5)),
    ("fixed:0.3", Fixed(0.3)),
])
def test_parse_sampler(text, expected):
    assert parse_sampler(text) == expected
    assert parse_sampler(format_sampler(expected)) == expected


@pytest.mark.parametrize("text", ["uniform:0.5,0.2", "beta:0", "fixed:1.5", "gauss:1", "beta:x", "uniform:1"])
def test_parse_sampler_rejects(text):
    with pytest.raises(ValueError):
        parse_sampler(text)


def test_policy_validation():
    with pytest.raises(ValueError):
        AugPolicy(p_aug=1.2)
    with pytest.raises(ValueError):
        AugRecord(0, False, lam=0.2)
    assert AugPolicy(sampler="fixed:0.1").sampler == Fixed(0.1)


def test_lambda_zero_identity():
    c, s = _pair(0)
    assert np.max(np.abs(amplitude_mix(c, s, 0.0) - c)) <= 1e-6
    assert np.max(np.abs(amplitude_mix(c, s, 0.0, clamp=False) - c)) <= 1e-9


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.77, 1.0])
def test_self_mix_identity(lam):
    c, _ = _pair(1)
    assert np.max(np.abs(amplitude_mix(c, c, lam) - c)) <= 1e-6


def test_constant_images():
    out = amplitude_mix(np.full((6, 6, 3), 0.2), np.full((6, 6, 3), 0.8), 0.5)
    assert np.allclose(out, 0.5, atol=1e-6)


def test_matches_naive_composition():
    c, s = _pair(4)
    ref = np.clip(naive_amplitude_mix(c, s, 0.37), 0, 1)
    assert np.max(np.abs(amplitude_mix(c, s, 0.37) - ref)) <= 1e-9


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        amplitude_mix(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)), 0.5)
    with pytest.raises(ValueError):
        amplitude_mix(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), 1.5)


def test_mix_amplitude_and_phase_contract():
    c, s = _pair(5)
    lam = 0.6
    raw = amplitude_mix(c, s, lam, clamp=False)
    a_c, _ = decompose(fft2d(c))
    a_s, _ = decompose(fft2d(s))
    a_out, _ = decompose(fft2d(raw))
    assert np.max(np.abs(a_out - ((1 - lam) * a_c + lam * a_s))) <= 1e-6
    assert phase_preservation_check(c, raw)


def test_phase_check_detects_rotation():
    c, _ = _pair(6, (9, 9, 3))
    assert phase_preservation_check(c, c)
    assert not phase_preservation_check(c, np.rot90(c).copy())


def test_batched_mix_matches_single():
    c, s = _pair(7, (3, 6, 6, 3))
    a_c, p_c = decompose(fft2d(c))
    a_s, _ = decompose(fft2d(s))
    lams = np.array([0.1, 0.5, 0.9])
    batched = mix_from_spectra(a_c, np.exp(1j * p_c), a_s, lams)
    for i in range(3):
        assert np.allclose(batched[i], amplitude_mix(c[i], s[i], lams[i]), atol=1e-12)


def _batch(n, seed=0, shape=(6, 6, 3)):
    r = np.random.default_rng(seed)
    return [r.random(shape) for _ in range(n)]


def test_gate_closed_and_open():
    batch = _batch(5)
    pool = StylePool(_batch(3, 1))
    out, recs = apply_policy(batch, pool, AugPolicy(p_aug=0.0))
    assert all(o is b for o, b in zip(out, batch))
    assert not any(r.applied for r in recs)
    out, recs = apply_policy(batch, pool, AugPolicy(p_aug=1.0))
    assert all(r.applied and 0 <= r.lam <= 1 and 0 <= r.style_index < 3 for r in recs)
    assert [r.index for r in recs] == list(range(5))


def test_gate_rate():
    recs = plan_policy(10_000, 4, AugPolicy(p_aug=0.5, seed=11))
    assert 4800 <= sum(r.applied for r in recs) <= 5200


def test_policy_deterministic_and_order_free():
    batch = _batch(6)
    pool = StylePool(_batch(2, 3))
    pol = AugPolicy(p_aug=0.5, seed=5)
    out1, rec1 = apply_policy(batch, pool, pol, key=(1,))
    out2, rec2 = apply_policy(batch, pool, pol, key=(1,))
    assert rec1 == rec2
    assert all(np.array_equal(a, b) for a, b in zip(out1, out2))
    # element 4 alone, with its own counter, gets the same decision
    (single,), (rec,) = apply_policy([batch[4]], pool, pol, key=(1,), start_index=4)
    assert rec.applied == rec1[4].applied and rec.lam == rec1[4].lam
    assert np.array_equal(single, out1[4])


def test_style_pool_resizes():
    pool = StylePool([np.random.default_rng(0).random((10, 14, 3))])
    assert pool.image(0, (6, 6, 3)).shape == (6, 6, 3)
    with pytest.raises(ShapeError):
        pool.image(0, (6, 6, 1))
    with pytest.raises(ValueError):
        StylePool([])


def test_resize_identity_and_constant():
    x = np.random.default_rng(0).random((5, 7, 3))
    assert np.array_equal(resize_bilinear(x, 5, 7), x)
    assert np.allclose(resize_bilinear(np.full((5, 7), 0.3), 9, 4), 0.3)


def test_as_dict_keys():
    assert AugRecord(2, False).as_dict() == {"index": 2, "applied": False, "lambda": None, "style_index": None}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.floats(0, 1), st.integers(0, 2**32))
def test_prop_phase_and_amplitude(h, w, lam, seed):
    c, s = _pair(seed, (h, w, 3))
    raw = amplitude_mix(c, s, lam, clamp=False)
    a_c, _ = decompose(fft2d(c))
    a_s, _ = decompose(fft2d(s))
    assert np.max(np.abs(decompose(fft2d(raw)).amplitude - ((1 - lam) * a_c + lam * a_s))) <= 1e-6
    assert phase_preservation_check(c, raw)
    out = amplitude_mix(c, s, lam)
    assert out.min() >= 0 and out.max() <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(0, 1), st.integers(0, 2**64 - 1))
def test_prop_records_consistent(n, p, seed):
    recs = plan_policy(n, 3, AugPolicy(p_aug=p, seed=seed))
    assert len(recs) == n
    for i, r in enumerate(recs):
        assert r.index == i
        if r.applied:
            assert 0 <= r.lam <= 1 and 0 <= r.style_index < 3
        else:
            assert r.lam is None and r.style_index is None
