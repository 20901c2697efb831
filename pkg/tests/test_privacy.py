import itertools
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import chain_dataset, exact_model
from pdsynth.cli import verify_model
from pdsynth.data import Dataset
from pdsynth.oracle import laplace_tail
from pdsynth.privacy import (PrivacyParams, PrivacyTestError, count_plausible_seeds, mechanism_step,
                             partition_number, partition_numbers, privacy_test_deterministic,
                             privacy_test_randomized)
from pdsynth.synthesis import SynthesisParams, record_probability, synthesize

UNI = list(itertools.product(range(2), repeat=3))
TOY = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 0), (1, 1, 1), (0, 0, 0), (1, 0, 1), (0, 1, 0)]


def toy_model(records=TOY):
    return verify_model((2, 2, 2), records)


def brute_count(records, y, i, omega, model, gamma):
    n = 0
    for d in records:
        p = record_probability(model, d, y, omega)
        if p > 0 and partition_number(p, gamma) == i:
            n += 1
    return n


# ---- partition numbers

def test_partition_examples():
    assert partition_number(1.0, 4) == 0
    assert partition_number(1.0, 1.01) == 0
    assert partition_number(0.05, 4) == 2
    assert 4.0 ** -3 < 0.05 <= 4.0 ** -2
    assert partition_number(0.25, 2) == 2
    assert math.floor(-math.log2(0.25)) == 2


@pytest.mark.parametrize("gamma", [1.5, 2, 3, 4, 10])
def test_partition_boundaries_close_upward(gamma):
    for i in range(40):
        b = gamma ** -i
        assert partition_number(b, gamma) == i
        assert partition_number(b * (1 - 1e-9), gamma) == i
        if i:
            assert partition_number(min(1.0, b * (1 + 1e-9)), gamma) == i - 1


@settings(max_examples=300)
@given(st.floats(1e-300, 1.0, exclude_min=False), st.floats(1.01, 100))
def test_partition_bracket(p, gamma):
    i = partition_number(p, gamma)
    assert i >= 0
    # bracket holds up to the documented 1e-12 relative slack
    assert gamma ** -(i + 1) < p * (1 + 1e-10)
    assert p <= gamma ** -i * (1 + 1e-10)
    assert partition_numbers(np.array([p]), gamma)[0] == i


def test_partition_numbers_zero_maps_to_minus_one():
    assert partition_numbers(np.array([0.0, 1.0, 0.3]), 2).tolist() == [-1, 0, 1]


@pytest.mark.parametrize("p,gamma", [(0, 2), (-0.1, 2), (1.5, 2), (0.5, 1), (0.5, 0.5)])
def test_partition_errors(p, gamma):
    with pytest.raises(ValueError):
        partition_number(p, gamma)


@settings(max_examples=100)
@given(st.lists(st.floats(1e-12, 1.0), min_size=2, max_size=20), st.floats(1.1, 8))
def test_same_partition_ratio_below_gamma(probs, gamma):
    groups = {}
    for p in probs:
        groups.setdefault(partition_number(p, gamma), []).append(p)
    for members in groups.values():
        assert max(members) / min(members) < gamma * (1 + 1e-10)


# ---- counting

@pytest.mark.parametrize("omega", [1, 2, 3])
@pytest.mark.parametrize("gamma", [2, 4])
def test_count_matches_bruteforce(omega, gamma):
    model = toy_model()
    params = PrivacyParams(1, gamma)
    D = np.array(TOY)
    for y in UNI:
        for i in range(12):
            got, capped = count_plausible_seeds(D, y, i, omega, model, params)
            assert got == brute_count(TOY, y, i, omega, model, gamma)
            assert not capped


def test_count_all_agree_and_caps():
    model = toy_model()
    D = np.array([(0, 0, 1)] * 7)
    y = (0, 0, 1)
    i = partition_number(record_probability(model, y, y, 1), 2)
    assert count_plausible_seeds(D, y, i, 1, model, PrivacyParams(1, 2)) == (7, False)
    assert count_plausible_seeds(D, y, i, 1, model, PrivacyParams(1, 2, max_plausible=3)) == (3, True)
    got, capped = count_plausible_seeds(D, y, i, 1, model, PrivacyParams(1, 2, max_check_plausible=4),
                                        np.random.default_rng(0))
    assert (got, capped) == (4, True)
    with pytest.raises(ValueError):
        count_plausible_seeds(D, y, i, 1, model, PrivacyParams(1, 2, max_check_plausible=4))


def test_count_only_seed_matches():
    model = toy_model()
    # with omega = 1 only x2 is resampled; (1, 0, *) appears once in TOY
    d = (1, 0, 1)
    y = (1, 0, 0)
    p = record_probability(model, d, y, 1)
    assert count_plausible_seeds(np.array(TOY), y, partition_number(p, 2), 1, model, PrivacyParams(1, 2)) == (1, False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(UNI), min_size=1, max_size=6), st.sampled_from(UNI), st.integers(1, 3))
def test_count_monotone_when_adding_records(extra, y, omega):
    model = toy_model()
    params = PrivacyParams(1, 2)
    base = np.array(TOY)
    grown = np.array(TOY + extra)
    for i in range(10):
        a, _ = count_plausible_seeds(base, y, i, omega, model, params)
        b, _ = count_plausible_seeds(grown, y, i, omega, model, params)
        assert b >= a


# ---- tests 1 and 2

def test_deterministic_equivalence_exhaustive():
    model = toy_model()
    D = np.array(TOY)
    for k in (1, 2, 3, 4, 6):
        params = PrivacyParams(k, 2)
        for omega in (1, 2, 3):
            for d in TOY:
                for y in UNI:
                    p = record_probability(model, d, y, omega)
                    if p == 0:
                        continue
                    i = partition_number(p, 2)
                    passed, dec = privacy_test_deterministic(D, d, y, model, params, omega)
                    assert passed == (brute_count(TOY, y, i, omega, model, 2) >= k)
                    assert dec.partition == i and dec.plausible_count >= 1
                    assert dec.passed == (dec.plausible_count >= dec.threshold)


def test_k_one_always_passes():
    model = toy_model()
    rng = np.random.default_rng(0)
    D = Dataset(model.schema, np.array(TOY))
    for _ in range(300):
        rec, dec = mechanism_step(D, model, SynthesisParams(1, 3), PrivacyParams(1, 2), "deterministic", rng)
        assert rec is not None and dec.passed


def test_exactly_k_minus_one_plausible_fails():
    model = toy_model()
    # (0, 0, *) rows are the plausible seeds for y = (0, 0, 1) at omega = 1: three of them
    d, y = (0, 0, 0), (0, 0, 1)
    assert sum(r[:2] == (0, 0) for r in TOY) == 3
    assert not privacy_test_deterministic(np.array(TOY), d, y, model, PrivacyParams(4, 2), 1)[0]
    assert privacy_test_deterministic(np.array(TOY), d, y, model, PrivacyParams(3, 2), 1)[0]


def test_zero_probability_seed_is_an_error():
    model = toy_model()
    with pytest.raises(PrivacyTestError):
        privacy_test_deterministic(np.array(TOY), (0, 0, 0), (1, 1, 1), model, PrivacyParams(1, 2), 1)


@pytest.mark.parametrize("offset,expected", [(-2, 0.5 * math.exp(-2)), (0, 0.5), (5, 1 - 0.5 * math.exp(-5))])
def test_randomized_pass_rate(offset, expected):
    # identical records, so k' = |D| = k + offset for every call
    model = toy_model()
    D = np.array([(0, 1, 0)] * (10 + offset))
    params = PrivacyParams(10, 2, eps0=1.0)
    rng = np.random.default_rng(11)
    n = 40_000
    hits = sum(privacy_test_randomized(D, (0, 1, 0), (0, 1, 0), model, params, 1, rng)[0] for _ in range(n))
    assert expected == pytest.approx(laplace_tail(-offset, 1.0), rel=1e-12)
    assert abs(hits / n - expected) < 3 * math.sqrt(expected * (1 - expected) / n) + 1e-12


def test_randomized_threshold_real_valued():
    model = toy_model()
    rng = np.random.default_rng(2)
    D = np.array(TOY)
    ths = [privacy_test_randomized(D, (0, 0, 0), (0, 0, 1), model, PrivacyParams(3, 2), 1, rng)[1].threshold
           for _ in range(50)]
    assert len(set(ths)) == 50 and any(t != round(t) for t in ths)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.integers(1, 400))
def test_caps_never_turn_fail_into_pass(seed, cap_plaus, cap_check):
    d = chain_dataset((3, 2, 3, 2), 400, np.random.default_rng(0))
    model = exact_model(d.schema, [(), (0,), (1,), (2,)], d, eps_p=1.0)
    rng = np.random.default_rng(seed)
    k = min(cap_plaus, 30)
    idx = int(rng.integers(d.n))
    seed_rec = d.record(idx)
    omega = int(rng.integers(1, 5))
    y = synthesize(seed_rec, omega, model, rng)
    capped = PrivacyParams(k, 2, max_plausible=cap_plaus, max_check_plausible=cap_check)
    free = PrivacyParams(k, 2)
    p_c, dec_c = privacy_test_deterministic(d, seed_rec, y, model, capped, omega, np.random.default_rng(seed))
    p_f, dec_f = privacy_test_deterministic(d, seed_rec, y, model, free, omega)
    assert dec_c.plausible_count <= dec_f.plausible_count
    if p_c:
        assert p_f
    if dec_c.capped:
        assert not dec_c.passed


# ---- mechanism

def test_mechanism_releases_agree_with_seed():
    d = chain_dataset((3, 2, 3, 2, 4), 500, np.random.default_rng(1))
    model = exact_model(d.schema, [(), (0,), (1,), (2,), (3,)], d, eps_p=1.0)
    rng = np.random.default_rng(5)
    for _ in range(300):
        rec, dec = mechanism_step(d, model, SynthesisParams(1, 5), PrivacyParams(5, 4), "randomized", rng)
        seed = d.record(dec.seed_index)
        for attr in model.sigma[: model.m - dec.omega_used]:
            assert dec.candidate[attr] == seed[attr]
        p = record_probability(model, seed, dec.candidate, dec.omega_used)
        assert 4.0 ** -(dec.partition + 1) < p <= 4.0 ** -dec.partition
        assert (rec is not None) == dec.passed


def test_mechanism_errors():
    model = toy_model()
    D = Dataset(model.schema, np.array(TOY))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        mechanism_step(D, model, SynthesisParams(1), PrivacyParams(9, 2), "randomized", rng)
    with pytest.raises(ValueError):
        mechanism_step(D, model, SynthesisParams(1), PrivacyParams(1, 2), "other", rng)


@pytest.mark.parametrize("kwargs", [dict(k=0, gamma=2), dict(k=1, gamma=1), dict(k=1, gamma=2, eps0=0),
                                    dict(k=5, gamma=2, max_plausible=4), dict(k=1, gamma=2, max_check_plausible=0)])
def test_privacy_params_validation(kwargs):
    with pytest.raises(ValueError):
        PrivacyParams(**kwargs)


def test_default_parameters_accepted():
    p = PrivacyParams(50, 4, 1.0, 100, 50_000)
    assert (p.k, p.gamma, p.eps0) == (50, 4, 1.0)
    assert p.uncapped.max_plausible is None and p.uncapped.max_check_plausible is None
    s = SynthesisParams.parse("5-11")
    s.validate(11)


def test_audit_line_format():
    model = toy_model()
    _, dec = privacy_test_deterministic(np.array(TOY), (0, 0, 0), (0, 0, 1), model, PrivacyParams(4, 2), 1)
    line = dec.audit_line()
    assert re.fullmatch(r"[0-9a-f]{16}\t1\t\d+\t3\t4\.000000\tfail", line)
    _, dec = privacy_test_deterministic(np.array(TOY), (0, 0, 0), (0, 0, 1), model,
                                        PrivacyParams(4, 2, max_plausible=4, max_check_plausible=2), 1,
                                        np.random.default_rng(0))
    assert dec.audit_line().endswith("capped-fail")
