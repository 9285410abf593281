import numpy as np

from policylock import rng


def test_scalar_matches_vectorized():
    xs = [0, 1, 7, 2**40, 2**63 + 5]
    scalar = [rng.splitmix64(x) for x in xs]
    vector = rng._splitmix64_array(np.array(xs, dtype=np.uint64))
    assert scalar == [int(v) for v in vector]


def test_documented_algorithm_reproduced_independently():
    # independent big-int transcription of the docstring recipe
    mask = (1 << 64) - 1

    def ref(x):
        x = (x + 0x9E3779B97F4A7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    for x in (0, 1, 123456789, 2**64 - 1):
        assert rng.splitmix64(x) == ref(x)

    h = 0xCBF29CE484222325
    for b in "feature:x".encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & mask
    assert rng.fnv1a64("feature:x") == h

    base = ref(ref(7) ^ h)
    words = rng.u64_stream(7, "feature:x", 3)
    assert [int(w) for w in words] == [ref((base + i) & mask) for i in range(3)]


def test_streams_are_counter_addressable():
    whole = rng.u64_stream(7, "t", 100)
    tail = rng.u64_stream(7, "t", 40, offset=60)
    assert np.array_equal(whole[60:], tail)


def test_uniform_range_and_determinism():
    u = rng.uniform_stream(11, "u", 10000)
    assert ((u >= 0.0) & (u < 1.0)).all()
    assert np.array_equal(u, rng.uniform_stream(11, "u", 10000))
    assert not np.array_equal(u, rng.uniform_stream(12, "u", 10000))


def test_permutation_is_a_permutation():
    p = rng.permutation(3, "perm", 257)
    assert sorted(p.tolist()) == list(range(257))


def test_choice_from_probs_frequencies():
    draws = rng.choice_from_probs(7, "c", 200000, [0.7, 0.2, 0.1])
    freq = np.bincount(draws, minlength=3) / 200000
    assert np.allclose(freq, [0.7, 0.2, 0.1], atol=0.01)
