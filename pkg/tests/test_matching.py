import numpy as np
import pytest

from vinemap.errors import ContractError
from vinemap.features import DESCRIPTOR_BITS, DESCRIPTOR_BYTES, hamming_matrix, match


def random_descriptors(rng, n):
    bits = rng.integers(0, 2, size=(n, DESCRIPTOR_BITS), dtype=np.uint8)
    return np.packbits(bits, axis=1), bits


def flip_bits(bits, rng, k):
    out = bits.copy()
    idx = rng.choice(DESCRIPTOR_BITS, size=k, replace=False)
    out[idx] ^= 1
    return out


def oracle_hamming(a_bits, b_bits):
    """Independent popcount path: unpacked-bit double loop."""
    return int(np.sum(a_bits != b_bits))


class TestHammingMatrix:
    def test_against_unpacked_oracle(self):
        rng = np.random.default_rng(50)
        qd, qbits = random_descriptors(rng, 17)
        td, tbits = random_descriptors(rng, 23)
        dist = hamming_matrix(qd, td)
        for i in range(17):
            for j in range(23):
                assert dist[i, j] == oracle_hamming(qbits[i], tbits[j])

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            hamming_matrix(np.zeros((2, 61), dtype=np.uint8), np.zeros((2, 32), dtype=np.uint8))


class TestMatch:
    def test_identity_matching(self):
        rng = np.random.default_rng(51)
        qd, _ = random_descriptors(rng, 40)
        matches = match(qd, qd, distance_threshold=DESCRIPTOR_BITS)
        assert len(matches) == 40
        for m in matches:
            assert m.query_index == m.train_index
            assert m.distance == 0

    def test_zero_threshold_only_exact_duplicates(self):
        rng = np.random.default_rng(52)
        qd, qbits = random_descriptors(rng, 30)
        td = np.vstack([qd[:5], random_descriptors(rng, 25)[0]])
        matches = match(qd, td, distance_threshold=0)
        pairs = {(m.query_index, m.train_index) for m in matches}
        assert pairs == {(i, i) for i in range(5)}
        assert all(m.distance == 0 for m in matches)

    def test_planted_pairs_recovered(self):
        rng = np.random.default_rng(53)
        n_planted, n_noise = 100, 900
        qd, qbits = random_descriptors(rng, n_planted)
        planted_bits = np.array(
            [flip_bits(qbits[i], rng, int(rng.integers(0, 21))) for i in range(n_planted)]
        )
        noise_bits = rng.integers(0, 2, size=(n_noise, DESCRIPTOR_BITS), dtype=np.uint8)
        t_bits = np.vstack([planted_bits, noise_bits])
        td = np.packbits(t_bits, axis=1)

        matches = match(qd, td, distance_threshold=30)

        # brute-force exhaustive oracle over unpacked bits
        expected = 0
        for i in range(n_planted):
            d = np.sum(t_bits != qbits[i], axis=1)
            j = int(d.argmin())
            if d[j] <= 30 and j == i:
                back = np.sum(qbits != t_bits[i], axis=1)
                if int(back.argmin()) == i:
                    expected += 1
        recovered = sum(1 for m in matches if m.train_index == m.query_index)
        assert recovered == expected
        assert recovered >= 95

    def test_cross_check_symmetry(self):
        rng = np.random.default_rng(54)
        qd, _ = random_descriptors(rng, 60)
        td, _ = random_descriptors(rng, 80)
        fwd = {(m.query_index, m.train_index, m.distance) for m in match(qd, td, 260)}
        rev = {(m.train_index, m.query_index, m.distance) for m in match(td, qd, 260)}
        assert fwd == rev

    def test_all_distances_within_threshold(self):
        rng = np.random.default_rng(55)
        qd, _ = random_descriptors(rng, 50)
        td, _ = random_descriptors(rng, 50)
        for thr in (0, 100, 230, 250):
            assert all(m.distance <= thr for m in match(qd, td, thr))

    def test_empty_inputs(self):
        empty = np.empty((0, DESCRIPTOR_BYTES), dtype=np.uint8)
        qd, _ = random_descriptors(np.random.default_rng(56), 5)
        assert match(empty, qd, 100) == []
        assert match(qd, empty, 100) == []
