import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedfft.mds import (
    BlockCode,
    CodeConstructionError,
    MdsCodeSpec,
    SingularSurvivorSet,
    decode_from_surviving,
    encode_blocks,
    make_checksum_code,
    make_systematic_mds,
    min_minor_modulus,
)


def blocks(rng, K, shape=(2, 3)):
    return [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(K)]


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestConstruction:
    def test_checksum_three_two(self):
        np.testing.assert_array_equal(make_checksum_code(2).generator, [[1, 0, 1], [0, 1, 1]])
        np.testing.assert_array_equal(make_systematic_mds(3, 2, parity="checksum").generator, [[1, 0, 1], [0, 1, 1]])

    def test_checksum_k1_is_repetition(self):
        np.testing.assert_array_equal(make_checksum_code(1).generator, [[1, 1]])

    def test_checksum_needs_one_parity(self):
        with pytest.raises(ValueError):
            make_systematic_mds(5, 3, parity="checksum")

    @pytest.mark.parametrize("P,K", [(3, 3), (2, 3), (3, 0)])
    def test_bad_counts(self, P, K):
        with pytest.raises(ValueError):
            make_systematic_mds(P, K)

    def test_four_two_minors(self):
        spec = make_systematic_mds(4, 2)
        dets = [abs(np.linalg.det(spec.generator[:, list(S)])) for S in itertools.combinations(range(4), 2)]
        assert len(dets) == 6 and min(dets) > 1e-8

    @pytest.mark.parametrize("P,K", [(4, 2), (5, 3), (6, 4), (8, 5), (7, 2), (12, 8)])
    def test_systematic_and_min_minor(self, P, K):
        spec = make_systematic_mds(P, K)
        np.testing.assert_allclose(spec.generator[:, :K], np.eye(K), atol=1e-13)
        assert abs(min_minor_modulus(spec) - 1.0) < 1e-6

    def test_closed_form_agrees_with_direct(self, monkeypatch):
        import codedfft.mds as mds

        spec = make_systematic_mds(9, 6)
        direct = min_minor_modulus(spec)
        monkeypatch.setattr(mds, "DIRECT_MINOR_LIMIT", 0)
        assert abs(min_minor_modulus(spec) - direct) < 1e-9

    def test_large_codes_build(self):
        assert make_systematic_mds(66, 64).parity.shape == (64, 2)
        assert min_minor_modulus(make_systematic_mds(261, 256)) is None

    def test_singular_generator_rejected(self):
        from codedfft.mds import _check_mds

        G = np.array([[1, 0, 1], [0, 1, 0]], dtype=complex)
        with pytest.raises(CodeConstructionError):
            _check_mds(MdsCodeSpec(3, 2, G, "custom"))


class TestEncode:
    def test_checksum_sum(self):
        out = encode_blocks(make_checksum_code(2), [np.array([1.0]), np.array([2.0])])
        assert [b.real.item() for b in out] == [1, 2, 3]

    def test_zero_data(self):
        out = encode_blocks(make_systematic_mds(5, 3), [np.zeros((2, 2))] * 3)
        assert all(np.all(b == 0) for b in out)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            encode_blocks(make_checksum_code(2), [np.zeros(2), np.zeros(3)])

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            encode_blocks(make_checksum_code(2), [np.zeros(2)])

    def test_systematic_passthrough_bit_exact(self):
        data = blocks(np.random.default_rng(1), 4)
        out = encode_blocks(make_systematic_mds(7, 4), data)
        for a, b in zip(out[:4], data):
            assert a is b or np.array_equal(a, b)

    @pytest.mark.parametrize("P,K,b", [(4, 2, 2), (5, 3, 3), (6, 4, 1)])
    def test_kronecker_consistency(self, P, K, b):
        spec = make_systematic_mds(P, K)
        rng = np.random.default_rng(P * 10 + K)
        data = [rng.standard_normal(b) + 1j * rng.standard_normal(b) for _ in range(K)]
        coded = np.concatenate(encode_blocks(BlockCode(spec, b), data))
        G = BlockCode(spec, b).expanded_generator()
        np.testing.assert_allclose(coded, G.T @ np.concatenate(data), atol=1e-12)
        assert G.shape == (K * b, P * b)


class TestDecode:
    def test_all_systematic_passthrough(self):
        data = blocks(np.random.default_rng(2), 3)
        spec = make_systematic_mds(5, 3)
        out = decode_from_surviving(spec, [(i, data[i]) for i in (2, 0, 1)])
        assert all(a is b for a, b in zip(out, data))

    def test_checksum_subtraction(self):
        out = decode_from_surviving(make_checksum_code(2), [(1, np.array([2.0])), (2, np.array([3.0]))])
        np.testing.assert_allclose([o.item() for o in out], [1, 2])

    def test_five_three_all_subsets(self):
        code = make_systematic_mds(5, 3)
        data = blocks(np.random.default_rng(53), 3)
        enc = encode_blocks(code, data)
        subsets = list(itertools.combinations(range(5), 3))
        assert len(subsets) == 10
        for S in subsets:
            out = decode_from_surviving(code, [(i, enc[i]) for i in S])
            assert max(rel(o, d) for o, d in zip(out, data)) < 1e-8

    @pytest.mark.parametrize("P", range(2, 9))
    def test_any_k_exhaustive(self, P):
        for K in range(1, P):
            code = make_systematic_mds(P, K)
            data = blocks(np.random.default_rng(P * 100 + K), K, (3,))
            enc = encode_blocks(code, data)
            for S in itertools.combinations(range(P), K):
                out = decode_from_surviving(code, [(i, enc[i]) for i in S])
                assert max(rel(o, d) for o, d in zip(out, data)) < 1e-8

    def test_rank_law_expanded(self):
        spec = make_systematic_mds(6, 4)
        G = BlockCode(spec, 3).expanded_generator()
        for S in itertools.combinations(range(6), 4):
            cols = [c * 3 + j for c in S for j in range(3)]
            assert np.linalg.matrix_rank(G[:, cols]) == 12

    def test_bad_survivor_sets(self):
        code = make_checksum_code(2)
        with pytest.raises(ValueError):
            decode_from_surviving(code, [(0, np.zeros(1))])
        with pytest.raises(ValueError):
            decode_from_surviving(code, [(0, np.zeros(1)), (0, np.zeros(1))])
        with pytest.raises(ValueError):
            decode_from_surviving(code, [(0, np.zeros(1)), (5, np.zeros(1))])

    def test_corrupt_spec_signals_singular(self):
        G = np.array([[1, 0, 1], [0, 1, 0]], dtype=complex)
        spec = MdsCodeSpec(3, 2, G, "custom")
        with pytest.raises(SingularSurvivorSet):
            decode_from_surviving(spec, [(0, np.zeros(1)), (2, np.zeros(1))])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.data())
def test_roundtrip_property(P, data):
    K = data.draw(st.integers(1, P - 1))
    S = data.draw(st.lists(st.integers(0, P - 1), min_size=K, max_size=K, unique=True))
    seed = data.draw(st.integers(0, 2**32 - 1))
    code = make_systematic_mds(P, K)
    msgs = blocks(np.random.default_rng(seed), K, (2,))
    enc = encode_blocks(code, msgs)
    out = decode_from_surviving(code, [(i, enc[i]) for i in S])
    assert max(rel(o, d) for o, d in zip(out, msgs)) < 1e-8
