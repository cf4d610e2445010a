import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffmimo.codebook import (
    Codebook,
    CodebookConfig,
    Precoder,
    build_codebook,
    codebook_to_json,
    dft_beam,
    precoder_by_pmi,
)


class TestDftBeam:
    def test_zero_phase_beam(self):
        assert np.allclose(dft_beam(4, 0, 1), np.ones(4) / 2.0)

    def test_single_element(self):
        assert np.allclose(dft_beam(1, 0, 1), [1.0])
        assert np.allclose(dft_beam(1, 3, 4), [1.0])  # m=0 leaves the phase at zero

    def test_orthogonal_when_index_differs_by_oversampling(self):
        for n, o in [(4, 4), (6, 2), (8, 1)]:
            b1 = dft_beam(n, 1, o)
            b2 = dft_beam(n, 1 + o, o)
            assert abs(np.vdot(b1, b2)) < 1e-12

    @given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 31))
    def test_unit_norm(self, n, o, idx):
        assert np.linalg.norm(dft_beam(n, idx % (n * o), o)) == pytest.approx(1.0)


class TestBuildCodebook:
    def test_rank1_count(self):
        cb = build_codebook(CodebookConfig(n1=2, n2=1, o1=4, o2=1, max_rank=1))
        assert len(cb) == 2 * 4 * 1 * 4  # i11 * i12 * i13 * i2

    def test_all_unit_frobenius(self):
        cb = build_codebook(CodebookConfig(n1=4, n2=1, o1=2, o2=1, max_rank=2))
        for p in cb.precoders:
            assert abs(np.linalg.norm(p.matrix) - 1.0) < 1e-12

    def test_flat_index_bijection(self):
        cb = build_codebook(CodebookConfig(n1=2, n2=2, o1=2, o2=1, max_rank=2))
        assert [p.flat_index for p in cb.precoders] == list(range(len(cb)))

    def test_round_trip_by_pmi(self):
        cb = build_codebook(CodebookConfig(n1=2, n2=1, o1=2, o2=1, max_rank=2))
        for p in cb.precoders:
            assert precoder_by_pmi(cb, p.rank, p.flat_index) is p

    def test_rank2_columns_orthogonal(self):
        cb = build_codebook(CodebookConfig(n1=4, n2=1, o1=4, o2=1, max_rank=2))
        for p in cb.by_rank(2):
            gram = p.matrix.conj().T @ p.matrix
            assert abs(gram[0, 1]) < 1e-12

    def test_higher_rank_columns_orthogonal(self):
        cb = build_codebook(CodebookConfig(n1=6, n2=1, o1=2, o2=1, max_rank=4))
        for p in cb.precoders:
            gram = p.matrix.conj().T @ p.matrix
            off = gram - np.diag(np.diag(gram))
            assert np.max(np.abs(off)) < 1e-12

    def test_enumeration_stable(self):
        cfg = CodebookConfig(n1=4, n2=1, o1=2, o2=1, max_rank=2)
        a, b = build_codebook(cfg), build_codebook(cfg)
        assert [p.indices for p in a.precoders] == [p.indices for p in b.precoders]
        for pa, pb in zip(a.precoders, b.precoders):
            assert np.array_equal(pa.matrix, pb.matrix)

    def test_rank_major_ordering(self):
        cb = build_codebook(CodebookConfig(n1=4, n2=1, o1=2, o2=1, max_rank=2))
        ranks = [p.rank for p in cb.precoders]
        assert ranks == sorted(ranks)

    def test_invalid_rank_rejected(self):
        with pytest.raises(ValueError):
            CodebookConfig(n1=2, n2=1, o1=2, o2=1, max_rank=3)

    @settings(max_examples=20, deadline=None)
    @given(
        n1=st.sampled_from([2, 4]),
        o1=st.sampled_from([1, 2, 4]),
        max_rank=st.integers(1, 2),
    )
    def test_counts_match_index_space(self, n1, o1, max_rank):
        cb = build_codebook(CodebookConfig(n1=n1, n2=1, o1=o1, o2=1, max_rank=max_rank))
        counted = {}
        for p in cb.precoders:
            counted[p.rank] = counted.get(p.rank, 0) + 1
        assert counted[1] == n1 * o1 * 4
        if max_rank == 2:
            assert counted[2] == n1 * o1 * (n1 - 1) * 4


class TestPmiLookup:
    @pytest.fixture()
    def cb(self) -> Codebook:
        return build_codebook(CodebookConfig(n1=2, n2=1, o1=2, o2=1, max_rank=2))

    def test_first_precoder(self, cb):
        p = precoder_by_pmi(cb, 1, 0)
        assert p.indices == (1, 0, 0, 0, 0)

    def test_out_of_range(self, cb):
        with pytest.raises(IndexError):
            precoder_by_pmi(cb, 1, len(cb))

    def test_rank_mismatch(self, cb):
        rank2_first = cb.by_rank(2)[0].flat_index
        with pytest.raises(IndexError):
            precoder_by_pmi(cb, 1, rank2_first)


def test_json_dump_round_trips_matrices():
    cb = build_codebook(CodebookConfig(n1=2, n2=1, o1=1, o2=1, max_rank=1))
    doc = json.loads(codebook_to_json(cb))
    assert len(doc["precoders"]) == len(cb)
    first = doc["precoders"][0]
    mat = np.array([[complex(re, im) for re, im in row] for row in first["matrix"]])
    assert np.allclose(mat, cb.precoders[0].matrix)
