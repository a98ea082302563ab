import math

import numpy as np
import pytest

from csdkit.textmodel import (
    Article,
    BlockIndex,
    EmbeddingMatrix,
    binomial,
    block_text,
    enumerate_blocks,
)


class TestArticle:
    def test_basic(self):
        art = Article("a", ("First.", "Second.", "Third."))
        assert art.n == 3
        assert art.sentences[1] == "Second."

    def test_rejects_empty_article(self):
        with pytest.raises(ValueError):
            Article("a", ())

    def test_rejects_blank_sentence(self):
        with pytest.raises(ValueError, match="sentence 2"):
            Article("a", ("ok.", "   "))


class TestBlockIndex:
    def test_valid(self):
        b = BlockIndex((1, 4, 9))
        assert b.k == 3

    @pytest.mark.parametrize("indices", [(0, 1), (3, 2), (1, 1), ()])
    def test_invalid(self, indices):
        with pytest.raises(ValueError):
            BlockIndex(indices)

    def test_ordering_is_lexicographic(self):
        assert BlockIndex((1, 2, 4)) < BlockIndex((1, 3, 4))


class TestEmbeddingMatrix:
    def test_renormalizes(self):
        emb = EmbeddingMatrix("a", np.array([[3.0, 4.0], [0.0, 2.0]]))
        np.testing.assert_allclose(np.linalg.norm(emb.rows, axis=1), 1.0, atol=1e-12)
        assert emb.n == 2 and emb.dim == 2

    def test_rejects_zero_row(self):
        with pytest.raises(ValueError, match="row 2"):
            EmbeddingMatrix("a", np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_immutable(self):
        emb = EmbeddingMatrix("a", np.eye(3))
        with pytest.raises(ValueError):
            emb.rows[0, 0] = 5.0


class TestBinomial:
    def test_paper_small_case(self):
        assert binomial(10, 3) == 120

    def test_boundaries(self):
        for n in (1, 5, 17):
            assert binomial(n, 0) == 1
            assert binomial(n, n) == 1

    def test_huge_value_is_exact(self):
        assert binomial(210, 63) > 3 * 10**54

    @pytest.mark.parametrize("n,k", [(5, -1), (5, 6), (0, 0)])
    def test_domain_errors(self, n, k):
        with pytest.raises(ValueError):
            binomial(n, k)

    def test_pascals_rule(self):
        for n in range(2, 31):
            for k in range(1, n):
                assert binomial(n, k) == binomial(n - 1, k - 1) + binomial(n - 1, k)


class TestEnumerateBlocks:
    def test_first_blocks_lexicographic(self):
        first = [b.indices for _, b in zip(range(3), enumerate_blocks(10, 3))]
        assert first == [(1, 2, 3), (1, 2, 4), (1, 2, 5)]

    def test_exhaustive_4_choose_2(self):
        blocks = [b.indices for b in enumerate_blocks(4, 2)]
        assert blocks == [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]

    def test_k_equals_n(self):
        assert [b.indices for b in enumerate_blocks(3, 3)] == [(1, 2, 3)]

    def test_count_matches_binomial(self):
        for n in range(1, 13):
            for k in range(1, n + 1):
                blocks = list(enumerate_blocks(n, k))
                assert len(blocks) == binomial(n, k)
                assert len({b.indices for b in blocks}) == len(blocks)

    def test_successors_increase(self):
        blocks = [b.indices for b in enumerate_blocks(7, 3)]
        assert blocks == sorted(blocks)
        assert blocks[0] == (1, 2, 3) and blocks[-1] == (5, 6, 7)


class TestBlockText:
    def test_selection(self):
        art = Article("a", tuple(f"S{i}." for i in range(1, 6)))
        assert block_text(art, BlockIndex((2, 4))) == ["S2.", "S4."]

    def test_whole_article(self):
        art = Article("a", ("S1.", "S2.", "S3."))
        assert block_text(art, BlockIndex((1, 2, 3))) == list(art.sentences)

    def test_singleton(self):
        art = Article("a", ("S1.", "S2.", "S3."))
        assert block_text(art, BlockIndex((3,))) == ["S3."]

    def test_out_of_range(self):
        art = Article("a", ("S1.", "S2."))
        with pytest.raises(ValueError, match="out of range"):
            block_text(art, BlockIndex((1, 3)))
