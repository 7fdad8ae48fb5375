import numpy as np
import pytest

from gnnppi.features import (
    AC_SCALES,
    CTD_ATTRIBUTES,
    CTD_DIM,
    ROW_DIM,
    STANDARD_RESIDUES,
    AminoAcidEmbedding,
    aa_class,
    ac_features,
    auto_covariance,
    ctd_features,
    encode_protein,
    kmers,
    read_matrix,
    train_skipgram,
    write_matrix,
)


def random_seq(rng, length):
    return "".join(rng.choice(list(STANDARD_RESIDUES), size=length))


class TestAaClass:
    @pytest.mark.parametrize("res, cls", [("K", 5), ("R", 5), ("C", 7), ("X", 8), ("U", 8), ("O", 8), ("A", 1), ("E", 6), ("Q", 4)])
    def test_table(self, res, cls):
        assert aa_class(res) == cls

    def test_non_letter(self):
        with pytest.raises(ValueError):
            aa_class("1")

    def test_standard_residues_covered_once(self):
        assert sorted(r for r in STANDARD_RESIDUES if aa_class(r) <= 7) == sorted(STANDARD_RESIDUES)


class TestSkipGram:
    def test_single_token(self):
        vecs = train_skipgram(["MKV"])
        assert set(vecs) == {"MKV"}
        assert vecs["MKV"].shape == (5,)

    def test_overlapping_tokens(self):
        assert set(train_skipgram(["MKVL"])) == {"MKV", "KVL"}
        assert kmers("MKVL") == ["MKV", "KVL"]

    def test_too_short(self):
        with pytest.raises(ValueError):
            train_skipgram(["MK", "A"])
        with pytest.raises(ValueError):
            train_skipgram([])

    def test_deterministic(self):
        corpus = ["MKVLAGHT", "GGSTPLKRDE"]
        a = train_skipgram(corpus, seed=3)
        b = train_skipgram(corpus, seed=3)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_cooccurrence_similarity(self):
        # MKV/KVM/VMK share contexts; GGA never neighbors MKV
        corpus = ["MKV" * 12] * 20 + ["GGA" * 12] * 20

        def cos(u, v):
            return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

        wins = 0
        for seed in range(10):
            vec = train_skipgram(corpus, seed=seed, epochs=5)
            wins += cos(vec["MKV"], vec["KVM"]) > cos(vec["MKV"], vec["GGA"])
        assert wins >= 6


class TestEncodeProtein:
    def test_width(self):
        emb = AminoAcidEmbedding(train_skipgram(["MKVLAGHTRW"]))
        assert encode_protein("MKVLAGHTRW", emb).rows.shape == (10, ROW_DIM) == (10, 13)

    def test_truncation(self):
        seq = "A" * 3000
        m = encode_protein(seq, AminoAcidEmbedding())
        assert m.rows.shape == (2000, 13)
        assert m.length == 3000

    def test_padding(self):
        m = encode_protein("MKV", AminoAcidEmbedding(), max_len=8, pad=True)
        assert m.rows.shape == (8, 13)
        assert not m.rows[3:].any()

    def test_e2_only(self):
        m = encode_protein("KK", AminoAcidEmbedding())
        expected = np.zeros(13)
        expected[5 + 5 - 1] = 1.0
        np.testing.assert_array_equal(m.rows, [expected, expected])

    def test_layout_and_oov(self):
        emb = AminoAcidEmbedding({"MKV": np.arange(5.0)})
        rows = encode_protein("MKVW", emb).rows
        np.testing.assert_array_equal(rows[0, :5], np.arange(5.0))
        assert not rows[1, :5].any()  # KVW out of vocabulary
        assert not rows[2:, :5].any()  # no full 3-mer
        np.testing.assert_array_equal(rows[:, 5:].sum(axis=1), 1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            encode_protein("", AminoAcidEmbedding())

    def test_embedding_json_roundtrip(self):
        emb = AminoAcidEmbedding(train_skipgram(["MKVLAGHT"]))
        again = AminoAcidEmbedding.from_json(emb.to_json())
        assert again.to_json() == emb.to_json()


def ctd_oracle_attr(seq, groups):
    """Plain-loop C/T/D for one attribute."""
    cls = []
    for ch in seq:
        for c, g in enumerate(groups, start=1):
            if ch in g:
                cls.append(c)
    length = len(cls)
    comp = [cls.count(c) / length for c in (1, 2, 3)]
    trans = []
    for x, y in ((1, 2), (1, 3), (2, 3)):
        n = sum(1 for i in range(length - 1) if {cls[i], cls[i + 1]} == {x, y})
        trans.append(n / (length - 1))
    dist = []
    for c in (1, 2, 3):
        pos = [i + 1 for i, v in enumerate(cls) if v == c]
        for f in (0.0, 0.25, 0.5, 0.75, 1.0):
            if not pos:
                dist.append(0.0)
            else:
                nth = max(1, int(f * len(pos)))
                dist.append(pos[nth - 1] / length)
    return comp + trans + dist


class TestCtd:
    def test_tables_partition_standard_residues(self):
        for name, *groups in CTD_ATTRIBUTES:
            joined = "".join(groups)
            assert sorted(joined) == sorted(STANDARD_RESIDUES), name

    def test_aaaa_hydrophobicity(self):
        v = ctd_features("AAAA")
        np.testing.assert_array_equal(v[:3], [0, 1, 0])
        np.testing.assert_array_equal(v[3:6], [0, 0, 0])

    def test_rc_hydrophobicity(self):
        v = ctd_features("RC")
        np.testing.assert_allclose(v[:3], [0.5, 0, 0.5])
        assert v[3 + 1] == 1.0  # 1<->3 transition

    def test_length(self):
        assert ctd_features("MKVLAGHT").shape == (147,) == (CTD_DIM,)

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            seq = random_seq(rng, int(rng.integers(2, 60)))
            expected = []
            for _, *groups in CTD_ATTRIBUTES:
                expected += ctd_oracle_attr(seq, groups)
            np.testing.assert_allclose(ctd_features(seq), expected)

    def test_ranges_and_simplex(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = ctd_features(random_seq(rng, int(rng.integers(2, 200)))).reshape(7, 21)
            np.testing.assert_allclose(v[:, :3].sum(axis=1), 1.0, atol=1e-12)
            assert (v >= 0).all() and (v <= 1).all()

    def test_skips_unknown(self):
        np.testing.assert_array_equal(ctd_features("AXXA"), ctd_features("AA"))

    def test_too_short(self):
        with pytest.raises(ValueError):
            ctd_features("A")
        with pytest.raises(ValueError):
            ctd_features("AX")


class TestAc:
    def test_constant_property_zero(self):
        assert not ac_features("A" * 40).any()

    def test_length(self):
        rng = np.random.default_rng(0)
        assert ac_features(random_seq(rng, 50)).shape == (210,)
        assert ac_features(random_seq(rng, 50), lag_max=10).shape == (70,)

    def test_alternating_series(self):
        series = np.array([1.0, -1.0] * 20)
        ac = auto_covariance(series, 2)
        assert ac[0] == pytest.approx(-1.0)
        assert ac[1] == pytest.approx(1.0)

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(3)
        seq = random_seq(rng, 45)
        got = ac_features(seq, lag_max=5).reshape(7, 5)
        for j, scale in enumerate(AC_SCALES.values()):
            x = np.array([scale[c] for c in seq])
            z = (x - x.mean()) / x.std()
            for lag in range(1, 6):
                ref = sum(z[i] * z[i + lag] for i in range(len(z) - lag)) / (len(z) - lag)
                assert got[j, lag - 1] == pytest.approx(ref)

    def test_too_short(self):
        with pytest.raises(ValueError):
            ac_features("A" * 30)


def test_matrix_file_roundtrip(tmp_path):
    m = np.arange(12, dtype=float).reshape(3, 4) / 7
    path = tmp_path / "m.bin"
    write_matrix(path, m)
    raw = path.read_bytes()
    assert raw[:8] == (3).to_bytes(4, "little") + (4).to_bytes(4, "little")
    assert len(raw) == 8 + 12 * 4
    np.testing.assert_allclose(read_matrix(path), m, rtol=1e-6)
