import numpy as np
import pytest

from ffmimo.codebook import CodebookConfig, build_codebook
from ffmimo.csi_map.predictors import OraclePredictor
from ffmimo.link import CsiReport, default_esm_config
from ffmimo.rate_model import (
    FrameConfig,
    McsEntry,
    McsTable,
    bs_rb_labels,
    codeword_rate_mbps,
    cqi_to_mcs,
    load_mcs_table,
    max_phy_rate,
    rate_matrix,
)
from ffmimo.scenario import ScenarioConfig, generate_scenario, sample_geolocations


@pytest.fixture(scope="module")
def tbl():
    return load_mcs_table()


class TestMcsTable:
    def test_anchor_row(self, tbl):
        assert cqi_to_mcs(tbl, 1) == (2, 0.076)

    def test_no_transmission_row(self, tbl):
        assert cqi_to_mcs(tbl, 0) == (0, 0.0)

    def test_out_of_range(self, tbl):
        with pytest.raises(IndexError):
            cqi_to_mcs(tbl, 16)
        with pytest.raises(IndexError):
            cqi_to_mcs(tbl, -1)

    def test_spectral_efficiency_nondecreasing(self, tbl):
        eff = [e.modulation_order * e.code_rate for e in tbl.entries]
        assert all(b >= a for a, b in zip(eff, eff[1:]))

    def test_bad_table_rejected(self):
        entries = [McsEntry(0, 0, 0.0)] + [McsEntry(i, 2, 0.9 - 0.05 * i) for i in range(1, 16)]
        with pytest.raises(ValueError):
            McsTable(entries=tuple(entries))


class TestMaxPhyRate:
    def test_paper_anchor_bit_exact(self, tbl):
        rate = max_phy_rate(CsiReport(ri=1, cqi1=1, cqi2=1, pmi=0), tbl)
        assert rate == 0.020064

    def test_re_accounting(self):
        fc = FrameConfig()
        assert fc.symbols_per_subframe * fc.res_per_symbol_per_rb == 168
        assert fc.data_res_per_rb == 132

    def test_cqi_zero_is_zero_rate(self, tbl):
        assert max_phy_rate(CsiReport(ri=1, cqi1=0, cqi2=0, pmi=0), tbl) == 0.0

    def test_rank2_doubles_the_anchor(self, tbl):
        rate = max_phy_rate(CsiReport(ri=2, cqi1=1, cqi2=1, pmi=0), tbl)
        assert rate == pytest.approx(2 * 0.020064, rel=1e-15)

    def test_rank4_layer_split(self, tbl):
        # 2 + 2 layers: each codeword counts twice
        rate = max_phy_rate(CsiReport(ri=4, cqi1=1, cqi2=2, pmi=0), tbl)
        want = 2 * codeword_rate_mbps(1, 1, tbl) + 2 * codeword_rate_mbps(2, 1, tbl)
        assert rate == pytest.approx(want, rel=1e-15)

    def test_nondecreasing_in_cqi(self, tbl):
        rates = [
            max_phy_rate(CsiReport(ri=1, cqi1=c, cqi2=c, pmi=0), tbl) for c in range(16)
        ]
        assert all(b >= a for a, b in zip(rates, rates[1:]))

    def test_linear_in_layers(self, tbl):
        one = codeword_rate_mbps(5, 1, tbl)
        assert codeword_rate_mbps(5, 2, tbl) == pytest.approx(2 * one, rel=1e-15)


@pytest.fixture(scope="module")
def setup():
    s = generate_scenario(ScenarioConfig(num_bs=2, rb_count=3), seed=5)
    cb = build_codebook(CodebookConfig(n1=4, n2=1, o1=2, o2=1, max_rank=2))
    esm = default_esm_config(load_mcs_table().as_tuples())
    return s, OraclePredictor(s, cb, esm)


class TestRateMatrix:
    def test_shape(self, setup):
        s, predictor = setup
        ues = sample_geolocations(s, 4, seed=1)
        mat = rate_matrix(predictor, s, ues)
        assert mat.shape == (2 * 3, 4)
        assert np.all(mat >= 0)

    def test_matches_elementwise_composition(self, setup, tbl):
        s, predictor = setup
        ues = sample_geolocations(s, 3, seed=2)
        mat = rate_matrix(predictor, s, ues)
        labels = bs_rb_labels(s)
        for m, ue in enumerate(ues):
            for w, (bs_id, rb) in enumerate(labels):
                rep = predictor.predict(bs_id, ue)[rb]
                assert mat[w, m] == max_phy_rate(rep, tbl)
