"""CSI quadruple -> maximum PHY-layer rate per resource block.

Follows the fixed OFDM frame accounting: 14 symbols/subframe, 12 REs per
symbol per RB, 3 PDCCH symbols, 10 downlink slots per frame, 100 frames/s.
The anchor: (ri=1, cqi=1) -> 264 bits * 0.076 = 20.064 bits TBS ->
0.020064 Mbps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .link import CsiReport, codeword_layer_split


@dataclass(frozen=True)
class McsEntry:
    cqi: int
    modulation_order: int
    code_rate: float


@dataclass(frozen=True)
class McsTable:
    entries: tuple[McsEntry, ...]

    def __post_init__(self):
        if len(self.entries) != 16:
            raise ValueError("MCS table needs 16 entries")
        if self.entries[0].modulation_order != 0 or self.entries[0].code_rate != 0.0:
            raise ValueError("CQI 0 must be the no-transmission entry")
        eff = [e.modulation_order * e.code_rate for e in self.entries]
        if any(b < a for a, b in zip(eff, eff[1:])):
            raise ValueError("spectral efficiency must be nondecreasing in CQI")
        for e in self.entries[1:]:
            if not 0.0 < e.code_rate < 1.0:
                raise ValueError("code rates must be in (0, 1)")

    def as_tuples(self) -> list[tuple[int, int, float]]:
        return [(e.cqi, e.modulation_order, e.code_rate) for e in self.entries]


def load_mcs_table() -> McsTable:
    with resources.files("ffmimo.data").joinpath("mcs_table.csv").open("r") as fh:
        rows = list(csv.DictReader(fh))
    entries = tuple(
        McsEntry(int(r["cqi"]), int(r["modulation_order"]), float(r["code_rate"])) for r in rows
    )
    return McsTable(entries=entries)


def cqi_to_mcs(tbl: McsTable, cqi: int) -> tuple[int, float]:
    if not 0 <= cqi < 16:
        raise IndexError(f"cqi {cqi} out of range 0..15")
    e = tbl.entries[cqi]
    return e.modulation_order, e.code_rate


@dataclass(frozen=True)
class FrameConfig:
    symbols_per_subframe: int = 14
    res_per_symbol_per_rb: int = 12
    pdcch_symbols: int = 3
    dl_slots_per_frame: int = 10
    frames_per_second: int = 100

    def __post_init__(self):
        if min(
            self.symbols_per_subframe,
            self.res_per_symbol_per_rb,
            self.dl_slots_per_frame,
            self.frames_per_second,
        ) <= 0 or self.pdcch_symbols < 0:
            raise ValueError("frame constants must be positive")

    @property
    def data_res_per_rb(self) -> int:
        return (self.symbols_per_subframe - self.pdcch_symbols) * self.res_per_symbol_per_rb


def codeword_rate_mbps(
    cqi: int, num_layers: int, tbl: McsTable, fc: FrameConfig = FrameConfig()
) -> float:
    """Rate contribution of one codeword carrying `num_layers` layers.

    Data REs * modulation order * code rate gives the (unrounded) transport
    block size, scaled by layers, downlink slots and frames per second.
    """
    order, rate = cqi_to_mcs(tbl, cqi)
    tbs = order * fc.data_res_per_rb * rate
    return tbs * num_layers * fc.dl_slots_per_frame * fc.frames_per_second / 1e6


def max_phy_rate(
    report: CsiReport, tbl: McsTable, fc: FrameConfig = FrameConfig()
) -> float:
    """Maximum PHY-layer rate in Mbps for one RB given a CSI report."""
    cw0, cw1 = codeword_layer_split(report.ri)
    total = 0.0
    for layers, cqi in ((cw0, report.cqi1), (cw1, report.cqi2)):
        if layers:
            total += codeword_rate_mbps(cqi, len(layers), tbl, fc)
    return total


def rate_matrix(predictor, s, ues) -> np.ndarray:
    """W x M matrix of predicted per-RB rates; rows enumerate (bs, rb) pairs.

    `predictor` follows the CsiPredictor protocol: predict(bs_id, ue_loc)
    returns one CsiReport per RB of that BS.
    """
    tbl = load_mcs_table()
    rows = [(bs.id, rb) for bs in s.bs_list for rb in range(bs.rb_count)]
    out = np.zeros((len(rows), len(ues)))
    for m, ue in enumerate(ues):
        for bs in s.bs_list:
            reports = predictor.predict(bs.id, ue)
            base = next(i for i, (b, r) in enumerate(rows) if b == bs.id and r == 0)
            for rb, rep in enumerate(reports):
                out[base + rb, m] = max_phy_rate(rep, tbl)
    return out


def bs_rb_labels(s) -> list[tuple[int, int]]:
    """Row labels for rate matrices: (bs_id, rb_index) per row."""
    return [(bs.id, rb) for bs in s.bs_list for rb in range(bs.rb_count)]


def save_rate_matrix_csv(mat: np.ndarray, path) -> None:
    """Plain numeric W x M CSV, the interchange format of `alloc run`."""
    np.savetxt(path, np.asarray(mat, dtype=float), delimiter=",")


def load_rate_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
