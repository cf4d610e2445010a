"""Beam-selection precoder codebook built from oversampled DFT beams.

Single-panel, single-polarization variant: a precoder is one DFT beam per
layer (layers use mutually orthogonal beams picked by the companion index
i13) with a QPSK co-phase applied across the two halves of the panel.
Precoders are enumerated rank-major into a flat, stable PMI space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def dft_beam(n: int, index: int, oversampling: int) -> np.ndarray:
    """Oversampled DFT beam: element m = exp(j*2*pi*m*index/(n*O)) / sqrt(n)."""
    m = np.arange(n)
    return np.exp(2j * np.pi * m * index / (n * oversampling)) / np.sqrt(n)


@dataclass(frozen=True)
class CodebookConfig:
    n1: int
    n2: int
    o1: int
    o2: int
    max_rank: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("panel dimensions must be >= 1")
        if self.o1 < 1 or self.o2 < 1:
            raise ValueError("oversampling rates must be >= 1")
        if not 1 <= self.max_rank <= self.n1 * self.n2:
            raise ValueError("max_rank must be in 1..N1*N2")

    @property
    def num_tx(self) -> int:
        return self.n1 * self.n2


@dataclass(frozen=True)
class Precoder:
    matrix: np.ndarray  # N_T x rank, Frobenius norm 1
    rank: int
    i11: int
    i12: int
    i13: int
    i2: int
    flat_index: int

    @property
    def indices(self) -> tuple[int, int, int, int, int]:
        return (self.rank, self.i11, self.i12, self.i13, self.i2)


def _companion_strides(n1: int, rank: int) -> list[int]:
    """Strides s such that layer beams i11 + O1*(l*s mod N1) are distinct.

    Distinct residues mod N1 guarantee mutually orthogonal beams.  Rank 1
    has the single sentinel stride 0.
    """
    if rank == 1:
        return [0]
    valid = []
    for s in range(1, n1):
        residues = {(l * s) % n1 for l in range(rank)}
        if len(residues) == rank:
            valid.append(s)
    return valid


def _cophase_lower_half(beam: np.ndarray, i2: int) -> np.ndarray:
    out = beam.copy()
    half = beam.shape[0] // 2
    out[half:] *= np.exp(1j * np.pi * i2 / 2.0)
    return out


def build_codebook(cfg: CodebookConfig) -> "Codebook":
    """Enumerate every (rank, i11, i12, i13, i2) precoder for the config."""
    precoders: list[Precoder] = []
    flat = 0
    for rank in range(1, cfg.max_rank + 1):
        strides = _companion_strides(cfg.n1, rank)
        if not strides:
            raise ValueError(
                f"rank {rank} needs {rank} orthogonal beams but N1={cfg.n1} cannot supply them"
            )
        for i11 in range(cfg.n1 * cfg.o1):
            for i12 in range(cfg.n2 * cfg.o2):
                for i13, stride in enumerate(strides):
                    for i2 in range(4):
                        cols = []
                        for layer in range(rank):
                            az = (i11 + cfg.o1 * ((layer * stride) % cfg.n1)) % (cfg.n1 * cfg.o1)
                            beam = np.kron(
                                dft_beam(cfg.n1, az, cfg.o1), dft_beam(cfg.n2, i12, cfg.o2)
                            )
                            cols.append(_cophase_lower_half(beam, i2))
                        mat = np.stack(cols, axis=1) / np.sqrt(rank)
                        precoders.append(
                            Precoder(
                                matrix=mat,
                                rank=rank,
                                i11=i11,
                                i12=i12,
                                i13=i13,
                                i2=i2,
                                flat_index=flat,
                            )
                        )
                        flat += 1
    return Codebook(config=cfg, precoders=tuple(precoders))


@dataclass(frozen=True)
class Codebook:
    config: CodebookConfig
    precoders: tuple[Precoder, ...]

    def __len__(self) -> int:
        return len(self.precoders)

    def by_rank(self, rank: int) -> list[Precoder]:
        return [p for p in self.precoders if p.rank == rank]

    @property
    def ranks(self) -> list[int]:
        return sorted({p.rank for p in self.precoders})


def precoder_by_pmi(cb: Codebook, rank: int, pmi: int) -> Precoder:
    """Lookup by flat PMI; the index must belong to the stated rank's block."""
    if not 0 <= pmi < len(cb.precoders):
        raise IndexError(f"pmi {pmi} out of range 0..{len(cb.precoders) - 1}")
    p = cb.precoders[pmi]
    if p.rank != rank:
        raise IndexError(f"pmi {pmi} has rank {p.rank}, not {rank}")
    return p


def codebook_to_json(cb: Codebook) -> str:
    """Dump for cross-implementation golden tests; matrices as [re, im] pairs."""
    doc = {
        "config": {
            "n1": cb.config.n1,
            "n2": cb.config.n2,
            "o1": cb.config.o1,
            "o2": cb.config.o2,
            "max_rank": cb.config.max_rank,
        },
        "precoders": [
            {
                "flat_index": p.flat_index,
                "rank": p.rank,
                "i11": p.i11,
                "i12": p.i12,
                "i13": p.i13,
                "i2": p.i2,
                "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in p.matrix],
            }
            for p in cb.precoders
        ],
    }
    return json.dumps(doc)
