"""Labeled geolocation -> CSI datasets (JSON-lines on disk)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..link import CsiReport
from ..scenario import Geolocation


@dataclass(frozen=True)
class CsiRecord:
    bs_id: int
    ue_loc: Geolocation
    labels: tuple[CsiReport, ...]  # one per RB
    split: str = "train"


@dataclass
class CsiDataset:
    records: list[CsiRecord]

    def __post_init__(self):
        lengths = {len(r.labels) for r in self.records}
        if len(lengths) > 1:
            raise ValueError(f"inconsistent per-record label counts: {sorted(lengths)}")

    @property
    def rb_count(self) -> int:
        return len(self.records[0].labels) if self.records else 0

    def split_records(self, split: str, bs_id: int | None = None) -> list[CsiRecord]:
        return [
            r
            for r in self.records
            if r.split == split and (bs_id is None or r.bs_id == bs_id)
        ]

    @property
    def bs_ids(self) -> list[int]:
        return sorted({r.bs_id for r in self.records})


def dataset_to_jsonl(ds: CsiDataset) -> str:
    lines = []
    for r in ds.records:
        lines.append(
            json.dumps(
                {
                    "bs_id": r.bs_id,
                    "ue_loc": {"x": r.ue_loc.x, "y": r.ue_loc.y, "z": r.ue_loc.z},
                    "labels": [
                        {"ri": l.ri, "cqi1": l.cqi1, "cqi2": l.cqi2, "pmi": l.pmi}
                        for l in r.labels
                    ],
                    "split": r.split,
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def dataset_from_jsonl(text: str) -> CsiDataset:
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        records.append(
            CsiRecord(
                bs_id=doc["bs_id"],
                ue_loc=Geolocation(**doc["ue_loc"]),
                labels=tuple(CsiReport(**l) for l in doc["labels"]),
                split=doc["split"],
            )
        )
    return CsiDataset(records=records)


def make_correlated_dataset(
    n_train: int,
    n_test: int,
    rb_count: int,
    seed: int,
    num_pmi: int = 16,
    max_rank: int = 2,
    area: tuple[float, float] = (400.0, 300.0),
) -> CsiDataset:
    """Synthetic dataset whose per-RB labels share one smooth spatial field.

    Each CSI field is a quantized random-Fourier function of (x, y); RBs see
    the same function with a small per-RB shift, giving the strong cross-RB
    correlation that a shared-query model can exploit.
    """
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    xy = rng.uniform(0.0, 1.0, size=(n, 2)) * np.array(area)

    def smooth_field(scale: float) -> np.ndarray:
        freqs = rng.normal(0.0, 1.0 / scale, size=(4, 2))
        phases = rng.uniform(0.0, 2 * np.pi, size=4)
        amps = rng.uniform(0.5, 1.0, size=4)
        vals = np.sum(
            amps[None, :] * np.sin(xy @ freqs.T + phases[None, :]), axis=1
        )
        lo, hi = vals.min(), vals.max()
        return (vals - lo) / (hi - lo + 1e-12)

    base = {name: smooth_field(80.0) for name in ("ri", "cqi", "pmi")}
    rb_shift = rng.normal(0.0, 0.03, size=(3, rb_count))

    records = []
    for i in range(n):
        labels = []
        for rb in range(rb_count):
            ri = 1 + int(np.clip(base["ri"][i] + rb_shift[0, rb], 0, 0.999) * max_rank)
            cqi = int(np.clip(base["cqi"][i] + rb_shift[1, rb], 0, 0.999) * 16)
            pmi = int(np.clip(base["pmi"][i] + rb_shift[2, rb], 0, 0.999) * num_pmi)
            labels.append(CsiReport(ri=ri, cqi1=cqi, cqi2=cqi, pmi=pmi))
        records.append(
            CsiRecord(
                bs_id=0,
                ue_loc=Geolocation(float(xy[i, 0]), float(xy[i, 1]), 1.5),
                labels=tuple(labels),
                split="train" if i < n_train else "test",
            )
        )
    return CsiDataset(records=records)
