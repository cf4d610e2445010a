"""Feedback-chain math: ZF equalization, per-layer SINR, mutual information,
exhaustive precoder search, effective-SNR mapping and CQI selection.

These operations turn a grid of channel matrices into the ground-truth CSI
quadruple (RI, CQI1, CQI2, PMI) for one resource block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .codebook import Codebook, Precoder
from .errors import NoValidPrecoderError, SingularChannelError
from .scenario import Geolocation, Scenario, channel_grid

NUM_CQI = 16


@dataclass(frozen=True)
class CsiReport:
    ri: int
    cqi1: int
    cqi2: int
    pmi: int

    def __post_init__(self):
        if self.ri < 1:
            raise ValueError("ri must be >= 1")
        if not (0 <= self.cqi1 < NUM_CQI and 0 <= self.cqi2 < NUM_CQI):
            raise ValueError("cqi out of range 0..15")
        if self.pmi < 0:
            raise ValueError("pmi must be >= 0")


@dataclass(frozen=True)
class EqualizationResult:
    f_matrix: np.ndarray  # L x N_R
    g_matrix: np.ndarray  # L x L, = F H W
    per_layer_sinr: np.ndarray  # (L,) linear


def codeword_layer_split(ri: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Layer indices carried by codeword 0 and codeword 1.

    Single codeword up to rank 1; ranks 2..4 split 1+1, 1+2, 2+2.
    """
    if ri == 1:
        return (0,), ()
    if ri == 2:
        return (0,), (1,)
    if ri == 3:
        return (0,), (1, 2)
    if ri == 4:
        return (0, 1), (2, 3)
    raise ValueError(f"unsupported rank {ri}")


def zf_equalizer(h: np.ndarray, w: Precoder | np.ndarray) -> np.ndarray:
    """Zero-forcing filter F = ((HW)^H HW)^{-1} (HW)^H.

    Raises SingularChannelError when the effective channel is rank deficient.
    """
    wm = w.matrix if isinstance(w, Precoder) else w
    a = h @ wm
    layers = a.shape[1]
    if np.linalg.matrix_rank(a) < layers:
        raise SingularChannelError("effective channel H@W is rank deficient")
    gram = a.conj().T @ a
    return np.linalg.solve(gram, a.conj().T)


def post_eq_sinr(h: np.ndarray, w: Precoder | np.ndarray, sigma2: float) -> np.ndarray:
    """Per-layer post-equalization SINR (linear)."""
    return equalize(h, w, sigma2).per_layer_sinr


def equalize(h: np.ndarray, w: Precoder | np.ndarray, sigma2: float) -> EqualizationResult:
    wm = w.matrix if isinstance(w, Precoder) else w
    f = zf_equalizer(h, wm)
    g = f @ h @ wm
    sig = np.abs(np.diag(g)) ** 2
    isi = np.sum(np.abs(g) ** 2, axis=1) - sig
    noise = sigma2 * np.sum(np.abs(f) ** 2, axis=1)
    return EqualizationResult(f_matrix=f, g_matrix=g, per_layer_sinr=sig / (isi + noise))


def mutual_info(sinrs) -> float:
    """Sum-rate mutual information, bits per channel use."""
    arr = np.asarray(sinrs, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.sum(np.log2(1.0 + arr)))


def _grid_metrics(channels_flat: np.ndarray, w_stack: np.ndarray, sigma2: float):
    """Vectorized per-RE metrics for a stack of same-rank precoders.

    channels_flat: (G, N_R, N_T); w_stack: (P, N_T, L).  Returns
    (sinr (P, G, L), mi (P, G), singular (P, G)); singular entries carry
    garbage SINR and must be masked by the caller.
    """
    a = np.einsum("gij,pjl->pgil", channels_flat, w_stack)
    svals = np.linalg.svd(a, compute_uv=False)
    n_r, layers = a.shape[-2], a.shape[-1]
    eps = np.finfo(float).eps
    tol = svals[..., 0] * max(n_r, layers) * eps
    singular = svals[..., -1] <= tol

    gram = np.einsum("pgil,pgim->pglm", a.conj(), a)
    if np.any(singular):
        gram = gram.copy()
        gram[singular] = np.eye(layers)
    with np.errstate(all="ignore"):
        inv = np.linalg.inv(gram)
        f = np.einsum("pglm,pgim->pgli", inv, a.conj())
        g = np.einsum("pgli,pgim->pglm", f, a)
        sig = np.abs(np.einsum("pgll->pgl", g)) ** 2
        isi = np.sum(np.abs(g) ** 2, axis=-1) - sig
        noise = sigma2 * np.sum(np.abs(f) ** 2, axis=-1)
        sinr = sig / (isi + noise)
        mi = np.sum(np.log2(1.0 + sinr), axis=-1)
    return sinr, mi, singular


# Relative window treating numerically indistinguishable hypotheses as tied,
# so the smallest-(rank, flat_index) rule is reproducible across independent
# implementations of the same formulas.  Mirrored beam pairs and co-phase
# aliases make exact ties structural, not exceptional.
MI_TIE_REL_TOL = 1e-9


def _search_grids(channels: np.ndarray, cb: Codebook, sigma2: float):
    """Exhaustive search over independent RB grids sharing one channel stack.

    channels: (n_rb, K, T, N_R, N_T).  Returns per-RB (ri, pmi, sinr grid).
    """
    n_rb, kk, tt, n_r, n_t = channels.shape
    flat = channels.reshape(n_rb * kk * tt, n_r, n_t)
    totals = []  # (P, n_rb) per rank group, groups in flat order
    sinrs = []
    for rank in cb.ranks:
        group = cb.by_rank(rank)
        w_stack = np.stack([p.matrix for p in group])
        sinr, mi, singular = _grid_metrics(flat, w_stack, sigma2)
        p_n = len(group)
        mi = mi.reshape(p_n, n_rb, kk * tt)
        bad = singular.reshape(p_n, n_rb, kk * tt).any(axis=2)
        total = mi.sum(axis=2)
        total[bad] = -np.inf
        totals.append(total)
        sinrs.append(sinr.reshape(p_n, n_rb, kk, tt, -1))
    all_totals = np.concatenate(totals, axis=0)  # flat-index order
    ordered = list(cb.precoders)

    out = []
    for rb in range(n_rb):
        col = all_totals[:, rb]
        best = np.max(col)
        if not np.isfinite(best):
            raise NoValidPrecoderError("all precoder hypotheses were singular")
        tol = MI_TIE_REL_TOL * max(1.0, abs(best))
        winner = int(np.argmax(col >= best - tol))  # first hit = smallest flat index
        p = ordered[winner]
        group_idx = cb.ranks.index(p.rank)
        offset = winner - sum(t.shape[0] for t in totals[:group_idx])
        out.append((p.rank, p.flat_index, sinrs[group_idx][offset, rb]))
    return out


def select_pmi_ri(
    channels: np.ndarray, cb: Codebook, sigma2: float
) -> tuple[int, int, np.ndarray]:
    """Exhaustive search of the codebook maximizing summed mutual information.

    channels has shape (K, T, N_R, N_T).  Ties break to the smallest
    (rank, flat_index); hypotheses singular anywhere on the grid are
    skipped.  Returns (ri, pmi, per-RE SINR grid of the winner).
    """
    if channels.ndim != 4 or channels.size == 0:
        raise ValueError("channels must be a nonempty (K, T, N_R, N_T) grid")
    return _search_grids(channels[None], cb, sigma2)[0]


# --- Effective SNR mapping ---


@dataclass(frozen=True)
class BicmCurve:
    """Monotone SNR(dB) -> capacity(bits) table with linear interpolation."""

    snr_db: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.bits) <= 0) or np.any(np.diff(self.snr_db) <= 0):
            raise ValueError("capacity curve must be strictly increasing")

    def capacity(self, sinr_linear: np.ndarray) -> np.ndarray:
        sinr = np.maximum(np.asarray(sinr_linear, dtype=float), 1e-300)
        return np.interp(10.0 * np.log10(sinr), self.snr_db, self.bits)

    def inv_capacity_db(self, bits: np.ndarray) -> np.ndarray:
        return np.interp(bits, self.bits, self.snr_db)

    def inv_capacity(self, bits: np.ndarray) -> np.ndarray:
        return 10.0 ** (self.inv_capacity_db(bits) / 10.0)


_MOD_FILES = {2: "bicm_qpsk.csv", 4: "bicm_16qam.csv", 6: "bicm_64qam.csv", 8: "bicm_256qam.csv"}


def load_bicm_curve(modulation_order: int) -> BicmCurve:
    name = _MOD_FILES[modulation_order]
    with resources.files("ffmimo.data").joinpath(name).open("r") as fh:
        arr = np.loadtxt(fh, delimiter=",", skiprows=1)
    return BicmCurve(snr_db=arr[:, 0], bits=arr[:, 1])


@dataclass(frozen=True)
class EsmConfig:
    """Calibration for the effective-SNR mapping and CQI thresholds.

    modulation_per_cqi maps each CQI to the modulation order whose capacity
    curve is used for its hypothesis (CQI 0 borrows QPSK; it is never
    selected by threshold).  Thresholds are in dB, entry 0 is -inf.
    """

    gamma_per_cqi: tuple[float, ...]
    curves: dict[int, BicmCurve]
    modulation_per_cqi: tuple[int, ...]
    cqi_snr_thresholds_db: tuple[float, ...]

    def __post_init__(self):
        if len(self.gamma_per_cqi) != NUM_CQI or len(self.cqi_snr_thresholds_db) != NUM_CQI:
            raise ValueError("need 16 gammas and 16 thresholds")
        if any(g <= 0 for g in self.gamma_per_cqi):
            raise ValueError("gamma factors must be positive")
        finite = [t for t in self.cqi_snr_thresholds_db[1:]]
        if any(b < a for a, b in zip(finite, finite[1:])):
            raise ValueError("thresholds must be nondecreasing in CQI")

    def curve_for_cqi(self, cqi: int) -> BicmCurve:
        return self.curves[self.modulation_per_cqi[cqi]]


def effective_snr(sinrs, cqi_hypothesis: int, cfg: EsmConfig) -> float:
    """Map a set of SINRs to one AWGN-equivalent SNR under a CQI hypothesis.

    gamma * f^{-1}( mean f(SINR/gamma) ) with f the hypothesis modulation's
    BICM capacity curve.  A constant input is a fixed point for any curve.
    """
    arr = np.asarray(sinrs, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty SINR list")
    gamma = cfg.gamma_per_cqi[cqi_hypothesis]
    curve = cfg.curve_for_cqi(cqi_hypothesis)
    mean_cap = float(np.mean(curve.capacity(arr / gamma)))
    return gamma * float(curve.inv_capacity(mean_cap))


def select_cqi(sinr_grid: np.ndarray, ri: int, cfg: EsmConfig) -> tuple[int, int]:
    """Highest CQI per codeword whose threshold the effective SNR still meets.

    sinr_grid has shape (K, T, L).  Layers map to codewords by
    codeword_layer_split; with ri == 1 the second CQI mirrors the first.
    """
    cw0, cw1 = codeword_layer_split(ri)
    cqi1 = _max_supported_cqi(sinr_grid[:, :, list(cw0)], cfg)
    if not cw1:
        return cqi1, cqi1
    return cqi1, _max_supported_cqi(sinr_grid[:, :, list(cw1)], cfg)


def _max_supported_cqi(sinrs: np.ndarray, cfg: EsmConfig) -> int:
    for cqi in range(NUM_CQI - 1, 0, -1):
        snr_eff = effective_snr(sinrs, cqi, cfg)
        snr_eff_db = 10.0 * np.log10(max(snr_eff, 1e-300))
        if snr_eff_db >= cfg.cqi_snr_thresholds_db[cqi]:
            return cqi
    return 0


def default_esm_config(mcs_entries, gamma: float = 1.0, margin: float = 1.0) -> EsmConfig:
    """Thresholds from the capacity-meets-spectral-efficiency rule.

    `mcs_entries` is a sequence of (cqi, modulation_order, code_rate); the
    threshold for CQI c is the SNR where c's modulation curve reaches
    order * rate * margin.
    """
    curves = {m: load_bicm_curve(m) for m in _MOD_FILES}
    mods = [2] * NUM_CQI
    thresholds = [-np.inf] * NUM_CQI
    for cqi, order, rate in mcs_entries:
        if cqi == 0:
            continue
        mods[cqi] = order
        target = order * rate * margin
        thresholds[cqi] = float(curves[order].inv_capacity_db(target))
    return EsmConfig(
        gamma_per_cqi=tuple([gamma] * NUM_CQI),
        curves=curves,
        modulation_per_cqi=tuple(mods),
        cqi_snr_thresholds_db=tuple(thresholds),
    )


def esm_config_to_json(cfg: EsmConfig) -> str:
    doc = {
        "gamma_per_cqi": list(cfg.gamma_per_cqi),
        "modulation_per_cqi": list(cfg.modulation_per_cqi),
        "cqi_snr_thresholds_db": list(cfg.cqi_snr_thresholds_db),
        "curves": {
            str(m): {"snr_db": c.snr_db.tolist(), "bits": c.bits.tolist()}
            for m, c in cfg.curves.items()
        },
    }
    return json.dumps(doc)


def esm_config_from_json(text: str) -> EsmConfig:
    doc = json.loads(text)
    return EsmConfig(
        gamma_per_cqi=tuple(doc["gamma_per_cqi"]),
        curves={
            int(m): BicmCurve(snr_db=np.array(c["snr_db"]), bits=np.array(c["bits"]))
            for m, c in doc["curves"].items()
        },
        modulation_per_cqi=tuple(doc["modulation_per_cqi"]),
        cqi_snr_thresholds_db=tuple(
            -np.inf if t is None else t for t in doc["cqi_snr_thresholds_db"]
        ),
    )


def compute_csi_report(
    s: Scenario,
    bs_id: int,
    ue: Geolocation,
    rb_index: int,
    cb: Codebook,
    cfg: EsmConfig,
) -> CsiReport:
    """Ground-truth CSI label for one (BS, UE, RB): the full selection chain."""
    bs = s.bs_by_id(bs_id)
    if not 0 <= rb_index < bs.rb_count:
        raise ValueError(f"rb_index {rb_index} out of range")
    k0 = rb_index * s.subcarriers_per_rb
    ks = range(k0, k0 + s.subcarriers_per_rb)
    ts = range(s.symbols_per_slot)
    h = channel_grid(s, bs_id, ue, ks, ts)
    ri, pmi, sinr_grid = select_pmi_ri(h, cb, s.noise_power)
    cqi1, cqi2 = select_cqi(sinr_grid, ri, cfg)
    return CsiReport(ri=ri, cqi1=cqi1, cqi2=cqi2, pmi=pmi)


def compute_csi_reports_all_rbs(
    s: Scenario, bs_id: int, ue: Geolocation, cb: Codebook, cfg: EsmConfig
) -> list[CsiReport]:
    """Labels for every RB of one BS in a single batched channel evaluation."""
    bs = s.bs_by_id(bs_id)
    kk, tt = s.subcarriers_per_rb, s.symbols_per_slot
    h = channel_grid(s, bs_id, ue, range(kk * bs.rb_count), range(tt))
    grids = h.reshape(bs.rb_count, kk, tt, h.shape[-2], h.shape[-1])
    out = []
    for ri, pmi, sinr_grid in _search_grids(grids, cb, s.noise_power):
        cqi1, cqi2 = select_cqi(sinr_grid, ri, cfg)
        out.append(CsiReport(ri=ri, cqi1=cqi1, cqi2=cqi2, pmi=pmi))
    return out
