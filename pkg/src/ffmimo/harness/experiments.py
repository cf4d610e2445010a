"""Experiment orchestration: dataset generation, static capacity runs,
mobility runs with feedback delay, and machine-readable reports.

All randomness derives from (config, seed); output CSV bodies are
byte-stable so repeated runs can be diffed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..allocator import (
    AllocProblem,
    Matching,
    best_cqi,
    brute_force_optimal,
    jain_index,
    m3_mama,
    round_robin,
    spectral_efficiency,
)
from ..codebook import Codebook, build_codebook
from ..csi_map.dataset import CsiDataset, CsiRecord
from ..csi_map.lqtn import LqtnConfig, LqtnModel, TrainConfig, labels_tensor, train_lqtn
from ..csi_map.predictors import (
    CsiPredictor,
    IndependentPerRbPredictor,
    KnnPredictor,
    LqtnPredictor,
    OraclePredictor,
    independent_rb_configs,
)
from ..link import (
    CsiReport,
    EsmConfig,
    _grid_metrics,
    codeword_layer_split,
    compute_csi_reports_all_rbs,
    default_esm_config,
    effective_snr,
)
from ..rate_model import FrameConfig, McsTable, codeword_rate_mbps, load_mcs_table, rate_matrix
from ..scenario import Geolocation, Scenario, advance, channel_grid, generate_scenario, sample_geolocations
from .config import ExperimentConfig, resolved_config_dict


def generate_dataset(
    s: Scenario,
    n_train: int,
    n_test: int,
    seed: int,
    cb: Codebook,
    esm: EsmConfig,
    bs_ids: list[int] | None = None,
) -> CsiDataset:
    """Sample geolocations and label every (BS, RB) with the ground truth.

    Train and test geolocations are disjoint by construction: one seeded
    draw of n_train + n_test distinct points, split in order.
    """
    if bs_ids is None:
        bs_ids = [bs.id for bs in s.bs_list]
    locs = sample_geolocations(s, n_train + n_test, seed)
    seen = {(g.x, g.y) for g in locs}
    assert len(seen) == len(locs), "degenerate sampler: duplicate geolocations"
    records = []
    for i, loc in enumerate(locs):
        split = "train" if i < n_train else "test"
        for bs_id in bs_ids:
            labels = tuple(compute_csi_reports_all_rbs(s, bs_id, loc, cb, esm))
            records.append(CsiRecord(bs_id=bs_id, ue_loc=loc, labels=labels, split=split))
    return CsiDataset(records=records)


def realized_throughput(
    channels: np.ndarray,
    report: CsiReport,
    cb: Codebook,
    esm: EsmConfig,
    mcs: McsTable,
    noise_power: float,
    fc: FrameConfig = FrameConfig(),
) -> float:
    """Credit-or-zero link abstraction for one RB.

    Transmission uses the precoder named by the report's PMI on the actual
    channel grid (K, T, N_R, N_T).  Each codeword is credited its full PHY
    rate when the recomputed effective SNR still meets the threshold of the
    CQI it was sent with, and zero otherwise (block error).  A rank
    deficient actual channel loses everything.
    """
    w = cb.precoders[report.pmi]
    flat = channels.reshape(-1, channels.shape[-2], channels.shape[-1])
    sinr, _, singular = _grid_metrics(flat, w.matrix[None], noise_power)
    if singular.any():
        return 0.0
    sinr = sinr[0]  # (G, L)
    total = 0.0
    for layers, cqi in zip(codeword_layer_split(w.rank), (report.cqi1, report.cqi2)):
        if not layers or cqi == 0:
            continue
        snr_eff = effective_snr(sinr[:, list(layers)], cqi, esm)
        snr_eff_db = 10.0 * np.log10(max(snr_eff, 1e-300))
        if snr_eff_db >= esm.cqi_snr_thresholds_db[cqi]:
            total += codeword_rate_mbps(cqi, len(layers), mcs, fc)
    return total


def build_predictor(
    cfg: ExperimentConfig,
    s: Scenario,
    cb: Codebook,
    esm: EsmConfig,
    dataset: CsiDataset | None = None,
) -> CsiPredictor:
    """Instantiate the configured predictor, training models if needed."""
    kind = cfg.predictor.kind
    if kind == "oracle":
        return OraclePredictor(s, cb, esm)
    if dataset is None:
        dataset = generate_dataset(
            s, cfg.dataset.n_train, cfg.dataset.n_test, cfg.dataset.seed, cb, esm
        )
    if kind == "knn":
        return KnnPredictor(dataset, k=cfg.predictor.k)
    bs_positions = {bs.id: bs.position for bs in s.bs_list}
    bounds = _norm_bounds(s)
    shared_cfg = LqtnConfig(
        embed_dim=cfg.predictor.embed_dim,
        num_heads=cfg.predictor.num_heads,
        rb_count=dataset.rb_count,
        max_rank=cb.config.max_rank,
        num_pmi=len(cb),
        ffn_dim=cfg.predictor.ffn_dim,
        norm_bounds=bounds,
    )
    hp = TrainConfig(
        lr=cfg.predictor.lr,
        batch_size=cfg.predictor.batch_size,
        epochs=cfg.predictor.epochs,
        seed=cfg.predictor.train_seed,
        optimizer=cfg.predictor.optimizer,
    )
    if kind == "lqtn":
        models = {}
        for bs_id in dataset.bs_ids:
            models[bs_id] = train_shared_model(dataset, bs_id, bs_positions[bs_id], shared_cfg, hp)
        return LqtnPredictor(models, bs_positions)
    # independent per-RB ablation
    rb_cfg = independent_rb_configs(shared_cfg)
    models_by_bs: dict[int, list[LqtnModel]] = {}
    for bs_id in dataset.bs_ids:
        models_by_bs[bs_id] = train_independent_models(
            dataset, bs_id, bs_positions[bs_id], rb_cfg, hp
        )
    return IndependentPerRbPredictor(models_by_bs, bs_positions)


def _norm_bounds(s: Scenario) -> tuple[tuple[float, float], ...]:
    z_hi = max([b.position[2] for b in s.bs_list] + [s.ue_height_m]) + 5.0
    return (
        (s.area.x_min, s.area.x_max),
        (s.area.y_min, s.area.y_max),
        (0.0, z_hi),
    )


def _training_arrays(dataset: CsiDataset, bs_id: int):
    recs = dataset.split_records("train", bs_id=bs_id)
    if not recs:
        raise ValueError(f"no training records for bs {bs_id}")
    ue = np.array([[r.ue_loc.x, r.ue_loc.y, r.ue_loc.z] for r in recs])
    labels = labels_tensor([r.labels for r in recs])
    return ue, labels


def train_shared_model(
    dataset: CsiDataset,
    bs_id: int,
    bs_position,
    model_cfg: LqtnConfig,
    hp: TrainConfig,
) -> LqtnModel:
    ue, labels = _training_arrays(dataset, bs_id)
    model = LqtnModel(model_cfg, seed=hp.seed)
    train_lqtn(model, np.asarray(bs_position, dtype=float), ue, labels, hp)
    return model


def train_independent_models(
    dataset: CsiDataset,
    bs_id: int,
    bs_position,
    rb_cfg: LqtnConfig,
    hp: TrainConfig,
) -> list[LqtnModel]:
    ue, labels = _training_arrays(dataset, bs_id)
    models = []
    for rb in range(labels.shape[1]):
        model = LqtnModel(rb_cfg, seed=hp.seed + rb)
        train_lqtn(model, np.asarray(bs_position, dtype=float), ue, labels[:, rb : rb + 1], hp)
        models.append(model)
    return models


# --- static capacity experiment ---


@dataclass
class RunRecord:
    seed: int
    algorithm: str
    ue_count: int
    q: int
    sum_rate: float
    spectral_efficiency: float
    jain: float
    per_user_throughputs: list[float]
    per_rb_rates: list[float]
    convergence_trace: list[float]
    sweeps: int = 0


RUN_CSV_COLUMNS = [
    "seed",
    "algorithm",
    "ue_count",
    "q",
    "sum_rate",
    "spectral_efficiency",
    "jain",
    "sweeps",
]


def _metrics(m: Matching, p: AllocProblem, bw_mhz: float) -> tuple[float, float, float, list, list]:
    sr = m.sum_rate(p)
    per_ue = m.per_ue_throughput(p).tolist()
    per_rb = p.rates[np.arange(p.num_rbs), m.owner].tolist()
    return sr, spectral_efficiency(sr, bw_mhz), jain_index(per_ue), per_ue, per_rb


def run_static_experiment(cfg: ExperimentConfig) -> dict:
    """Static capacity comparison: all three allocators on predicted rate matrices."""
    s = generate_scenario(cfg.scenario, cfg.scenario_seed)
    cb = build_codebook(cfg.codebook)
    esm = default_esm_config(load_mcs_table().as_tuples())
    predictor = build_predictor(cfg, s, cb, esm)
    bw_mhz = sum(bs.bandwidth_hz for bs in s.bs_list) / 1e6
    rows = [(bs.id, rb) for bs in s.bs_list for rb in range(bs.rb_count)]

    records: list[RunRecord] = []
    for ue_count in cfg.ue_counts:
        for q in cfg.q_levels:
            for i in range(cfg.num_seeds):
                run_seed = cfg.seed * 100_003 + i * 101 + ue_count * 7 + q
                ues = sample_geolocations(s, ue_count, seed=run_seed)
                rates = rate_matrix(predictor, s, ues)
                problem = AllocProblem(
                    rates=rates, quota=q, row_labels=tuple(rows), ue_ids=tuple(range(ue_count))
                )
                ex = m3_mama(problem)
                solutions = {
                    "m3_mama": (ex.matching, ex.trace, ex.sweeps),
                    "round_robin": (round_robin(problem), [], 0),
                    "best_cqi": (best_cqi(problem), [], 0),
                }
                if 0 < cfg.brute_force_limit >= ue_count**len(rows):
                    solutions["optimal"] = (
                        brute_force_optimal(problem, cfg.brute_force_limit),
                        [],
                        0,
                    )
                for name, (matching, trace, sweeps) in solutions.items():
                    sr, se, jn, per_ue, per_rb = _metrics(matching, problem, bw_mhz)
                    records.append(
                        RunRecord(
                            seed=run_seed,
                            algorithm=name,
                            ue_count=ue_count,
                            q=q,
                            sum_rate=sr,
                            spectral_efficiency=se,
                            jain=jn,
                            per_user_throughputs=per_ue,
                            per_rb_rates=per_rb,
                            convergence_trace=trace,
                            sweeps=sweeps,
                        )
                    )
    report = {
        "kind": "static",
        "config": resolved_config_dict(cfg),
        "version": __version__,
        "records": [vars(r) for r in records],
    }
    return report


# --- mobility experiment ---


def run_mobility_experiment(cfg: ExperimentConfig) -> dict:
    """Mobility comparison: stale-feedback CLSM vs geolocation-driven transmission.

    Per UE: the CLSM side selects CSI on the channel one feedback delay ago
    (the UE's position back then) and transmits on the current channel; the
    feedback-free side predicts from the current geolocation.
    """
    s = generate_scenario(cfg.scenario, cfg.scenario_seed)
    cb = build_codebook(cfg.codebook)
    esm = default_esm_config(load_mcs_table().as_tuples())
    mcs = load_mcs_table()
    predictor = build_predictor(cfg, s, cb, esm)
    oracle = OraclePredictor(s, cb, esm)
    kk, tt = s.subcarriers_per_rb, s.symbols_per_slot

    records = []
    for speed in cfg.speed_kmh:
        for i in range(cfg.num_seeds):
            run_seed = cfg.seed * 100_003 + i * 211 + int(round(speed * 13))
            ues = sample_geolocations(s, cfg.mobility_ue_count, seed=run_seed)
            rng = np.random.default_rng(run_seed + 1)
            headings = rng.uniform(0.0, 2 * np.pi, size=len(ues))
            clsm_tp, ff_tp = [], []
            for ue, heading in zip(ues, headings):
                p_meas = ue
                p_tx = advance(s, p_meas, speed, cfg.feedback_delay_s, heading)
                bs_id = _nearest_bs(s, p_tx)
                bs = s.bs_by_id(bs_id)
                stale_reports = oracle.predict(bs_id, p_meas)
                pred_reports = predictor.predict(bs_id, p_tx)
                h_all = channel_grid(s, bs_id, p_tx, range(kk * bs.rb_count), range(tt))
                grids = h_all.reshape(bs.rb_count, kk, tt, h_all.shape[-2], h_all.shape[-1])
                clsm_tp.append(
                    sum(
                        _rb_realized(grids[rb], stale_reports[rb], cb, esm, mcs, s.noise_power)
                        for rb in range(bs.rb_count)
                    )
                )
                ff_tp.append(
                    sum(
                        _rb_realized(grids[rb], pred_reports[rb], cb, esm, mcs, s.noise_power)
                        for rb in range(bs.rb_count)
                    )
                )
            records.append(
                {
                    "seed": run_seed,
                    "speed_kmh": speed,
                    "clsm_mean_throughput": float(np.mean(clsm_tp)),
                    "ff_mean_throughput": float(np.mean(ff_tp)),
                    "clsm_per_user": [float(x) for x in clsm_tp],
                    "ff_per_user": [float(x) for x in ff_tp],
                }
            )
    return {
        "kind": "mobility",
        "config": resolved_config_dict(cfg),
        "version": __version__,
        "records": records,
    }


def _nearest_bs(s: Scenario, ue: Geolocation) -> int:
    dists = [
        (np.hypot(bs.position[0] - ue.x, bs.position[1] - ue.y), bs.id) for bs in s.bs_list
    ]
    return min(dists)[1]


def _rb_realized(channels, report, cb, esm, mcs, noise_power) -> float:
    return realized_throughput(channels, report, cb, esm, mcs, noise_power)


# --- report writing ---


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_static_report(report: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    records_path = out / "records.json"
    records_path.write_text(json.dumps(report, indent=2))
    written.append(records_path)

    runs_path = out / "runs.csv"
    lines = [",".join(RUN_CSV_COLUMNS)]
    for r in report["records"]:
        lines.append(",".join(_fmt(r[c]) for c in RUN_CSV_COLUMNS))
    runs_path.write_text("\n".join(lines) + "\n")
    written.append(runs_path)

    written.extend(write_static_aggregates(report, out))

    manifest = {
        "kind": report["kind"],
        "version": report["version"],
        "config": report["config"],
        "csv_columns": {"runs.csv": RUN_CSV_COLUMNS},
        "files": [p.name for p in written],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    written.append(manifest_path)
    return written


def write_static_aggregates(report: dict, out: Path) -> list[Path]:
    """Aggregate CSVs (means and sample variances), regenerable from records."""
    out.mkdir(parents=True, exist_ok=True)
    cells: dict[tuple, list[dict]] = {}
    for r in report["records"]:
        cells.setdefault((r["algorithm"], r["ue_count"], r["q"]), []).append(r)
    lines = ["algorithm,ue_count,q,mean_sum_rate,var_sum_rate,mean_se,mean_jain,var_jain"]
    for key in sorted(cells):
        runs = cells[key]
        sr = np.array([r["sum_rate"] for r in runs])
        se = np.array([r["spectral_efficiency"] for r in runs])
        jn = np.array([r["jain"] for r in runs])
        var_sr = float(np.var(sr, ddof=1)) if len(sr) > 1 else 0.0
        var_jn = float(np.var(jn, ddof=1)) if len(jn) > 1 else 0.0
        lines.append(
            ",".join(
                [key[0], str(key[1]), str(key[2])]
                + [_fmt(float(v)) for v in (sr.mean(), var_sr, se.mean(), jn.mean(), var_jn)]
            )
        )
    agg = out / "aggregates.csv"
    agg.write_text("\n".join(lines) + "\n")

    cdf_lines = ["algorithm,ue_count,q,rate,cum_fraction"]
    for key in sorted(cells):
        pool = np.sort(np.concatenate([r["per_rb_rates"] for r in cells[key]]))
        for i, v in enumerate(pool):
            cdf_lines.append(
                f"{key[0]},{key[1]},{key[2]},{_fmt(float(v))},{_fmt((i + 1) / len(pool))}"
            )
    cdf = out / "fig_rb_cdf.csv"
    cdf.write_text("\n".join(cdf_lines) + "\n")

    conv_lines = ["ue_count,q,seed,iteration,sum_rate"]
    for r in report["records"]:
        if r["algorithm"] != "m3_mama":
            continue
        for it, v in enumerate(r["convergence_trace"]):
            conv_lines.append(f"{r['ue_count']},{r['q']},{r['seed']},{it},{_fmt(float(v))}")
    conv = out / "fig_convergence.csv"
    conv.write_text("\n".join(conv_lines) + "\n")
    return [agg, cdf, conv]


def write_mobility_report(report: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    records_path = out / "records.json"
    records_path.write_text(json.dumps(report, indent=2))
    written.append(records_path)

    cols = ["seed", "speed_kmh", "clsm_mean_throughput", "ff_mean_throughput"]
    lines = [",".join(cols)]
    for r in report["records"]:
        lines.append(",".join(_fmt(r[c]) for c in cols))
    runs = out / "mobility_runs.csv"
    runs.write_text("\n".join(lines) + "\n")
    written.append(runs)

    agg_lines = ["speed_kmh,clsm_mean,ff_mean"]
    by_speed: dict[float, list[dict]] = {}
    for r in report["records"]:
        by_speed.setdefault(r["speed_kmh"], []).append(r)
    for speed in sorted(by_speed):
        runs_r = by_speed[speed]
        agg_lines.append(
            ",".join(
                [
                    _fmt(float(speed)),
                    _fmt(float(np.mean([r["clsm_mean_throughput"] for r in runs_r]))),
                    _fmt(float(np.mean([r["ff_mean_throughput"] for r in runs_r]))),
                ]
            )
        )
    agg = out / "fig_mobility.csv"
    agg.write_text("\n".join(agg_lines) + "\n")
    written.append(agg)

    manifest = {
        "kind": report["kind"],
        "version": report["version"],
        "config": report["config"],
        "csv_columns": {"mobility_runs.csv": cols},
        "files": [p.name for p in written],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    written.append(manifest_path)
    return written
