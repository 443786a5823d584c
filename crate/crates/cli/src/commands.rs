use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use posetl::arch::{build_tcnn, build_tcnn_imu, init_params, NetworkGraph};
use posetl::dataio::{
    build_windows_pipeline, BranchLayout, DatasetManifest, Limb, LimbMap, NormStats, Window, WindowShard, WindowSpec,
    WindowedDataset,
};
use posetl::metrics::{majority_vote, permutation_test, MetricsReport, PermTestResult};
use posetl::nn::{gradient_check, predict, select_learning_rate, GradCheckReport, LrSelection, SeededRng, Tensor};
use posetl::toy::{ToyDomain, TOY_CLASSES};
use posetl::transfer::{
    load_checkpoint, run_transfer_matrix, save_checkpoint, write_results_csv, CheckpointMeta, TargetData,
};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::{ArchKind, ExperimentConfig};
use crate::CliError;

pub const DATASET_INFO: &str = "dataset.json";
pub const NORM_STATS: &str = "norm_stats.json";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY: &str = "history.jsonl";
pub const METRICS: &str = "metrics.json";
pub const TRANSFER_CSV: &str = "transfer_results.csv";
pub const TRANSFER_SUMMARY: &str = "transfer_summary.json";
pub const EVAL_METRICS: &str = "eval_metrics.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PERMTEST: &str = "permtest.json";
pub const GRADCHECK: &str = "gradcheck.json";

pub fn shard_name(split: &str) -> String {
    format!("windows_{split}.bin")
}

/// Everything about a synthesized dataset except the windows themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub classes: Vec<String>,
    pub channel_names: Vec<String>,
    pub rate_hz: f64,
    pub spec: WindowSpec,
    pub limb_map: Option<LimbMap>,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write(path, text)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

/// Windows from the `synth` output directory when configured, else from the
/// manifest through the full pipeline.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<WindowedDataset, CliError> {
    if let Some(dir) = &cfg.dataset {
        let text = fs::read_to_string(dir.join(DATASET_INFO))
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.join(DATASET_INFO).display())))?;
        let info: DatasetInfo =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{DATASET_INFO}: {e}")))?;
        let shard = |split: &str| WindowShard::load(&dir.join(shard_name(split))).map(|s| s.windows);
        return Ok(WindowedDataset {
            classes: info.classes,
            channel_names: info.channel_names,
            rate_hz: info.rate_hz,
            spec: info.spec,
            train: shard("train")?,
            val: shard("val")?,
            test: shard("test")?,
            stats: NormStats::load(&dir.join(NORM_STATS))?,
            limb_map: info.limb_map,
        });
    }
    let path = cfg.manifest.as_ref().ok_or_else(|| CliError::Config("set either `dataset` or `manifest`".into()))?;
    let manifest = DatasetManifest::load(path)?;
    Ok(build_windows_pipeline(&manifest, &cfg.pipeline)?)
}

pub fn build_graph(cfg: &ExperimentConfig, ds: &WindowedDataset) -> Result<NetworkGraph, CliError> {
    let a = &cfg.arch;
    let (w, d, k) = (ds.spec.window_len, ds.channel_names.len(), ds.classes.len());
    Ok(match a.kind {
        ArchKind::Tcnn => build_tcnn(w, d, k, a.fc_units, a.dropout)?,
        ArchKind::TcnnImu => {
            let layout = ds
                .branch_layout()
                .ok_or_else(|| CliError::Config("tcnn-imu needs a limb map in the manifest".into()))??;
            build_tcnn_imu(&layout, w, k, a.branch_units, a.fusion_units, a.dropout)?
        }
    })
}

fn lr_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.lrs.is_empty() {
        vec![cfg.train.lr]
    } else {
        cfg.lrs.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ToyKind {
    /// Joint positions at 30 Hz.
    Source,
    /// Noisy accelerations at 50 Hz.
    Target,
}

pub fn cmd_toy(cfg: &ExperimentConfig, kind: ToyKind, clips_per_class: Option<usize>) -> Result<String, CliError> {
    let mut domain = match kind {
        ToyKind::Source => ToyDomain::source(),
        ToyKind::Target => ToyDomain::target(),
    };
    domain.clips_per_class = clips_per_class.unwrap_or(domain.clips_per_class);
    let path = domain.write_dataset(out_dir(cfg)?)?;
    Ok(format!("{} clips, manifest {}\n", domain.clips_per_class * TOY_CLASSES.len(), path.display()))
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let ds = load_dataset(cfg)?;
    let out = out_dir(cfg)?;
    for (split, windows) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        let shard = WindowShard::new(
            windows.clone(),
            ds.spec.window_len,
            ds.channel_names.clone(),
            ds.classes.clone(),
            ds.rate_hz,
            Some(NORM_STATS.into()),
        )?;
        write(&out.join(shard_name(split)), shard.to_bytes())?;
    }
    ds.stats.save(&out.join(NORM_STATS))?;
    let info = DatasetInfo {
        classes: ds.classes.clone(),
        channel_names: ds.channel_names.clone(),
        rate_hz: ds.rate_hz,
        spec: ds.spec,
        limb_map: ds.limb_map.clone(),
    };
    write_json(&out.join(DATASET_INFO), &info)?;
    Ok(format!(
        "windows: train {}, val {}, test {} ([{}, {}] at {} Hz)\n",
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.spec.window_len,
        ds.channel_names.len(),
        ds.rate_hz
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub lr: f64,
    pub lr_scores: Vec<(f64, Option<f64>)>,
    pub best_epoch: Option<usize>,
    pub val: MetricsReport,
    pub test: MetricsReport,
}

fn report(graph: &NetworkGraph, params: &posetl::ParamSet<f32>, windows: &[Window]) -> Result<MetricsReport, CliError> {
    let pred = predict(graph, params, windows)?;
    let truth: Vec<usize> = windows.iter().map(|w| w.label).collect();
    Ok(MetricsReport::compute(&truth, &pred.classes, graph.num_classes)?)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let ds = load_dataset(cfg)?;
    let graph = build_graph(cfg, &ds)?;
    let init = init_params(&graph, &mut SeededRng::seed_from_u64(cfg.train.seed))?;
    let (LrSelection { lr, scores }, outcome) =
        select_learning_rate(&graph, &init, &ds.train, &ds.val, &cfg.train, &lr_grid(cfg), &BTreeSet::new())?;
    let out = out_dir(cfg)?;
    let meta = CheckpointMeta {
        source: cfg.source_tag.clone(),
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        lr,
        stats: Some(NORM_STATS.into()),
    };
    save_checkpoint(&graph, &outcome.params, &meta, &out.join(CHECKPOINT))?;
    ds.stats.save(&out.join(NORM_STATS))?;
    let history: String =
        outcome.history.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect();
    write(&out.join(HISTORY), history)?;
    let metrics = TrainMetrics {
        lr,
        lr_scores: scores,
        best_epoch: outcome.best_epoch,
        val: report(&graph, &outcome.params, &ds.val)?,
        test: report(&graph, &outcome.params, &ds.test)?,
    };
    write_json(&out.join(METRICS), &metrics)?;
    Ok(format!("lr {lr:e}, best epoch {:?}\n{}", outcome.best_epoch, metrics.test.table(&ds.classes)))
}

pub fn cmd_transfer(cfg: &ExperimentConfig, source: Option<&Path>) -> Result<String, CliError> {
    let path: PathBuf = source
        .map(Path::to_path_buf)
        .or_else(|| cfg.source_checkpoint.clone())
        .ok_or_else(|| CliError::Config("no source checkpoint: pass --source or set `source_checkpoint`".into()))?;
    let ckpt = load_checkpoint(&path)?;
    let ds = load_dataset(cfg)?;
    if cfg.arch.kind != ArchKind::Tcnn {
        return Err(CliError::Config("the transfer target must be a tcnn".into()));
    }
    let graph = build_graph(cfg, &ds)?;
    let mut mcfg = cfg.transfer.clone();
    if mcfg.lrs.is_empty() {
        mcfg.lrs = lr_grid(cfg);
    }
    let data = TargetData { train: &ds.train, val: &ds.val, test: &ds.test };
    let matrix = run_transfer_matrix(&ckpt, &graph, data, &cfg.train, &mcfg)?;
    let out = out_dir(cfg)?;
    let mut csv = Vec::new();
    write_results_csv(&matrix.records, &mut csv)?;
    write(&out.join(TRANSFER_CSV), csv)?;
    write_json(&out.join(TRANSFER_SUMMARY), &matrix.summary)?;

    let mut table = format!("{:<18} {:>6} {:>6}  {:>16}  {:>8}\n", "cell", "N_conv", "pct", "wF1[%] (μ±σ)", "p");
    for c in &matrix.summary.cells {
        let p = c.p_vs_scratch.map_or("-".to_string(), |p| format!("{p:.4}"));
        table.push_str(&format!(
            "{:<18} {:>6} {:>6}  {:>7.2} ± {:<6.2}  {:>8}\n",
            c.cell_id,
            c.n_conv,
            c.pct,
            100.0 * c.wf1_mean,
            100.0 * c.wf1_std,
            p
        ));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: usize,
    pub clip_id: String,
    pub label: usize,
    pub pred: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// `window` or `clip`.
    pub granularity: String,
    pub count: usize,
    pub report: MetricsReport,
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    majority: bool,
    split: SplitName,
) -> Result<String, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let ds = load_dataset(cfg)?;
    let windows = match split {
        SplitName::Train => &ds.train,
        SplitName::Val => &ds.val,
        SplitName::Test => &ds.test,
    };
    let pred = predict(&ckpt.graph, &ckpt.params, windows)?;
    let rows: Vec<PredictionRow> = windows
        .iter()
        .zip(&pred.classes)
        .enumerate()
        .map(|(index, (w, &p))| PredictionRow { index, clip_id: w.clip_id.clone(), label: w.label, pred: p })
        .collect();
    let (truth, guess): (Vec<usize>, Vec<usize>) = if majority {
        let ids: Vec<&str> = rows.iter().map(|r| r.clip_id.as_str()).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.label).collect();
        let truth = majority_vote(&ids, &labels)?;
        let guess = majority_vote(&ids, &pred.classes)?;
        truth.iter().map(|(id, &t)| (t, guess[id])).unzip()
    } else {
        rows.iter().map(|r| (r.label, r.pred)).unzip()
    };
    let report = MetricsReport::compute(&truth, &guess, ckpt.graph.num_classes)?;
    let out = out_dir(cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    write(&out.join(PREDICTIONS), w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
    let granularity = if majority { "clip" } else { "window" };
    let table = report.table(&ds.classes);
    write_json(&out.join(EVAL_METRICS), &EvalMetrics { granularity: granularity.into(), count: truth.len(), report })?;
    Ok(format!("{} {granularity}s\n{table}", truth.len()))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<PredictionRow>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_permtest(cfg: &ExperimentConfig, a: &Path, b: &Path, n_perm: usize) -> Result<String, CliError> {
    let (ra, rb) = (read_predictions(a)?, read_predictions(b)?);
    if ra.len() != rb.len() {
        return Err(CliError::Data(format!("{} predictions in A, {} in B", ra.len(), rb.len())));
    }
    if let Some((x, _)) = ra.iter().zip(&rb).find(|(x, y)| x.label != y.label || x.clip_id != y.clip_id) {
        return Err(CliError::Data(format!("prediction files disagree on window {}", x.index)));
    }
    let ca: Vec<bool> = ra.iter().map(|r| r.label == r.pred).collect();
    let cb: Vec<bool> = rb.iter().map(|r| r.label == r.pred).collect();
    let result: PermTestResult = permutation_test(&ca, &cb, n_perm, cfg.train.seed)?;
    write_json(&out_dir(cfg)?.join(PERMTEST), &result)?;
    Ok(format!(
        "observed accuracy difference {:+.4}, p = {:.4} ({} permutations)\n",
        result.observed_diff, result.p_value, result.n_permutations
    ))
}

/// Graph described by the gradcheck settings; `tcnn-imu` splits the
/// channels evenly across the first `branches` limbs.
pub fn gradcheck_graph(cfg: &ExperimentConfig) -> Result<NetworkGraph, CliError> {
    let g = &cfg.gradcheck;
    let a = &cfg.arch;
    Ok(match a.kind {
        ArchKind::Tcnn => build_tcnn(g.window_len, g.channels, g.classes, a.fc_units, a.dropout)?,
        ArchKind::TcnnImu => {
            if g.branches == 0 || g.branches > Limb::ALL.len() || !g.channels.is_multiple_of(g.branches) {
                return Err(CliError::Config(format!(
                    "{} channels cannot be split over {} branches",
                    g.channels, g.branches
                )));
            }
            let per = g.channels / g.branches;
            let layout: BranchLayout = Limb::ALL
                .iter()
                .take(g.branches)
                .enumerate()
                .map(|(i, &l)| (l, (i * per..(i + 1) * per).collect()))
                .collect();
            build_tcnn_imu(&layout, g.window_len, g.classes, a.branch_units, a.fusion_units, a.dropout)?
        }
    })
}

pub fn run_gradcheck(cfg: &ExperimentConfig) -> Result<GradCheckReport, CliError> {
    let g = &cfg.gradcheck;
    if g.batch == 0 || g.batch > 4 {
        return Err(CliError::Config(format!("gradcheck batch must be 1..=4, got {}", g.batch)));
    }
    let graph = gradcheck_graph(cfg)?;
    let mut rng = SeededRng::seed_from_u64(g.check.seed);
    let params = init_params(&graph, &mut rng)?;
    let n = g.batch * g.window_len * g.channels;
    let x = Tensor::from_vec(
        &[g.batch, g.window_len, g.channels],
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )?;
    let labels: Vec<usize> = (0..g.batch).map(|i| i % g.classes).collect();
    Ok(gradient_check(&graph, &params, &x, &labels, &g.check)?)
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let report = run_gradcheck(cfg)?;
    write_json(&out_dir(cfg)?.join(GRADCHECK), &report)?;
    let mut text = String::new();
    for t in &report.tensors {
        text.push_str(&format!(
            "{:<24} {:>4} checked {:>3} skipped  max rel err {:.3e}\n",
            t.key, t.checked, t.skipped, t.max_rel_error
        ));
    }
    let worst = report.worst_key.as_deref().unwrap_or("-");
    text.push_str(&format!("worst: {worst} at {:.3e} (tolerance {:.0e})\n", report.max_rel_error, report.tolerance));
    if report.passed {
        Ok(text)
    } else {
        print!("{text}");
        Err(CliError::Numerical(format!("gradient check failed: {worst} exceeds {:.0e}", report.tolerance)))
    }
}
