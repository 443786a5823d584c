use std::io::Write;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{fine_tune, transplant, Checkpoint, TargetData, TransferError, TransferPlan};
use crate::arch::{NetworkGraph, CONV_LAYERS};
use crate::dataio::{subsample_fraction, Limb};
use crate::metrics::{aggregate_runs, permutation_test, DEFAULT_PERMUTATIONS};
use crate::nn::{SeededRng, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub n_conv_sweep: Vec<usize>,
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub freeze: bool,
    pub source_branch: Limb,
    /// Candidate learning rates; empty means the training config's lr.
    pub lrs: Vec<f64>,
    pub n_perm: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            n_conv_sweep: (1..=CONV_LAYERS).collect(),
            fractions: vec![10.0, 30.0, 50.0, 75.0],
            runs: 5,
            seed: 42,
            freeze: false,
            source_branch: Limb::N,
            lrs: Vec::new(),
            n_perm: DEFAULT_PERMUTATIONS,
        }
    }
}

/// One training run of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell_id: String,
    pub n_conv: usize,
    pub pct: f64,
    pub run: usize,
    pub wf1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_id: String,
    pub n_conv: usize,
    pub pct: f64,
    pub wf1_mean: f64,
    pub wf1_std: f64,
    pub accuracy_mean: f64,
    pub val_wf1_mean: f64,
    pub wf1_runs: Vec<f64>,
    /// Paired test against the scratch row over all runs' test windows.
    pub diff_vs_scratch: Option<f64>,
    pub p_vs_scratch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub best_n_conv: usize,
    pub runs: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub records: Vec<RunRecord>,
    pub summary: TransferSummary,
}

struct Cell {
    summary: CellSummary,
    correct: Vec<bool>,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    source: &Checkpoint,
    graph: &NetworkGraph,
    data: TargetData<'_>,
    cfg: &TrainConfig,
    mcfg: &MatrixConfig,
    n_conv: usize,
    pct: f64,
    records: &mut Vec<RunRecord>,
) -> Result<Cell, TransferError> {
    let cell_id = if n_conv == 0 { format!("scratch_pct{pct}") } else { format!("nconv{n_conv}_pct{pct}") };
    let mut wf1 = Vec::with_capacity(mcfg.runs);
    let mut acc = Vec::with_capacity(mcfg.runs);
    let mut val = Vec::with_capacity(mcfg.runs);
    let mut correct = Vec::new();
    for run in 0..mcfg.runs {
        let seed = mcfg.seed + run as u64;
        let plan =
            TransferPlan { n_conv, freeze: mcfg.freeze, target_fraction: pct, seed, source_branch: mcfg.source_branch };
        let train = subsample_fraction(data.train, pct, seed)?;
        let start = transplant(source, graph, &plan, &mut SeededRng::seed_from_u64(seed))?;
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let report = fine_tune(graph, start, TargetData { train: &train, ..data }, &plan, &run_cfg, &mcfg.lrs)?;
        records.push(RunRecord {
            cell_id: cell_id.clone(),
            n_conv,
            pct,
            run,
            wf1: report.test.wf1,
            accuracy: report.test.accuracy,
        });
        wf1.push(report.test.wf1);
        acc.push(report.test.accuracy);
        val.push(report.val.wf1);
        correct.extend(report.test_correct);
    }
    let (wf1_mean, wf1_std) = aggregate_runs(&wf1)?;
    let summary = CellSummary {
        cell_id,
        n_conv,
        pct,
        wf1_mean,
        wf1_std,
        accuracy_mean: aggregate_runs(&acc)?.0,
        val_wf1_mean: aggregate_runs(&val)?.0,
        wf1_runs: wf1,
        diff_vs_scratch: None,
        p_vs_scratch: None,
    };
    Ok(Cell { summary, correct })
}

/// Runs the transfer grid: each `n_conv` at 100 % of the target training
/// set, then the best `n_conv` (by mean validation wF1) at each reduced
/// fraction, then the scratch baseline at 100 %. Run `r` of every cell uses
/// seed `mcfg.seed + r` for initialization, subsampling and training.
pub fn run_transfer_matrix(
    source: &Checkpoint,
    graph: &NetworkGraph,
    data: TargetData<'_>,
    cfg: &TrainConfig,
    mcfg: &MatrixConfig,
) -> Result<TransferMatrix, TransferError> {
    if mcfg.runs == 0 {
        return Err(TransferError::Plan("runs must be at least 1".into()));
    }
    if mcfg.n_conv_sweep.is_empty() {
        return Err(TransferError::Plan("n_conv sweep is empty".into()));
    }
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for &n in &mcfg.n_conv_sweep {
        cells.push(run_cell(source, graph, data, cfg, mcfg, n, 100.0, &mut records)?);
    }
    let best_n_conv = cells
        .iter()
        .fold(None::<&Cell>, |best, c| match best {
            Some(b) if b.summary.val_wf1_mean >= c.summary.val_wf1_mean => Some(b),
            _ => Some(c),
        })
        .map(|c| c.summary.n_conv)
        .expect("non-empty sweep");
    for &pct in &mcfg.fractions {
        cells.push(run_cell(source, graph, data, cfg, mcfg, best_n_conv, pct, &mut records)?);
    }
    let scratch = run_cell(source, graph, data, cfg, mcfg, 0, 100.0, &mut records)?;
    for cell in &mut cells {
        let test = permutation_test(&cell.correct, &scratch.correct, mcfg.n_perm, mcfg.seed)?;
        cell.summary.diff_vs_scratch = Some(test.observed_diff);
        cell.summary.p_vs_scratch = Some(test.p_value);
    }
    cells.push(scratch);
    let summary = TransferSummary {
        best_n_conv,
        runs: mcfg.runs,
        seed: mcfg.seed,
        cells: cells.into_iter().map(|c| c.summary).collect(),
    };
    Ok(TransferMatrix { records, summary })
}

/// Per-run rows as CSV: cell_id, n_conv, pct, run, wf1, accuracy.
pub fn write_results_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<(), TransferError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_nine_cells() {
        let m = MatrixConfig::default();
        assert_eq!(m.n_conv_sweep.len() + m.fractions.len() + 1, 9);
    }

    #[test]
    fn csv_columns() {
        let r = RunRecord { cell_id: "nconv1_pct100".into(), n_conv: 1, pct: 100.0, run: 0, wf1: 0.5, accuracy: 0.25 };
        let mut out = Vec::new();
        write_results_csv(&[r], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "cell_id,n_conv,pct,run,wf1,accuracy\nnconv1_pct100,1,100.0,0,0.5,0.25\n");
    }
}
