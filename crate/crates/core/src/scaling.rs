//! Wall-clock scaling of fixed-step training in the list length.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use crate::data::{gen_synthetic, SyntheticConfig};
use crate::losses::{LossConfig, LossKind};
use crate::model::{query_loss_and_grads, Adam, Mlp, MlpConfig, ModelError};
use crate::tensor::Tensor;
use crate::topk_dnc::{count_ops, make_plan};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub lengths: Vec<usize>,
    pub depths: Vec<usize>,
    /// Optimizer steps per cell.
    pub steps: usize,
    /// Queries per step.
    pub batch_size: usize,
    pub k: usize,
    pub tau: f64,
    pub doc_features: usize,
    pub query_features: usize,
    /// Hidden widths of the scorer; empty gives a linear scorer.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub seed: u64,
    /// Wall-clock cap per cell; a cell that hits it stops early and its
    /// full-run time is extrapolated from the steps it completed.
    pub max_seconds: Option<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            lengths: vec![125, 1000, 2197, 3375],
            depths: vec![1, 3],
            steps: 100,
            batch_size: 16,
            k: 1,
            tau: 1.0,
            doc_features: 10,
            query_features: 2,
            hidden: Vec::new(),
            lr: 1e-3,
            seed: 0,
            max_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Complete,
    /// Stopped by the time cap; `seconds` is extrapolated.
    Extrapolated,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCell {
    pub len: usize,
    pub depth: usize,
    pub steps: usize,
    pub steps_run: usize,
    /// Measured (or extrapolated) time for `steps` steps.
    pub seconds: Option<f64>,
    /// Forward-pass op count of the relaxed top-k for one query.
    pub predicted_ops: u64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub depth: usize,
    pub measured: Option<f64>,
    pub predicted: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub cells: Vec<ScalingCell>,
    pub slopes: Vec<SlopeFit>,
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// distinct `x` or any non-positive value.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (logs.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

fn run_cell(cfg: &ScalingConfig, len: usize, depth: usize) -> Result<(usize, f64), ModelError> {
    let data = gen_synthetic(&SyntheticConfig {
        queries: cfg.batch_size,
        list_size: len,
        doc_features: cfg.doc_features,
        query_features: cfg.query_features,
        seed: cfg.seed,
        ..SyntheticConfig::default()
    })
    .map_err(|e| ModelError::Config(e.to_string()))?;
    let mut model = Mlp::new(
        &MlpConfig {
            input: cfg.doc_features + cfg.query_features,
            hidden: cfg.hidden.clone(),
        },
        cfg.seed,
    )?;
    let loss = LossConfig {
        kind: LossKind::PirankNdcg,
        k: cfg.k,
        tau: cfg.tau,
        depth,
        ..LossConfig::default()
    };
    let mut opt = Adam::new(cfg.lr, &model.param_shapes());
    let start = Instant::now();
    let mut done = 0;
    while done < cfg.steps {
        let mut total: Option<Vec<Tensor>> = None;
        for group in &data {
            if let Some((_, grads)) = query_loss_and_grads(&model, group, &loss)? {
                match &mut total {
                    Some(t) => t.iter_mut().zip(&grads).for_each(|(a, b)| a.add_assign(b)),
                    None => total = Some(grads),
                }
            }
        }
        if let Some(grads) = total {
            opt.step(&mut model.params_mut(), &grads)?;
        }
        done += 1;
        if cfg.max_seconds.is_some_and(|cap| start.elapsed().as_secs_f64() >= cap) {
            break;
        }
    }
    Ok((done, start.elapsed().as_secs_f64()))
}

/// Times every `(depth, len)` cell; `on_cell` sees each result as it lands.
/// A failing cell (error or panic) is recorded and the run continues.
pub fn run_scaling(cfg: &ScalingConfig, mut on_cell: impl FnMut(&ScalingCell)) -> crate::Result<ScalingReport> {
    let mut cells = Vec::new();
    for &depth in &cfg.depths {
        for &len in &cfg.lengths {
            let predicted_ops = count_ops(&make_plan(len, cfg.k, depth, cfg.tau, None)?);
            let outcome = catch_unwind(AssertUnwindSafe(|| run_cell(cfg, len, depth)));
            let (steps_run, seconds, status) = match outcome {
                Ok(Ok((run, secs))) if run == cfg.steps => (run, Some(secs), CellStatus::Complete),
                Ok(Ok((run, secs))) => (
                    run,
                    Some(secs * cfg.steps as f64 / run as f64),
                    CellStatus::Extrapolated,
                ),
                Ok(Err(e)) => (0, None, CellStatus::Failed(e.to_string())),
                Err(p) => {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    (0, None, CellStatus::Failed(msg))
                }
            };
            let cell = ScalingCell {
                len,
                depth,
                steps: cfg.steps,
                steps_run,
                seconds,
                predicted_ops,
                status,
            };
            on_cell(&cell);
            cells.push(cell);
        }
    }
    let slopes = cfg
        .depths
        .iter()
        .map(|&depth| {
            let of_depth: Vec<&ScalingCell> = cells.iter().filter(|c| c.depth == depth).collect();
            let measured: Vec<(f64, f64)> = of_depth
                .iter()
                .filter_map(|c| c.seconds.map(|s| (c.len as f64, s)))
                .collect();
            let predicted: Vec<(f64, f64)> = of_depth
                .iter()
                .map(|c| (c.len as f64, c.predicted_ops as f64))
                .collect();
            SlopeFit {
                depth,
                measured: loglog_slope(&measured),
                predicted: loglog_slope(&predicted),
                points: measured.len(),
            }
        })
        .collect();
    Ok(ScalingReport { cells, slopes })
}

impl ScalingReport {
    /// `len,depth,steps,steps_run,seconds,predicted_ops,status`.
    pub fn write_cells_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "len,depth,steps,steps_run,seconds,predicted_ops,status")?;
        for c in &self.cells {
            let secs = c.seconds.map(|s| s.to_string()).unwrap_or_default();
            let status = match &c.status {
                CellStatus::Complete => "complete".to_string(),
                CellStatus::Extrapolated => "extrapolated".to_string(),
                CellStatus::Failed(m) => format!("failed: {}", m.replace([',', '\n'], " ")),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.len, c.depth, c.steps, c.steps_run, secs, c.predicted_ops, status
            )?;
        }
        Ok(())
    }

    /// `depth,measured_slope,predicted_slope,points`.
    pub fn write_slopes_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "depth,measured_slope,predicted_slope,points")?;
        let fmt = |v: Option<f64>| v.map(|s| s.to_string()).unwrap_or_default();
        for s in &self.slopes {
            writeln!(w, "{},{},{},{}", s.depth, fmt(s.measured), fmt(s.predicted), s.points)?;
        }
        Ok(())
    }
}
