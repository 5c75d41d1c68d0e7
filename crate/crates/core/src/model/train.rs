use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Adam, Mlp, ModelError};
use crate::autodiff::Graph;
use crate::data::QueryGroup;
use crate::losses::{build_loss, pirank_ndcg_loss, LossConfig};
use crate::metrics::{mean_defined, query_metrics, MetricTable};
use crate::tensor::Tensor;

/// Lowest temperature a decaying schedule reaches (unless it starts lower).
pub const TAU_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TempSchedule {
    Constant,
    /// `τ·ρ^epoch`, floored at [`TAU_FLOOR`].
    Exponential {
        decay: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    /// Queries per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub schedule: TempSchedule,
    /// Epochs without validation improvement before stopping; `None` never stops.
    pub patience: Option<usize>,
    /// Cutoff of the validation NDCG used for early stopping.
    pub early_stop_k: usize,
    pub eval_cutoffs: Vec<usize>,
    pub seed: u64,
    /// Worker threads for per-query graphs; 1 runs inline.
    pub threads: usize,
    /// Gradient norm above which a warning is recorded.
    pub grad_norm_warn: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            batch_size: 16,
            lr: 1e-3,
            epochs: 50,
            schedule: TempSchedule::Constant,
            patience: Some(10),
            early_stop_k: 10,
            eval_cutoffs: vec![1, 5, 10],
            seed: 0,
            threads: 1,
            grad_norm_warn: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be finite and ≥ 0, got {}", self.lr));
        }
        if !(self.loss.tau > 0.0 && self.loss.tau.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.loss.tau));
        }
        if self.loss.k == 0 || self.early_stop_k == 0 || self.eval_cutoffs.contains(&0) {
            return bad("cutoffs must be at least 1".into());
        }
        if let TempSchedule::Exponential { decay } = self.schedule {
            if !(decay > 0.0 && decay <= 1.0) {
                return bad(format!("decay must be in (0, 1], got {decay}"));
            }
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Temperature used while training epoch `epoch` (epoch 0 is the
    /// untrained evaluation and reports the initial value).
    pub fn tau_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            TempSchedule::Constant => self.loss.tau,
            TempSchedule::Exponential { decay } => {
                let floor = TAU_FLOOR.min(self.loss.tau);
                (self.loss.tau * decay.powi(epoch as i32)).max(floor)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Mean training loss over non-skipped queries (`NaN` if all skipped).
    pub loss: f64,
    pub tau: f64,
    /// Mean validation NDCG at each evaluation cutoff.
    pub ndcg: Vec<f64>,
    /// Mean validation relaxed NDCG@k at this epoch's temperature.
    pub relaxed_ndcg: f64,
    /// Training queries skipped by the loss this epoch.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    pub eval_cutoffs: Vec<usize>,
    pub loss_k: usize,
}

impl TrainReport {
    /// `epoch,step,loss,tau,ndcg@<k>...,relaxed_ndcg@<k>`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "epoch,step,loss,tau")?;
        for k in &self.eval_cutoffs {
            write!(w, ",ndcg@{k}")?;
        }
        writeln!(w, ",relaxed_ndcg@{}", self.loss_k)?;
        for r in &self.records {
            write!(w, "{},{},{},{}", r.epoch, r.step, r.loss, r.tau)?;
            for v in &r.ndcg {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", r.relaxed_ndcg)?;
        }
        Ok(())
    }
}

/// Scores of the real items of a group.
pub fn predict_group(model: &Mlp, group: &QueryGroup) -> Result<Vec<f64>, ModelError> {
    let scores = model.predict(&group.feature_matrix())?;
    Ok(scores
        .into_iter()
        .zip(&group.mask)
        .filter(|(_, &m)| m)
        .map(|(s, _)| s)
        .collect())
}

/// Per-query metrics of the model's hard ranking.
pub fn evaluate(model: &Mlp, groups: &[QueryGroup], cutoffs: &[usize]) -> Result<MetricTable, ModelError> {
    let mut rows = Vec::with_capacity(groups.len());
    for g in groups {
        let scores = predict_group(model, g)?;
        rows.push(query_metrics(&g.valid_labels(), &scores, cutoffs)?);
    }
    Ok(MetricTable::from_queries(
        groups.iter().map(|g| g.qid.clone()).collect(),
        cutoffs,
        &rows,
    ))
}

/// Loss value without gradients; `None` for a skipped query.
pub fn query_loss(model: &Mlp, group: &QueryGroup, cfg: &LossConfig) -> Result<Option<f64>, ModelError> {
    let mut g = Graph::new();
    let params = model.bind_constant(&mut g);
    let x = g.constant(group.feature_matrix());
    let s = model.score(&mut g, &params, x)?;
    Ok(build_loss(&mut g, &group.labels, group.loss_mask(), s, cfg)?.map(|l| g.value(l).item()))
}

/// Loss value and parameter gradients; `None` for a skipped query.
pub fn query_loss_and_grads(
    model: &Mlp,
    group: &QueryGroup,
    cfg: &LossConfig,
) -> Result<Option<(f64, Vec<Tensor>)>, ModelError> {
    let mut g = Graph::new();
    let params = model.bind(&mut g);
    let x = g.constant(group.feature_matrix());
    let s = model.score(&mut g, &params, x)?;
    let Some(loss) = build_loss(&mut g, &group.labels, group.loss_mask(), s, cfg)? else {
        return Ok(None);
    };
    let grads = g.backward(loss)?;
    Ok(Some((
        g.value(loss).item(),
        params.iter().map(|&p| grads.wrt(p)).collect(),
    )))
}

fn relaxed_ndcg(model: &Mlp, groups: &[QueryGroup], cfg: &LossConfig) -> Result<f64, ModelError> {
    let cfg = LossConfig {
        straight_through: false,
        ..cfg.clone()
    };
    let mut values = Vec::with_capacity(groups.len());
    for group in groups {
        let mut g = Graph::new();
        let params = model.bind_constant(&mut g);
        let x = g.constant(group.feature_matrix());
        let s = model.score(&mut g, &params, x)?;
        values.push(
            pirank_ndcg_loss(&mut g, &group.labels, group.loss_mask(), s, &cfg)?.map(|l| 1.0 - g.value(l).item()),
        );
    }
    Ok(mean_defined(values).0.unwrap_or(f64::NAN))
}

struct Validation {
    ndcg: Vec<f64>,
    stop_metric: f64,
    relaxed: f64,
}

fn validate_model(model: &Mlp, groups: &[QueryGroup], cfg: &TrainConfig, tau: f64) -> Result<Validation, ModelError> {
    let mut cutoffs = cfg.eval_cutoffs.clone();
    cutoffs.push(cfg.early_stop_k);
    let table = evaluate(model, groups, &cutoffs)?;
    let mean = |k: usize| {
        let col = table.column(&format!("ndcg@{k}")).expect("ndcg column");
        mean_defined(table.column_values(col)).0.unwrap_or(f64::NAN)
    };
    let loss_cfg = LossConfig {
        tau,
        ..cfg.loss.clone()
    };
    Ok(Validation {
        ndcg: cfg.eval_cutoffs.iter().map(|&k| mean(k)).collect(),
        stop_metric: mean(cfg.early_stop_k),
        relaxed: relaxed_ndcg(model, groups, &loss_cfg)?,
    })
}

type QueryResult = Result<Option<(f64, Vec<Tensor>)>, ModelError>;

fn batch_results(
    model: &Mlp,
    batch: &[&QueryGroup],
    cfg: &LossConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<QueryResult> {
    match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(|g| query_loss_and_grads(model, g, cfg)).collect()),
        None => batch.iter().map(|g| query_loss_and_grads(model, g, cfg)).collect(),
    }
}

/// Trains `model` in place and returns the per-epoch log.
///
/// Epoch 0 records the untrained model. Each later epoch shuffles the
/// training queries with the seeded stream, takes one Adam step per batch on
/// the mean loss of its non-skipped queries, and evaluates on `valid` (or on
/// `train` when `valid` is empty). Per-query gradients are summed in batch
/// order, so results do not depend on the thread count. With early stopping
/// the parameters of the best validation epoch are restored.
pub fn train(
    model: &mut Mlp,
    train: &[QueryGroup],
    valid: &[QueryGroup],
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyData);
    }
    for g in train.iter().chain(valid) {
        if g.num_features != model.input_width() {
            return Err(ModelError::Width {
                expected: model.input_width(),
                got: g.num_features,
            });
        }
    }
    let mut warnings = Vec::new();
    let valid = if valid.is_empty() {
        warnings.push("no validation queries; validating on the training split".to_string());
        train
    } else {
        valid
    };
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| ModelError::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr, &model.param_shapes());
    let mut records = Vec::new();

    let tau0 = cfg.tau_at(0);
    let init_cfg = LossConfig {
        tau: tau0,
        ..cfg.loss.clone()
    };
    let mut init_losses = Vec::new();
    for g in train {
        init_losses.push(query_loss(model, g, &init_cfg)?);
    }
    let skipped = init_losses.iter().filter(|l| l.is_none()).count();
    let v = validate_model(model, valid, cfg, tau0)?;
    records.push(EpochRecord {
        epoch: 0,
        step: 0,
        loss: mean_defined(init_losses).0.unwrap_or(f64::NAN),
        tau: tau0,
        ndcg: v.ndcg,
        relaxed_ndcg: v.relaxed,
        skipped,
    });
    let mut best = (v.stop_metric, 0usize, model.clone());
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let tau = cfg.tau_at(epoch);
        let loss_cfg = LossConfig {
            tau,
            ..cfg.loss.clone()
        };
        order.shuffle(&mut rng);
        let (mut loss_sum, mut counted, mut skipped) = (0.0, 0usize, 0usize);
        let mut warned = false;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&QueryGroup> = chunk.iter().map(|&i| &train[i]).collect();
            let mut total: Option<Vec<Tensor>> = None;
            let mut n = 0usize;
            for r in batch_results(model, &batch, &loss_cfg, pool.as_ref()) {
                let Some((loss, grads)) = r? else {
                    skipped += 1;
                    continue;
                };
                if !loss.is_finite() {
                    return Err(ModelError::NonFinite {
                        what: "loss",
                        epoch,
                        step: opt.steps(),
                        tau,
                    });
                }
                loss_sum += loss;
                counted += 1;
                n += 1;
                match &mut total {
                    Some(t) => t.iter_mut().zip(&grads).for_each(|(a, b)| a.add_assign(b)),
                    None => total = Some(grads),
                }
            }
            let Some(mut grads) = total else { continue };
            let scale = 1.0 / n as f64;
            let mut norm2 = 0.0;
            for gr in &mut grads {
                for v in gr.data_mut() {
                    *v *= scale;
                    norm2 += *v * *v;
                }
            }
            if !norm2.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "gradient",
                    epoch,
                    step: opt.steps(),
                    tau,
                });
            }
            if norm2.sqrt() > cfg.grad_norm_warn && !warned {
                warned = true;
                warnings.push(format!(
                    "epoch {epoch}: gradient norm {:.3e} exceeds {:.1e} at tau = {tau}",
                    norm2.sqrt(),
                    cfg.grad_norm_warn
                ));
            }
            opt.step(&mut model.params_mut(), &grads)?;
        }
        let v = validate_model(model, valid, cfg, tau)?;
        records.push(EpochRecord {
            epoch,
            step: opt.steps(),
            loss: if counted > 0 {
                loss_sum / counted as f64
            } else {
                f64::NAN
            },
            tau,
            ndcg: v.ndcg,
            relaxed_ndcg: v.relaxed,
            skipped,
        });
        if v.stop_metric > best.0 || best.0.is_nan() {
            best = (v.stop_metric, epoch, model.clone());
        } else if let Some(p) = cfg.patience {
            if epoch - best.1 >= p {
                stopped_early = true;
                break;
            }
        }
    }
    if cfg.patience.is_some() {
        *model = best.2;
    }
    Ok(TrainReport {
        records,
        best_epoch: best.1,
        stopped_early,
        warnings,
        eval_cutoffs: cfg.eval_cutoffs.clone(),
        loss_k: cfg.loss.k,
    })
}
