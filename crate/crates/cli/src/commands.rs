use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pirank::data::{
    pad_truncate, read_letor_file, split, write_letor, DataError, ParseOptions, QueryGroup, SyntheticConfig,
    TruncatePolicy,
};
use pirank::losses::LossConfig;
use pirank::metrics::{compare, write_comparison_csv, MetricTable, ReportError};
use pirank::model::{self, checkpoint, Mlp, MlpConfig, ModelError, TempSchedule, TrainConfig};
use pirank::scaling::{run_scaling, CellStatus, ScalingConfig};
use pirank::Error as CoreError;

use crate::{BenchArgs, EvalArgs, Failure, GenArgs, TrainArgs, EXIT_NUMERIC};

fn data_err(e: DataError) -> Failure {
    match e {
        DataError::Config(_) => Failure::usage(e),
        _ => Failure::data(e),
    }
}

fn model_err(e: ModelError) -> Failure {
    match e {
        ModelError::NonFinite { .. } => Failure {
            code: EXIT_NUMERIC,
            msg: e.to_string(),
        },
        ModelError::Config(_) | ModelError::Loss(CoreError::Temperature(_) | CoreError::Plan(_)) => Failure::usage(e),
        _ => Failure::data(e),
    }
}

fn report_err(e: ReportError) -> Failure {
    Failure::data(e)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Creates the output directory and records the resolved configuration.
fn prepare_out_dir(dir: &Path, manifest: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(io_err(&path))
}

fn write_groups(path: &Path, groups: &[QueryGroup]) -> Result<(), Failure> {
    let mut w = create(path)?;
    write_letor(groups, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

pub fn gen_synthetic(a: &GenArgs, manifest: &str) -> Result<(), Failure> {
    let cfg = SyntheticConfig {
        queries: a.n,
        list_size: a.list_size,
        doc_features: a.doc_features,
        query_features: a.query_features,
        label_min: a.label_min,
        label_max: a.label_max,
        phi: a.phi,
        psi: a.psi,
        seed: a.seed,
    };
    cfg.validate().map_err(data_err)?;
    let parts = match &a.split {
        Some(s) => match s.0[..] {
            [t, v, e] => Some([t, v, e]),
            _ => return Err(Failure::usage("--split takes three fractions, e.g. 0.6,0.2,0.2")),
        },
        None => None,
    };
    if a.label_min == a.label_max {
        warn(format!("label bounds are equal; every label is {}", a.label_min));
    }
    prepare_out_dir(&a.out_dir, manifest)?;
    let groups = pirank::data::gen_synthetic(&cfg).map_err(data_err)?;
    write_groups(&a.out_dir.join("data.txt"), &groups)?;
    let meta = a.out_dir.join("data.meta");
    let mut w = create(&meta)?;
    cfg.write_meta(&mut w).and_then(|_| w.flush()).map_err(io_err(&meta))?;
    if let Some(fractions) = parts {
        let (train, valid, test) = split(&groups, fractions, a.seed).map_err(data_err)?;
        for (name, part) in [("train.txt", &train), ("valid.txt", &valid), ("test.txt", &test)] {
            write_groups(&a.out_dir.join(name), part)?;
        }
    }
    println!(
        "wrote {} queries of {} items ({} features) to {}",
        groups.len(),
        a.list_size,
        a.doc_features + a.query_features,
        a.out_dir.display()
    );
    Ok(())
}

fn load(
    path: &Path,
    num_features: Option<usize>,
    list_size: Option<usize>,
    strict: bool,
) -> Result<Vec<QueryGroup>, Failure> {
    let groups = read_letor_file(path, &ParseOptions { num_features })
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let Some(max) = list_size else { return Ok(groups) };
    let policy = if strict {
        TruncatePolicy::Error
    } else {
        TruncatePolicy::TruncateTail
    };
    groups
        .iter()
        .map(|g| pad_truncate(g, max, policy).map_err(data_err))
        .collect()
}

fn threads() -> Result<usize, Failure> {
    match std::env::var("PIRANK_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| Failure::usage(format!("PIRANK_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(1),
    }
}

pub fn train(a: &TrainArgs, manifest: &str) -> Result<(), Failure> {
    let cfg = TrainConfig {
        loss: LossConfig {
            kind: a.loss,
            k: a.k,
            tau: a.tau,
            depth: a.depth,
            straight_through: a.straight_through,
            temperature_ratio: a.temperature_ratio,
        },
        batch_size: a.batch_size,
        lr: a.lr,
        epochs: a.epochs,
        schedule: match a.tau_decay {
            Some(decay) => TempSchedule::Exponential { decay },
            None => TempSchedule::Constant,
        },
        patience: (a.patience > 0).then_some(a.patience),
        early_stop_k: a.early_stop_k,
        eval_cutoffs: a.cutoffs.0.clone(),
        seed: a.seed,
        threads: threads()?,
        grad_norm_warn: a.grad_norm_warn,
    };
    cfg.validate().map_err(model_err)?;
    let train = load(&a.train, a.num_features, a.list_size, a.strict_length)?;
    let Some(width) = train.first().map(|g| g.num_features) else {
        return Err(Failure::data(format!("{}: no queries", a.train.display())));
    };
    let valid = match &a.valid {
        Some(p) => load(p, Some(width), a.list_size, a.strict_length)?,
        None => Vec::new(),
    };
    let mut net = Mlp::new(
        &MlpConfig {
            input: width,
            hidden: a.hidden.0.clone(),
        },
        a.seed,
    )
    .map_err(model_err)?;
    prepare_out_dir(&a.out_dir, manifest)?;
    let report = model::train(&mut net, &train, &valid, &cfg).map_err(model_err)?;
    for w in &report.warnings {
        warn(w);
    }
    let ckpt = a.out_dir.join("model.ckpt");
    let mut w = create(&ckpt)?;
    checkpoint::save(&net, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&ckpt))?;
    let log = a.out_dir.join("epochs.csv");
    let mut w = create(&log)?;
    report.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&log))?;

    let best = &report.records[report.best_epoch];
    let last = report.records.last().expect("epoch 0 is always recorded");
    println!(
        "{} epochs{}; best epoch {}",
        last.epoch,
        if report.stopped_early { " (stopped early)" } else { "" },
        report.best_epoch
    );
    for (k, v) in cfg.eval_cutoffs.iter().zip(&best.ndcg) {
        println!("validation ndcg@{k} = {v:.6}");
    }
    Ok(())
}

fn named_table(arg: &str) -> Result<(String, MetricTable), Failure> {
    let (name, path) = match arg.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
        _ => {
            let p = PathBuf::from(arg);
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.into());
            (stem, p)
        }
    };
    let file = File::open(&path).map_err(io_err(&path))?;
    let table =
        MetricTable::read_csv(BufReader::new(file)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok((name, table))
}

pub fn evaluate(a: &EvalArgs, manifest: &str) -> Result<(), Failure> {
    if a.cutoffs.0.contains(&0) {
        return Err(Failure::usage("cutoffs must be at least 1"));
    }
    let table = match (&a.model, &a.data, &a.metrics) {
        (Some(m), Some(d), None) => {
            let file = File::open(m).map_err(io_err(m))?;
            let net = checkpoint::load(BufReader::new(file)).map_err(model_err)?;
            let groups = load(d, Some(net.input_width()), None, false)?;
            model::evaluate(&net, &groups, &a.cutoffs.0).map_err(model_err)?
        }
        (None, None, Some(p)) => named_table(&p.to_string_lossy())?.1,
        _ => return Err(Failure::usage("give either --model with --data, or --metrics")),
    };
    let mut methods = vec![(a.name.clone(), table)];
    for arg in &a.compare {
        methods.push(named_table(arg)?);
    }
    prepare_out_dir(&a.out_dir, manifest)?;
    let table = &methods[0].1;
    let path = a.out_dir.join("metrics.csv");
    let mut w = create(&path)?;
    table.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let path = a.out_dir.join("summary.csv");
    let mut w = create(&path)?;
    let mut body = String::from("metric,mean,queries\n");
    for (col, (mean, n)) in table.columns.iter().zip(table.means()) {
        let mean = mean.map(|m| m.to_string()).unwrap_or_default();
        body.push_str(&format!("{col},{mean},{n}\n"));
        println!("{col:>10} {mean:>22} ({n} queries)");
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    println!("note: opa counts tied predicted scores as misordered pairs");

    if methods.len() > 1 {
        let rows = compare(&methods).map_err(report_err)?;
        let path = a.out_dir.join("comparison.csv");
        let mut w = create(&path)?;
        write_comparison_csv(&rows, &mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
        println!("\n{:>10} {:>16} {:>12} {:>10}  bold", "metric", "method", "mean", "p");
        for r in &rows {
            println!(
                "{:>10} {:>16} {:>12} {:>10}  {}",
                r.metric,
                r.method,
                r.mean.map(|m| format!("{m:.6}")).unwrap_or_else(|| "-".into()),
                r.p.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into()),
                if r.bold { "*" } else { "" }
            );
        }
    }
    Ok(())
}

pub fn bench_scaling(a: &BenchArgs, manifest: &str) -> Result<(), Failure> {
    let cfg = ScalingConfig {
        lengths: a.lengths.0.clone(),
        depths: a.depths.0.clone(),
        steps: a.steps,
        batch_size: a.batch_size,
        k: a.k,
        tau: a.tau,
        hidden: a.hidden.0.clone(),
        lr: a.lr,
        seed: a.seed,
        max_seconds: a.max_seconds,
        ..ScalingConfig::default()
    };
    if cfg.lengths.is_empty() || cfg.depths.is_empty() || cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(Failure::usage(
            "lengths, depths, steps and batch size must be nonempty/positive",
        ));
    }
    prepare_out_dir(&a.out_dir, manifest)?;
    let report = run_scaling(&cfg, |c| {
        let time = c.seconds.map(|s| format!("{s:.3}s")).unwrap_or_else(|| "-".into());
        let note = match &c.status {
            CellStatus::Complete => String::new(),
            CellStatus::Extrapolated => format!(" (extrapolated from {} steps)", c.steps_run),
            CellStatus::Failed(m) => format!(" (failed: {m})"),
        };
        eprintln!("L={:<5} d={} {time}{note}", c.len, c.depth);
    })
    .map_err(Failure::usage)?;
    let path = a.out_dir.join("scaling.csv");
    let mut w = create(&path)?;
    report
        .write_cells_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    let path = a.out_dir.join("slopes.csv");
    let mut w = create(&path)?;
    report
        .write_slopes_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    for s in &report.slopes {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "d={}: measured slope {}, predicted {}",
            s.depth,
            f(s.measured),
            f(s.predicted)
        );
    }
    Ok(())
}
