//! Per-query metric tables, their CSV form, and method comparison.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use super::stats::{paired_t_test, StatsError};
use super::{mean_defined, QueryMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("query sets differ between `{0}` and `{1}`")]
    QueryMismatch(String, String),
    #[error("no metric column shared by all methods")]
    NoCommonColumns,
    #[error("need at least one method to compare")]
    NoMethods,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One row per query, one column per metric; `None` marks a skipped value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub query_ids: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Whether smaller values of a metric column are better.
pub fn lower_is_better(column: &str) -> bool {
    column == "rp" || column == "arp"
}

impl MetricTable {
    pub fn from_queries(query_ids: Vec<String>, cutoffs: &[usize], metrics: &[QueryMetrics]) -> Self {
        assert_eq!(query_ids.len(), metrics.len());
        Self {
            query_ids,
            columns: QueryMetrics::columns(cutoffs),
            rows: metrics.iter().map(QueryMetrics::values).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_values(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r[col])
    }

    /// Mean and defined count per column, skipped values excluded.
    pub fn means(&self) -> Vec<(Option<f64>, usize)> {
        (0..self.columns.len())
            .map(|c| mean_defined(self.column_values(c)))
            .collect()
    }

    /// `qid,<columns>`; skipped values are empty fields.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "qid,{}", self.columns.join(","))?;
        for (id, row) in self.query_ids.iter().zip(&self.rows) {
            write!(w, "{id}")?;
            for v in row {
                match v {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self, ReportError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(ReportError::Parse {
            line: 1,
            msg: "missing header".into(),
        })??;
        let mut fields = header.trim_end().split(',');
        if fields.next() != Some("qid") {
            return Err(ReportError::Parse {
                line: 1,
                msg: "first column must be `qid`".into(),
            });
        }
        let columns: Vec<String> = fields.map(str::to_string).collect();
        let mut table = Self {
            query_ids: Vec::new(),
            columns,
            rows: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim_end().split(',');
            let id = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|e| ReportError::Parse {
                            line: lineno,
                            msg: format!("bad value `{f}`: {e}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != table.columns.len() {
                return Err(ReportError::Parse {
                    line: lineno,
                    msg: format!("{} values for {} columns", row.len(), table.columns.len()),
                });
            }
            table.query_ids.push(id);
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// One method's standing on one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodComparison {
    pub metric: String,
    pub method: String,
    /// Mean over the queries defined for every method.
    pub mean: Option<f64>,
    pub queries: usize,
    pub best: bool,
    /// Paired statistic of best versus this method, oriented so that a
    /// positive value means the best method is better. `None` for the best
    /// method itself or when fewer than two queries are shared.
    pub t: Option<f64>,
    pub p: Option<f64>,
    /// Best, or not significantly worse than the best.
    pub bold: bool,
}

/// Compares methods query by query on every shared metric column.
///
/// For each metric the best method by mean is tested against each other
/// method with a one-sided paired t-test; a method is bold if it is the best
/// or the test is not significant. Queries undefined for any method are
/// dropped from all sides.
pub fn compare(methods: &[(String, MetricTable)]) -> Result<Vec<MethodComparison>, ReportError> {
    let (first_name, first) = methods.first().ok_or(ReportError::NoMethods)?;
    let position: Vec<HashMap<&str, usize>> = methods
        .iter()
        .map(|(_, t)| t.query_ids.iter().enumerate().map(|(i, q)| (q.as_str(), i)).collect())
        .collect();
    for ((name, table), pos) in methods.iter().zip(&position).skip(1) {
        let same = table.query_ids.len() == first.query_ids.len()
            && pos.len() == position[0].len()
            && first.query_ids.iter().all(|q| pos.contains_key(q.as_str()));
        if !same {
            return Err(ReportError::QueryMismatch(first_name.clone(), name.clone()));
        }
    }
    let shared: Vec<&String> = first
        .columns
        .iter()
        .filter(|c| methods.iter().all(|(_, t)| t.column(c).is_some()))
        .collect();
    if shared.is_empty() {
        return Err(ReportError::NoCommonColumns);
    }

    let mut out = Vec::new();
    for metric in shared {
        let cols: Vec<usize> = methods.iter().map(|(_, t)| t.column(metric).unwrap()).collect();
        // values[m][q] over queries defined for every method, in first-table order
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
        for q in &first.query_ids {
            let row: Option<Vec<f64>> = methods
                .iter()
                .zip(&position)
                .zip(&cols)
                .map(|(((_, t), pos), &c)| t.rows[pos[q.as_str()]][c])
                .collect();
            if let Some(row) = row {
                for (m, v) in row.into_iter().enumerate() {
                    values[m].push(v);
                }
            }
        }
        let n = values[0].len();
        let lower = lower_is_better(metric);
        let means: Vec<Option<f64>> = values
            .iter()
            .map(|v| (n > 0).then(|| v.iter().sum::<f64>() / n as f64))
            .collect();
        let best = (0..methods.len())
            .filter(|&m| means[m].is_some())
            .fold(None::<usize>, |acc, m| match acc {
                None => Some(m),
                Some(b) => {
                    let (mb, mm) = (means[b].unwrap(), means[m].unwrap());
                    let better = if lower { mm < mb } else { mm > mb };
                    Some(if better { m } else { b })
                }
            });
        for (m, (name, _)) in methods.iter().enumerate() {
            let is_best = best == Some(m);
            let test = match best {
                Some(b) if !is_best && n >= 2 => Some(if lower {
                    paired_t_test(&values[m], &values[b])?
                } else {
                    paired_t_test(&values[b], &values[m])?
                }),
                _ => None,
            };
            out.push(MethodComparison {
                metric: metric.clone(),
                method: name.clone(),
                mean: means[m],
                queries: n,
                best: is_best,
                t: test.map(|r| r.t),
                p: test.map(|r| r.p),
                bold: is_best || test.map_or(true, |r| !r.significant),
            });
        }
    }
    Ok(out)
}

/// CSV form of a comparison: `metric,method,mean,queries,best,t,p,bold`.
pub fn write_comparison_csv(rows: &[MethodComparison], mut w: impl Write) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    writeln!(w, "metric,method,mean,queries,best,t,p,bold")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.metric,
            r.method,
            opt(r.mean),
            r.queries,
            r.best,
            opt(r.t),
            opt(r.p),
            r.bold
        )?;
    }
    Ok(())
}
