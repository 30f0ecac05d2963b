//! Evaluation reports and their CSV form.

use std::io::Write;

use cmdp_core::error::{Error, Result};
use cmdp_core::Lambdas;

/// Fixed-width scientific rendering with 17 significant digits, which
/// round-trips every f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// One evaluation of the current greedy policy.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub step: u64,
    /// Mean undiscounted return per episode.
    pub mean_return: f64,
    /// Fraction of episodes ending in success.
    pub success_rate: f64,
    /// Per environment event, the fraction of all evaluation steps on which it fired.
    pub rates: Vec<f64>,
    pub lambdas: Lambdas<f64>,
    /// Mean twin critic loss per head from the latest update (NaN before any).
    pub critic_losses: Vec<f64>,
}

/// Column layout shared by every row of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSchema {
    pub event_names: Vec<String>,
    pub constraint_names: Vec<String>,
}

impl MetricSchema {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string(), "return".into(), "success_rate".into()];
        h.extend(self.event_names.iter().map(|n| format!("rate_{n}")));
        h.push("lambda_0".into());
        h.extend(self.constraint_names.iter().map(|n| format!("lambda_{n}")));
        h.push("loss_q0".into());
        h.extend(self.constraint_names.iter().map(|n| format!("loss_q_{n}")));
        h
    }

    pub fn row(&self, r: &EvalReport) -> Vec<String> {
        assert_eq!(r.rates.len(), self.event_names.len(), "rate columns");
        assert_eq!(
            r.lambdas.constraints.len(),
            self.constraint_names.len(),
            "lambda columns"
        );
        let mut row = vec![r.step.to_string(), fmt_f64(r.mean_return), fmt_f64(r.success_rate)];
        row.extend(r.rates.iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64(r.lambdas.reward));
        row.extend(r.lambdas.constraints.iter().map(|&x| fmt_f64(x)));
        row.extend(r.critic_losses.iter().map(|&x| fmt_f64(x)));
        row
    }

    /// Index of `rate_<event>` for a named event.
    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.event_names.iter().position(|n| n == name)
    }
}

/// Every evaluation of a run, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricLog {
    pub schema: MetricSchema,
    pub rows: Vec<EvalReport>,
}

impl MetricLog {
    pub fn new(schema: MetricSchema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = CsvSink::new(Vec::new(), &self.schema.header())?;
        for r in &self.rows {
            w.write(&self.schema.row(r))?;
        }
        w.finish()
    }

    /// The last `n` rows (fewer if the log is shorter).
    pub fn tail(&self, n: usize) -> &[EvalReport] {
        &self.rows[self.rows.len().saturating_sub(n)..]
    }
}

/// One multiplier update: multipliers after the step, base parameters after
/// the step, and the batch rates that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierRecord {
    pub step: u64,
    pub lambdas: Lambdas<f64>,
    pub params: Vec<f64>,
    pub rates: Vec<f64>,
}

pub fn multiplier_header(constraint_names: &[String]) -> Vec<String> {
    let mut h = vec!["step".to_string(), "lambda_0".into()];
    for prefix in ["lambda", "param", "batch_rate"] {
        h.extend(constraint_names.iter().map(|n| format!("{prefix}_{n}")));
    }
    h
}

pub fn multiplier_row(r: &MultiplierRecord) -> Vec<String> {
    let mut row = vec![r.step.to_string(), fmt_f64(r.lambdas.reward)];
    for v in [&r.lambdas.constraints, &r.params, &r.rates] {
        row.extend(v.iter().map(|&x| fmt_f64(x)));
    }
    row
}

/// Row-at-a-time CSV writer that flushes after every row.
pub struct CsvSink<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W, header: &[String]) -> Result<Self> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(header).map_err(csv_err)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &[String]) -> Result<()> {
        self.out.write_record(row).map_err(csv_err)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}
