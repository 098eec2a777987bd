//! Evaluation, accuracy matrices, forgetting, and metrics export.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{predict_logits, softmax_xent, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and argmax accuracy (ties to the lowest class index).
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    if data.n_classes() != params.n_classes() {
        return Err(Error::shape("evaluate classes", params.n_classes(), data.n_classes()));
    }
    let logits = predict_logits(params, data.features())?;
    let (loss, _) = softmax_xent(&logits, data.labels())?;
    let correct = logits
        .argmax_rows()
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / data.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One curve point or end-of-event evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Event being trained when the record was taken.
    pub event: usize,
    /// Federated round (1-based); 0 for centralized training.
    pub round: usize,
    /// Epochs completed within the event.
    pub epoch: usize,
    pub split: Split,
    /// Event whose data was evaluated.
    pub target_event: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub type MetricsLog = Vec<EvalRecord>;

/// `a[i][j]`: accuracy on event `j` after finishing event `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    /// Row `i` must cover at least events `0..=i`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() < i + 1 {
                return Err(Error::shape(format!("accuracy matrix row {i}"), format!(">= {}", i + 1), r.len()));
            }
            if let Some(j) = r.iter().position(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Data {
                    row: i,
                    col: Some(j),
                    message: format!("accuracy {} outside [0, 1]", r[j]),
                });
            }
        }
        Ok(AccuracyMatrix { rows })
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let mut rows = std::mem::take(&mut self.rows);
        rows.push(row);
        *self = AccuracyMatrix::from_rows(rows)?;
        Ok(())
    }

    pub fn completed(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Mean over earlier events of (best accuracy ever reached − final accuracy).
pub fn forgetting(m: &AccuracyMatrix) -> Result<f64> {
    let n = m.completed();
    if n < 2 {
        return Err(Error::config("forgetting", "needs at least 2 completed events"));
    }
    let last = n - 1;
    let total: f64 = (0..last)
        .map(|j| {
            let best = (j..n).map(|i| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            best - m.get(last, j)
        })
        .sum();
    Ok(total / last as f64)
}

/// Mean of `a[upto−1][0..upto]`.
pub fn cumulative_mean(m: &AccuracyMatrix, upto: usize) -> Result<f64> {
    if upto == 0 {
        return Err(Error::config("upto", "must be >= 1"));
    }
    if upto > m.completed() {
        return Err(Error::config(
            "upto",
            format!("only {} events completed, asked for {upto}", m.completed()),
        ));
    }
    let row = &m.rows[upto - 1][..upto];
    Ok(row.iter().sum::<f64>() / upto as f64)
}

/// Rounds to 9 significant digits and prints the shortest decimal form.
pub fn fmt_sig9(x: f64) -> String {
    round_sig9(x).to_string()
}

fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub const METRICS_CSV_HEADER: &str = "event,round,epoch,split,target_event,loss,accuracy";

pub fn metrics_to_csv(log: &[EvalRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.event,
            r.round,
            r.epoch,
            r.split,
            r.target_event,
            fmt_sig9(r.loss),
            fmt_sig9(r.accuracy)
        ));
    }
    out
}

pub fn metrics_to_json(log: &[EvalRecord]) -> String {
    let rounded: Vec<EvalRecord> = log
        .iter()
        .map(|r| EvalRecord {
            loss: round_sig9(r.loss),
            accuracy: round_sig9(r.accuracy),
            ..*r
        })
        .collect();
    serde_json::to_string_pretty(&rounded).expect("records serialize")
}

pub fn parse_metrics_csv(text: &str) -> Result<MetricsLog> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_CSV_HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                message: format!("expected header `{METRICS_CSV_HEADER}`"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |m: String| Error::Format { line: i + 1, message: m };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            Ok(EvalRecord {
                event: int(f[0])?,
                round: int(f[1])?,
                epoch: int(f[2])?,
                split: f[3].parse().map_err(bad)?,
                target_event: int(f[4])?,
                loss: float(f[5])?,
                accuracy: float(f[6])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export(log: &[EvalRecord], path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ExportFormat::Csv => metrics_to_csv(log),
        ExportFormat::Json => metrics_to_json(log),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_model;
    use crate::tensor::Matrix;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn uniform_predictor_loss_and_tie_break() {
        let mut p = init_model(2, 4, 3, 10, 0).unwrap();
        p.tensors_mut().for_each(|t| t.fill(0.0));
        let labels = vec![0, 0, 3, 7, 0];
        let d = Dataset::new(Matrix::filled(5, 3, 0.7), labels, 10).unwrap();
        let e = evaluate(&p, &d).unwrap();
        assert!(approx(e.loss, 10f64.ln()));
        assert!(approx(e.accuracy, 0.6));
    }

    #[test]
    fn one_hot_model_is_perfect() {
        // Identity-like network: in_dim = classes, hidden passes positives through.
        let mut p = init_model(2, 4, 4, 4, 0).unwrap();
        for l in p.layers_mut() {
            l.weights.data_mut().fill(0.0);
            for i in 0..4 {
                l.weights.set(i, i, 1.0);
            }
        }
        let labels = vec![2, 0, 3, 1];
        let mut x = Matrix::zeros(4, 4);
        for (r, &y) in labels.iter().enumerate() {
            x.set(r, y, 5.0);
        }
        let d = Dataset::new(x, labels, 4).unwrap();
        assert_eq!(evaluate(&p, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn forgetting_hand_cases() {
        let m = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.9, 0.8]]).unwrap();
        assert_eq!(forgetting(&m).unwrap(), 0.0);
        let m = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.5, 0.8]]).unwrap();
        assert!(approx(forgetting(&m).unwrap(), 0.4));
        let one = AccuracyMatrix::from_rows(vec![vec![0.9]]).unwrap();
        assert!(matches!(forgetting(&one), Err(Error::Config { .. })));
    }

    #[test]
    fn cumulative_mean_hand_cases() {
        let m = AccuracyMatrix::from_rows(vec![vec![0.8]]).unwrap();
        assert!(approx(cumulative_mean(&m, 1).unwrap(), 0.8));
        let m = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.1, 0.2], vec![0.6, 0.7, 0.8]]).unwrap();
        assert!(approx(cumulative_mean(&m, 3).unwrap(), 0.7));
        assert!(cumulative_mean(&m, 0).is_err());
        assert!(cumulative_mean(&m, 4).is_err());
    }

    #[test]
    fn matrix_rejects_out_of_range_entries() {
        assert!(AccuracyMatrix::from_rows(vec![vec![1.5]]).is_err());
        assert!(AccuracyMatrix::from_rows(vec![vec![0.5], vec![0.5]]).is_err());
    }

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(metrics_to_csv(&[]), format!("{METRICS_CSV_HEADER}\n"));
    }

    #[test]
    fn one_record_is_two_lines() {
        let r = EvalRecord {
            event: 1,
            round: 2,
            epoch: 10,
            split: Split::Valid,
            target_event: 1,
            loss: 0.123456789123,
            accuracy: 2.0 / 3.0,
        };
        let csv = metrics_to_csv(&[r]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,2,10,valid,1,0.123456789,0.666666667");
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(2.302585092994046), "2.30258509");
    }
}
