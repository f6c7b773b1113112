use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::train::stack_examples;
use crate::dataset::{Example, ManeuverClass};
use crate::error::{Error, Result};
use crate::models::{predict_rows, Model};

/// Confusion counts and accuracy for one evaluated set. Rows of
/// `confusion` are true classes, columns predicted classes, both in
/// NLC, LLC, RLC order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: [[u64; 3]; 3],
    pub accuracy: f64,
    /// True-class counts (row sums).
    pub class_counts: [u64; 3],
    pub samples: u64,
    pub wall_clock_secs: f64,
    pub seed: u64,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[ManeuverClass], predicted: &[ManeuverClass], seed: u64) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Contract("cannot evaluate an empty sample set".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::dim("confusion matrix", "predictions", truth.len(), predicted.len()));
        }
        let mut confusion = [[0u64; 3]; 3];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Ok(Self::from_confusion(confusion, seed))
    }

    pub fn from_confusion(confusion: [[u64; 3]; 3], seed: u64) -> Self {
        let class_counts = confusion.map(|row| row.iter().sum());
        let samples: u64 = class_counts.iter().sum();
        let trace: u64 = (0..3).map(|i| confusion[i][i]).sum();
        MetricsReport {
            confusion,
            accuracy: if samples == 0 { 0.0 } else { trace as f64 / samples as f64 },
            class_counts,
            samples,
            wall_clock_secs: 0.0,
            seed,
        }
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.confusion[i][i]).sum()
    }

    /// `accuracy == trace / sum` and `sum == samples`, on exact counts.
    pub fn is_consistent(&self) -> bool {
        let sum: u64 = self.confusion.iter().flatten().sum();
        sum == self.samples && sum > 0 && self.accuracy == self.trace() as f64 / sum as f64
    }
}

/// Evaluation-mode predictions over `samples` in batches.
pub fn predict_examples(model: &mut Model<f32>, samples: &[Example], batch_size: usize) -> Result<Vec<ManeuverClass>> {
    let mut out = Vec::with_capacity(samples.len());
    let refs: Vec<&Example> = samples.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let (a, f) = stack_examples(chunk)?;
        let p = model.predict_proba(&a, &f)?;
        out.extend(predict_rows(&p));
    }
    Ok(out)
}

pub fn evaluate(model: &mut Model<f32>, samples: &[Example], batch_size: usize, seed: u64) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty sample set".into()));
    }
    let start = Instant::now();
    let predicted = predict_examples(model, samples, batch_size)?;
    let truth: Vec<ManeuverClass> = samples.iter().map(|s| s.label).collect();
    let mut report = MetricsReport::from_predictions(&truth, &predicted, seed)?;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn evaluate_checkpoint(path: &Path, samples: &[Example], batch_size: usize, seed: u64) -> Result<MetricsReport> {
    let (mut model, _) = Model::load(path)?;
    evaluate(&mut model, samples, batch_size, seed)
}
