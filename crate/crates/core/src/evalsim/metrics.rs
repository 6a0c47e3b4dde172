use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
}

/// Precision `|S_hat & S| / |S_hat|` and recall `|S_hat & S| / |S|` of the
/// estimated support. Pass slopes only; intercepts are not part of either
/// support. An empty estimate has precision 1 if the truth is empty and 0
/// otherwise; an empty truth has recall 1.
pub fn support_metrics(estimated: &Array1<f64>, truth: &Array1<f64>) -> Result<SupportMetrics> {
    if estimated.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {} but truth has {}",
            estimated.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    let mut selected = 0usize;
    let mut relevant = 0usize;
    for (e, t) in estimated.iter().zip(truth.iter()) {
        let (se, st) = (*e != 0.0, *t != 0.0);
        selected += usize::from(se);
        relevant += usize::from(st);
        hits += usize::from(se && st);
    }
    let precision = if selected == 0 {
        if relevant == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        hits as f64 / selected as f64
    };
    let recall = if relevant == 0 { 1.0 } else { hits as f64 / relevant as f64 };
    Ok(SupportMetrics { precision, recall })
}

pub fn l2_error(estimated: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    estimated
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Streaming mean and sample standard deviation (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Summary {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    /// Sample standard deviation (`n - 1` denominator); zero below two values.
    pub fn sd(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Summary {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Summary::default();
        iter.into_iter().for_each(|v| s.push(v));
        s
    }
}
