//! Pearson and Spearman correlation.
//!
//! Undefined correlations (constant input) are errors, never `0` or `NaN`.

use crate::{Error, Result};

/// Two equal-length series of at least two finite values.
#[derive(Debug, Clone, Copy)]
pub struct PairedSeries<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!("series lengths {} and {}", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::UndefinedCorrelation(format!("{} paired values, need at least 2", x.len())));
        }
        if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value {v} in series")));
        }
        Ok(PairedSeries { x, y })
    }

    pub fn x(&self) -> &'a [f64] {
        self.x
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn pearson(&self) -> Result<f64> {
        pearson_unchecked(self.x, self.y)
    }

    pub fn spearman(&self) -> Result<f64> {
        let rx = average_ranks(self.x);
        let ry = average_ranks(self.y);
        pearson_unchecked(&rx, &ry)
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    PairedSeries::new(x, y)?.pearson()
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    PairedSeries::new(x, y)?.spearman()
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    if is_constant(x) || is_constant(y) {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}
