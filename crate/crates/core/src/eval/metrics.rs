use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::scalar::{lit, Real};

/// Counts over the `p(p − 1)` ordered pairs `(j, l)`, `j ≠ l`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(estimated: &Dag, truth: &Dag) -> Result<Self> {
        let p = truth.p();
        if estimated.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "estimated graph has {} nodes, truth has {p}",
                estimated.p()
            )));
        }
        let mut c = Self::default();
        for j in 0..p {
            for l in (0..p).filter(|&l| l != j) {
                match (estimated.entry(j, l), truth.entry(j, l)) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Rates with the degenerate-denominator conventions: TPR is 1 when
    /// there is nothing to find, FDR is 0 when nothing was reported, and MCC
    /// is 0 when any marginal count vanishes.
    pub fn scores<T: Real>(&self) -> GraphScores<T> {
        let f = |v: usize| lit::<T>(v as f64);
        let (tp, tn, fp, fn_) = (f(self.tp), f(self.tn), f(self.fp), f(self.fn_));
        let tpr = if self.tp + self.fn_ == 0 { T::one() } else { tp / (tp + fn_) };
        let fdr = if self.tp + self.fp == 0 { T::zero() } else { fp / (tp + fp) };
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        let mcc = if factors.iter().any(|v| *v == T::zero()) {
            T::zero()
        } else {
            // Square roots taken pairwise to keep the product in range.
            (tp * tn - fp * fn_) / ((factors[0] * factors[1]).sqrt() * (factors[2] * factors[3]).sqrt())
        };
        GraphScores { tpr, fdr, mcc }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphScores<T = f64> {
    pub tpr: T,
    pub fdr: T,
    pub mcc: T,
}

/// TPR, FDR and MCC of an estimated graph against the truth.
pub fn score_graph(estimated: &Dag, truth: &Dag) -> Result<GraphScores> {
    Ok(ConfusionCounts::new(estimated, truth)?.scores())
}

/// One replicate of a simulation study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub p: usize,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "TPR")]
    pub tpr: f64,
    #[serde(rename = "FDR")]
    pub fdr: f64,
    #[serde(rename = "MCC")]
    pub mcc: f64,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
