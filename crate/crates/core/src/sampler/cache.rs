//! Sufficient statistics of the observations.
//!
//! For a curve with design `B̃` (rows `b̃(ω_m)ᵀ`) and values `W`, the
//! observation likelihood only needs `G = B̃ᵀB̃`, `h = B̃ᵀW` and `WᵀW`.
//! Curves sharing a grid share `G`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{FunctionalDataset, ModelState};
use crate::splines::{AdaptiveBasis, PenaltySystem};
use crate::stats::LN_2PI;

#[derive(Clone, Debug)]
pub struct CurveStats {
    /// Index into [`DataCache::grams`].
    pub grid: usize,
    pub h: DVector<f64>,
    pub ww: f64,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct DataCache {
    n: usize,
    p: usize,
    grams: Vec<DMatrix<f64>>,
    curves: Vec<CurveStats>,
    points: Vec<usize>,
}

impl DataCache {
    pub fn new(dataset: &FunctionalDataset, penalty: &PenaltySystem<f64>) -> Result<Self> {
        let (n, p) = (dataset.n(), dataset.p());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut designs: Vec<DMatrix<f64>> = Vec::new();
        let mut curves = Vec::with_capacity(n * p);
        for c in dataset.curves() {
            let key: Vec<u64> = c.grid.iter().map(|x| x.to_bits()).collect();
            let grid = match index.get(&key) {
                Some(&g) => g,
                None => {
                    designs.push(penalty.btilde_design(&c.grid)?);
                    index.insert(key, designs.len() - 1);
                    designs.len() - 1
                }
            };
            let w = DVector::from_column_slice(&c.values);
            curves.push(CurveStats {
                grid,
                h: designs[grid].tr_mul(&w),
                ww: w.norm_squared(),
                len: c.len(),
            });
        }
        let grams = designs.iter().map(|d| d.tr_mul(d)).collect();
        let points = (0..p).map(|j| dataset.total_points(j)).collect();
        Ok(Self {
            n,
            p,
            grams,
            curves,
            points,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `G` for each distinct grid.
    pub fn grams(&self) -> &[DMatrix<f64>] {
        &self.grams
    }

    #[inline]
    pub fn curve(&self, i: usize, j: usize) -> &CurveStats {
        &self.curves[i * self.p + j]
    }

    /// Observation count of function `j` across subjects.
    pub fn points(&self, j: usize) -> usize {
        self.points[j]
    }

    /// `Ã G Ãᵀ` (`K × K`) for each distinct grid.
    pub fn projected_grams(&self, basis: &AdaptiveBasis<f64>) -> Vec<DMatrix<f64>> {
        let a = &basis.coefficients;
        self.grams.iter().map(|g| a * g * a.transpose()).collect()
    }

    /// `‖W_ij − Φ_ij Z_ij‖²` summed over subjects, per function.
    pub fn residual_sum_squares(&self, state: &ModelState, projected: &[DMatrix<f64>]) -> Vec<f64> {
        let a = &state.basis.coefficients;
        let mut rss = vec![0.0; self.p];
        for i in 0..self.n {
            for (j, r) in rss.iter_mut().enumerate() {
                let c = self.curve(i, j);
                let z = state.z[i].row(j).transpose();
                let ah = a * &c.h;
                let quad = (z.transpose() * &projected[c.grid] * &z)[(0, 0)];
                *r += (c.ww - 2.0 * z.dot(&ah) + quad).max(0.0);
            }
        }
        rss
    }

    /// Observation log likelihood computed from the sufficient statistics.
    pub fn loglik_observation(&self, state: &ModelState, projected: &[DMatrix<f64>]) -> Result<f64> {
        if let Some(s) = state.sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::InvalidState(format!("observation variance {s} must be positive")));
        }
        let rss = self.residual_sum_squares(state, projected);
        Ok((0..self.p)
            .map(|j| {
                let (nj, s) = (self.points[j] as f64, state.sigma[j]);
                -0.5 * nj * (LN_2PI + s.ln()) - 0.5 * rss[j] / s
            })
            .sum())
    }
}
