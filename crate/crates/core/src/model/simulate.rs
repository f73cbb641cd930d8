//! Synthetic data from the functional SEM with Laplace exogenous terms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{default_labels, Curve, FunctionalDataset};
use super::state::{EffectBlocks, MixtureNoise, ModelState};
use crate::error::{Error, Result};
use crate::graph::random_er_dag;
use crate::splines::{
    basis_functions_on_grid, orthonormalize, AdaptiveBasis, PenaltySystem, LAMBDA_MAX, LAMBDA_MIN,
};
use crate::stats::{sample_laplace, standard_normal};

/// Minimum number of points per curve in the uneven-grid design.
pub const MIN_UNEVEN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    #[default]
    Even,
    Uneven,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub p: usize,
    pub n: usize,
    /// Grid size.
    pub d: usize,
    pub k_true: usize,
    pub l_true: usize,
    pub laplace_scale: f64,
    /// Mean absolute signal over observation-noise standard deviation.
    pub snr: f64,
    pub grid: GridMode,
    /// Edge probability of the random graph; `2 / p` when `None`.
    pub edge_prob: Option<f64>,
}

impl SimulationConfig {
    pub fn new(p: usize, n: usize, d: usize) -> Self {
        Self {
            p,
            n,
            d,
            k_true: 5,
            l_true: 6,
            laplace_scale: 0.5,
            snr: 5.0,
            grid: GridMode::Even,
            edge_prob: None,
        }
    }

    pub fn edge_probability(&self) -> f64 {
        self.edge_prob.unwrap_or(2.0 / self.p as f64).min(1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n < 1 {
            return Err(Error::InvalidConfiguration(format!(
                "need p >= 2 and n >= 1, got p = {}, n = {}",
                self.p, self.n
            )));
        }
        if self.k_true == 0 || self.d < self.k_true {
            return Err(Error::InvalidConfiguration(format!(
                "grid size {} must be at least K = {} >= 1",
                self.d, self.k_true
            )));
        }
        if self.k_true > self.l_true {
            return Err(Error::InvalidConfiguration(format!(
                "K = {} exceeds the number of splines {}",
                self.k_true, self.l_true
            )));
        }
        if !(self.laplace_scale >= 0.0) || !(self.snr > 0.0) {
            return Err(Error::InvalidConfiguration(
                "Laplace scale must be >= 0 and SNR > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A simulated dataset with its generating parameters.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: FunctionalDataset,
    /// Generating parameters. The exogenous terms are Laplace, which the
    /// discrete mixture cannot express; `truth.noise` records a single
    /// component with the Laplace variance `2 b²`.
    pub truth: ModelState,
    /// Observation-noise standard deviations (`truth.sigma` holds their squares).
    pub noise_sd: Vec<f64>,
    /// Mean `|y|` per function across subjects and grid points.
    pub mean_abs_signal: Vec<f64>,
    /// Laplace draws `ε`, one `p × K` matrix per subject.
    pub exogenous: Vec<DMatrix<f64>>,
}

pub fn even_grid(d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![0.5];
    }
    (0..d).map(|m| m as f64 / (d - 1) as f64).collect()
}

/// Trapezoid weights on a sorted grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let d = grid.len();
    let mut w = vec![0.0; d];
    for m in 0..d.saturating_sub(1) {
        let h = grid[m + 1] - grid[m];
        w[m] += 0.5 * h;
        w[m + 1] += 0.5 * h;
    }
    if d == 1 {
        w[0] = 1.0;
    }
    w
}

/// Smoothness parameters matched to each coefficient vector's roughness,
/// pushed into strict decreasing order inside the admissible bounds.
pub fn nominal_lambdas(basis_coefficients: &DMatrix<f64>, penalty: &PenaltySystem<f64>) -> Vec<f64> {
    let l = penalty.dim();
    let lo = LAMBDA_MIN * 10.0;
    let hi = LAMBDA_MAX / 10.0;
    let mut out: Vec<f64> = (0..basis_coefficients.nrows())
        .map(|k| {
            let rough = penalty.roughness(&basis_coefficients.row(k).transpose());
            ((l - 2) as f64 / rough.max(1e-300)).clamp(lo, hi)
        })
        .collect();
    for k in 1..out.len() {
        if out[k] >= out[k - 1] {
            out[k] = out[k - 1] * 0.5;
        }
    }
    let floor = out.last().copied().unwrap_or(1.0);
    if floor <= LAMBDA_MIN {
        let shift = lo / floor;
        for v in out.iter_mut() {
            *v *= shift;
        }
    }
    out
}

pub fn simulate<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<Simulation> {
    config.validate()?;
    let (p, n, k) = (config.p, config.n, config.k_true);
    let penalty = Arc::new(PenaltySystem::<f64>::cubic(config.l_true)?);

    // Basis: random spline coefficients, orthonormalized in the trapezoid
    // inner product on the even grid.
    let common = even_grid(config.d);
    let design = penalty.basis().design_matrix(&common)?;
    let w = trapezoid_weights(&common);
    let weighted = DMatrix::from_fn(design.nrows(), design.ncols(), |r, c| design[(r, c)] * w[r]);
    let empirical_gram = design.transpose() * weighted;
    let raw = DMatrix::from_fn(k, config.l_true, |_, _| StandardNormal.sample(rng));
    let spline_coefs = orthonormalize(&raw, &empirical_gram)?;
    let mut coefficients = DMatrix::zeros(k, config.l_true);
    for row in 0..k {
        let a = spline_coefs.row(row).transpose();
        let tilde = penalty.from_bspline_coefficients(&a)?;
        coefficients.set_row(row, &tilde.transpose());
    }
    let lambda = nominal_lambdas(&coefficients, &penalty);
    let basis = AdaptiveBasis::new(coefficients, lambda)?;

    let dag = random_er_dag(p, config.edge_probability(), rng)?;
    let mut effects = EffectBlocks::zeros(p, k, 1.0);
    for (from, to) in dag.edges() {
        effects.set(to, from, DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng)));
    }

    let order = dag.topological_order();
    let mut z = Vec::with_capacity(n);
    let mut exogenous = Vec::with_capacity(n);
    for _ in 0..n {
        let eps = DMatrix::from_fn(p, k, |_, _| sample_laplace(config.laplace_scale, rng));
        let mut zi = DMatrix::<f64>::zeros(p, k);
        for &j in &order {
            let mut row: DVector<f64> = eps.row(j).transpose();
            for l in dag.parents(j) {
                row += effects.get(j, l).expect("block on edge") * zi.row(l).transpose();
            }
            zi.set_row(j, &row.transpose());
        }
        z.push(zi);
        exogenous.push(eps);
    }

    let mut grids: Vec<Vec<f64>> = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        grids.push(match config.grid {
            GridMode::Even => common.clone(),
            GridMode::Uneven => {
                let hi = config.d.max(MIN_UNEVEN_POINTS);
                let lo = config.d.div_ceil(2).max(MIN_UNEVEN_POINTS).min(hi);
                let m = rng.random_range(lo..=hi);
                let mut g: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                g.sort_by(f64::total_cmp);
                g
            }
        });
    }

    let mut signals: Vec<DVector<f64>> = Vec::with_capacity(n * p);
    let mut abs_sum = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for i in 0..n {
        for j in 0..p {
            let phi = basis_functions_on_grid(&basis, &penalty, &grids[i * p + j])?;
            let y = phi * z[i].row(j).transpose();
            abs_sum[j] += y.iter().map(|v| v.abs()).sum::<f64>();
            counts[j] += y.len();
            signals.push(y);
        }
    }
    let mean_abs_signal: Vec<f64> = abs_sum.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    // A vanishing signal leaves nothing to scale against: fall back to unit noise.
    let noise_sd: Vec<f64> = mean_abs_signal
        .iter()
        .map(|&m| if m > 0.0 { m / config.snr } else { 1.0 })
        .collect();

    let mut curves = Vec::with_capacity(n * p);
    for (idx, (grid, y)) in grids.into_iter().zip(signals).enumerate() {
        let sd = noise_sd[idx % p];
        let values = y
            .iter()
            .map(|v| v + sd * standard_normal(rng))
            .collect::<Vec<f64>>();
        curves.push(Curve::new(grid, values)?);
    }
    let subjects = (1..=n).map(|i| format!("s{i}")).collect();
    let dataset = FunctionalDataset::new(default_labels(p), subjects, curves)?;

    let laplace_var = (2.0 * config.laplace_scale * config.laplace_scale).max(f64::MIN_POSITIVE);
    let noise = MixtureNoise {
        m: 1,
        weights: vec![vec![1.0]; p * k],
        variances: vec![vec![laplace_var]; p * k],
        assignments: vec![0; n * p * k],
    };
    let truth = ModelState {
        dag,
        effects,
        noise,
        z,
        sigma: noise_sd.iter().map(|s| s * s).collect(),
        r: config.edge_probability().clamp(1e-12, 1.0 - 1e-12),
        basis,
        penalty,
    };
    Ok(Simulation {
        dataset,
        truth,
        noise_sd,
        mean_abs_signal,
        exogenous,
    })
}
