use std::fmt::Debug;
use std::io::Write;

use num_traits::{Num, Signed};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::model::{default_labels, even_grid, Curve, FunctionalDataset};
use crate::stats::standard_normal;

/// Bivariate scale-mixture SEM `Z₁ = ε₁`, `Z₂ = Z₁ + ε₂`, observed as
/// `W = Z + e` with Gaussian `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub n: usize,
    /// Mixture weights shared by `ε₁` and `ε₂`.
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    /// Variance of the measurement error `e`.
    pub noise_variance: f64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            n: 1000,
            weights: vec![0.5, 0.5],
            variances: vec![0.5, 1.0],
            noise_variance: 0.1,
        }
    }
}

impl Example1Config {
    fn validate(&self) -> Result<()> {
        let m = self.variances.len();
        if m == 0 || self.weights.len() != m {
            return Err(Error::InvalidConfiguration("need matching, nonempty mixture weights and variances".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfiguration(format!("weights {:?} not on the simplex", self.weights)));
        }
        if self.variances.iter().any(|&v| !(v > 0.0)) || !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidConfiguration("variances must be positive".into()));
        }
        Ok(())
    }

    /// Mean exogenous variance `Σ π_m τ_m`.
    pub fn mean_variance(&self) -> f64 {
        self.weights.iter().zip(&self.variances).map(|(w, v)| w * v).sum()
    }
}

/// Draws from the Example 1 model with their component labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Example1Sample {
    pub z: Vec<[f64; 2]>,
    pub w: Vec<[f64; 2]>,
    pub components: Vec<[usize; 2]>,
}

pub fn example1_sample<R: Rng + ?Sized>(config: &Example1Config, rng: &mut R) -> Result<Example1Sample> {
    config.validate()?;
    let pick = |rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, w) in config.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return c;
            }
        }
        config.weights.len() - 1
    };
    let e_sd = config.noise_variance.sqrt();
    let mut out = Example1Sample { z: Vec::new(), w: Vec::new(), components: Vec::new() };
    for _ in 0..config.n {
        let c = [pick(rng), pick(rng)];
        let z1 = config.variances[c[0]].sqrt() * standard_normal(rng);
        let z2 = z1 + config.variances[c[1]].sqrt() * standard_normal(rng);
        out.z.push([z1, z2]);
        out.w.push([z1 + e_sd * standard_normal(rng), z2 + e_sd * standard_normal(rng)]);
        out.components.push(c);
    }
    Ok(out)
}

/// OLS slopes (with intercept) of `W₂` on `W₁` and of `W₁` on `W₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSlopes {
    pub causal: f64,
    pub anti_causal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSlopes {
    /// Component of `ε₁` and of `ε₂`.
    pub components: [usize; 2],
    pub size: usize,
    pub slopes: DirectionSlopes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Demo {
    pub pooled: DirectionSlopes,
    /// One entry per component pair with at least two observations.
    pub groups: Vec<GroupSlopes>,
}

impl Example1Demo {
    /// Range of the group slopes in the causal and anti-causal directions.
    pub fn spread(&self) -> DirectionSlopes {
        let range = |f: fn(&DirectionSlopes) -> f64| {
            let v = self.groups.iter().map(|g| f(&g.slopes));
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
            if self.groups.is_empty() {
                0.0
            } else {
                hi - lo
            }
        };
        DirectionSlopes {
            causal: range(|s| s.causal),
            anti_causal: range(|s| s.anti_causal),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            group: &'a str,
            direction: &'a str,
            size: usize,
            slope: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        let mut emit = |group: &str, size: usize, s: &DirectionSlopes| -> Result<()> {
            w.serialize(Row { group, direction: "causal", size, slope: s.causal })?;
            w.serialize(Row { group, direction: "anti-causal", size, slope: s.anti_causal })?;
            Ok(())
        };
        let total = self.groups.iter().map(|g| g.size).sum();
        emit("pooled", total, &self.pooled)?;
        let m = self.groups.iter().map(|g| g.components[1] + 1).max().unwrap_or(1);
        for g in &self.groups {
            let label = format!("C{}", g.components[0] * m + g.components[1] + 1);
            emit(&label, g.size, &g.slopes)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn slopes(points: &[[f64; 2]]) -> DirectionSlopes {
    let n = points.len() as f64;
    let (m1, m2) = points.iter().fold((0.0, 0.0), |(a, b), w| (a + w[0] / n, b + w[1] / n));
    let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
    for w in points {
        let (d1, d2) = (w[0] - m1, w[1] - m2);
        s11 += d1 * d1;
        s22 += d2 * d2;
        s12 += d1 * d2;
    }
    DirectionSlopes {
        causal: s12 / s11,
        anti_causal: s12 / s22,
    }
}

/// Group-wise regressions by true component pair. Groups are listed as
/// `C₁, C₂, …` in the order `(ε₁ component, ε₂ component)`.
pub fn example1_demo<R: Rng + ?Sized>(config: &Example1Config, rng: &mut R) -> Result<Example1Demo> {
    let sample = example1_sample(config, rng)?;
    if sample.w.len() < 2 {
        return Err(Error::InvalidConfiguration("need at least two observations".into()));
    }
    let m = config.variances.len();
    let mut groups = Vec::new();
    for c1 in 0..m {
        for c2 in 0..m {
            let members: Vec<[f64; 2]> = sample
                .w
                .iter()
                .zip(&sample.components)
                .filter(|(_, c)| **c == [c1, c2])
                .map(|(w, _)| *w)
                .collect();
            if members.len() >= 2 {
                groups.push(GroupSlopes {
                    components: [c1, c2],
                    size: members.len(),
                    slopes: slopes(&members),
                });
            }
        }
    }
    Ok(Example1Demo { pooled: slopes(&sample.w), groups })
}

/// Functional version of Example 1 with graph `0 -> 1` and `K = 1`: curve
/// `(i, j)` is `Z_ij φ(t) + noise` on an even grid of `d` points, with
/// `φ(t) = √2 sin(πt)`. The per-point noise variance is `d ×
/// noise_variance`, so the least-squares score of each curve carries
/// measurement error of variance about `noise_variance`, as in the scalar
/// model.
pub fn example1_dataset<R: Rng + ?Sized>(config: &Example1Config, d: usize, rng: &mut R) -> Result<(FunctionalDataset, Dag)> {
    if d < 2 {
        return Err(Error::InvalidConfiguration(format!("grid size {d} below 2")));
    }
    let noiseless = Example1Config { noise_variance: 0.0, ..config.clone() };
    let sample = example1_sample(&noiseless, rng)?;
    let grid = even_grid(d);
    let phi: Vec<f64> = grid.iter().map(|t| std::f64::consts::SQRT_2 * (std::f64::consts::PI * t).sin()).collect();
    let sd = (d as f64 * config.noise_variance).sqrt();
    let mut curves = Vec::with_capacity(2 * config.n);
    for z in &sample.z {
        for zj in z {
            let values = phi.iter().map(|f| zj * f + sd * standard_normal(rng)).collect();
            curves.push(Curve::new(grid.clone(), values)?);
        }
    }
    let subjects = (1..=config.n).map(|i| format!("s{i}")).collect();
    let dataset = FunctionalDataset::new(default_labels(2), subjects, curves)?;
    Ok((dataset, Dag::from_edges(2, &[(0, 1)])?))
}

/// Inputs of the Gaussian counter-example: the causal model `1 -> 2`
/// with effect `b`, exogenous variances `τ₁, τ₂`, measurement variances
/// `σ₁, σ₂`, and the freely chosen anti-causal `τ₁', σ₁'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2Params<T> {
    pub b: T,
    pub tau1: T,
    pub tau2: T,
    pub sigma1: T,
    pub sigma2: T,
    pub tau1_prime: T,
    pub sigma1_prime: T,
}

/// Matching anti-causal parameters and both implied covariance matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2Verdict<T> {
    pub b_prime: T,
    pub tau2_prime: T,
    pub sigma2_prime: T,
    pub causal_covariance: [[T; 2]; 2],
    pub anti_causal_covariance: [[T; 2]; 2],
    /// Largest absolute entry-wise difference of the two covariances.
    pub max_difference: T,
}

/// Builds the anti-causal parameterization reproducing the causal Gaussian
/// distribution. Exact for exact scalar types.
pub fn example2_check<T>(params: &Example2Params<T>) -> Result<Example2Verdict<T>>
where
    T: Clone + Num + Signed + PartialOrd + Debug,
{
    let Example2Params { b, tau1, tau2, sigma1, sigma2, tau1_prime, sigma1_prime } = params.clone();
    let zero = T::zero();
    let named = [("tau1", &tau1), ("tau2", &tau2), ("sigma1", &sigma1), ("sigma2", &sigma2), ("tau1'", &tau1_prime), ("sigma1'", &sigma1_prime)];
    if let Some((name, v)) = named.iter().find(|(_, v)| **v <= zero) {
        return Err(Error::Infeasible(format!("{name} = {v:?} must be positive")));
    }
    if b.is_zero() {
        return Err(Error::Infeasible("b = 0 leaves no causal effect to reverse".into()));
    }
    let b2 = b.clone() * b.clone();
    let gap = tau1.clone() + sigma1.clone() - tau1_prime.clone() - sigma1_prime.clone();
    if gap <= zero {
        return Err(Error::Infeasible(format!(
            "tau1' + sigma1' must stay below tau1 + sigma1; remaining gap {gap:?}"
        )));
    }
    let b_prime = gap.clone() / (b.clone() * tau1.clone());
    let tau2_prime = b2.clone() * tau1.clone() * tau1.clone() / gap;
    let var2 = b2.clone() * tau1.clone() + tau2 + sigma2;
    let sigma2_prime = var2.clone() - tau2_prime.clone();
    if sigma2_prime <= zero {
        return Err(Error::Infeasible(format!(
            "sigma2' = {sigma2_prime:?} is not positive; tau1' + sigma1' must lie strictly below \
             tau1 + sigma1 - b^2 tau1^2 / (b^2 tau1 + tau2 + sigma2)"
        )));
    }

    let cov12 = b * tau1.clone();
    let causal = [[tau1 + sigma1, cov12.clone()], [cov12, var2]];
    let anti12 = b_prime.clone() * tau2_prime.clone();
    let anti = [
        [b_prime.clone() * b_prime.clone() * tau2_prime.clone() + tau1_prime + sigma1_prime, anti12.clone()],
        [anti12, tau2_prime.clone() + sigma2_prime.clone()],
    ];
    let mut max_difference = zero;
    for r in 0..2 {
        for c in 0..2 {
            let d = (causal[r][c].clone() - anti[r][c].clone()).abs();
            if d > max_difference {
                max_difference = d;
            }
        }
    }
    Ok(Example2Verdict {
        b_prime,
        tau2_prime,
        sigma2_prime,
        causal_covariance: causal,
        anti_causal_covariance: anti,
        max_difference,
    })
}
