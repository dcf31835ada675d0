//! Diagonal-covariance Gaussian mixture fitted by expectation-maximization.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_stream;

const INIT_STREAM: u64 = 4;
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iterations: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            components: 5,
            max_iterations: 200,
            tolerance: 1e-6,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGmm {
    pub weights: Vec<f64>,
    /// `k x d`
    pub means: Array2<f64>,
    /// `k x d`, every entry at least the variance floor.
    pub variances: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub gmm: LatentGmm,
    /// Mean per-point log-likelihood of each successive parameter state,
    /// starting with the initialization.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl LatentGmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_density(&self, c: usize, x: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
            acc += -0.5 * ((2.0 * PI * v).ln() + (xi - m) * (xi - m) / v);
        }
        acc
    }

    /// Per-point log responsibilities (unnormalized: `log w_c + log N_c(x)`)
    /// and the log-sum-exp over components.
    fn joint_log(&self, x: ArrayView1<f64>, out: &mut [f64]) -> f64 {
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.weights[c].ln() + self.component_log_density(c, x);
        }
        log_sum_exp(out)
    }

    pub fn mean_log_likelihood(&self, data: &Array2<f64>) -> f64 {
        let mut buf = vec![0.0; self.components()];
        let total: f64 = data.rows().into_iter().map(|r| self.joint_log(r, &mut buf)).sum();
        total / data.nrows() as f64
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.components() - 1;
        for (c, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = c;
                break;
            }
        }
        let mean = self.means.row(comp);
        let var = self.variances.row(comp);
        Array1::from_shape_fn(mean.len(), |j| {
            let e: f64 = rng.sample(StandardNormal);
            mean[j] + var[j].sqrt() * e
        })
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Farthest-point seeding: a random first centre, then repeatedly the point
/// farthest from every chosen centre (lowest index on ties).
fn farthest_point_centres(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.nrows();
    let first = rng.random_range(0..n);
    let mut centres = vec![first];
    let sq = |a: ArrayView1<f64>, b: ArrayView1<f64>| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(data.row(i), data.row(first))).collect();
    while centres.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        centres.push(best);
        for i in 0..n {
            nearest[i] = nearest[i].min(sq(data.row(i), data.row(best)));
        }
    }
    centres
}

/// Fits a `k`-component mixture with default settings.
pub fn fit_gmm(latents: &Array2<f64>, k: usize, seed: u64) -> Result<GmmFit> {
    fit_gmm_with(
        latents,
        &GmmConfig {
            components: k,
            ..GmmConfig::default()
        },
        seed,
    )
}

pub fn fit_gmm_with(data: &Array2<f64>, config: &GmmConfig, seed: u64) -> Result<GmmFit> {
    let (n, d) = data.dim();
    let k = config.components;
    if n == 0 {
        return Err(Error::Gmm("no latent rows to fit".into()));
    }
    if k < 1 {
        return Err(Error::Gmm("need at least one component".into()));
    }
    if n < k {
        return Err(Error::Gmm(format!("{n} rows cannot support {k} components")));
    }
    let floor = config.variance_floor;

    let mut rng = seeded_stream(seed, INIT_STREAM);
    let centres = farthest_point_centres(data, k, &mut rng);
    let global_var = data.var_axis(Axis(0), 0.0).mapv(|v| v.max(floor));
    let mut gmm = LatentGmm {
        weights: vec![1.0 / k as f64; k],
        means: data.select(Axis(0), &centres),
        variances: Array2::from_shape_fn((k, d), |(_, j)| global_var[j]),
    };

    let mut resp = Array2::<f64>::zeros((n, k));
    let mut trace = Vec::new();
    let mut converged = false;
    let mut buf = vec![0.0; k];
    for iteration in 0..=config.max_iterations {
        // E-step
        let mut total = 0.0;
        for (i, row) in data.rows().into_iter().enumerate() {
            let lse = gmm.joint_log(row, &mut buf);
            total += lse;
            for c in 0..k {
                resp[[i, c]] = (buf[c] - lse).exp();
            }
        }
        let ll = total / n as f64;
        if let Some(&prev) = trace.last() {
            if ll - prev < config.tolerance {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iteration == config.max_iterations {
            break;
        }

        // M-step
        let nk = resp.sum_axis(Axis(0));
        let raw_weights: Vec<f64> = nk.iter().map(|&c| (c / n as f64).max(MIN_WEIGHT)).collect();
        let wsum: f64 = raw_weights.iter().sum();
        gmm.weights = raw_weights.iter().map(|w| w / wsum).collect();
        for c in 0..k {
            if nk[c] <= 0.0 {
                continue;
            }
            let r = resp.column(c);
            let mean = r.dot(data) / nk[c];
            let mut var = Array1::<f64>::zeros(d);
            for (i, row) in data.rows().into_iter().enumerate() {
                for j in 0..d {
                    let diff = row[j] - mean[j];
                    var[j] += r[i] * diff * diff;
                }
            }
            var.mapv_inplace(|v| (v / nk[c]).max(floor));
            gmm.means.row_mut(c).assign(&mean);
            gmm.variances.row_mut(c).assign(&var);
        }
    }

    Ok(GmmFit {
        gmm,
        log_likelihood: trace,
        converged,
    })
}
