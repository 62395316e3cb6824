//! Parametric Poisson problem `-Δu = f0` on `[0,1]² x [0,h]` with zero
//! Dirichlet boundary, discretized by the 7-point stencil and solved by
//! conjugate gradients.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{Dataset, DatasetManifest, GridInfo, Sample, FORMAT_VERSION};
use super::normalize::normalize_fields;
use super::split::{split_dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub name: String,
    pub n_samples: usize,
    /// Interior nodes per axis.
    pub n: usize,
    pub f0_range: [f64; 2],
    pub h_range: [f64; 2],
    pub seed: u64,
    /// When set, each sample carries a load history of this many steps whose
    /// final value is `f0`; `f0` then leaves the parameter vector.
    pub load_steps: Option<usize>,
    /// Store min-max statistics of the default training split in the manifest.
    pub normalized: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "poisson".into(),
            n_samples: 200,
            n: 17,
            f0_range: [0.5, 2.0],
            h_range: [0.5, 1.5],
            seed: 0,
            load_steps: None,
            normalized: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 9 {
            return Err(Error::config(format!("synthetic grid needs n >= 9 per axis, got {}", self.n)));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be positive"));
        }
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ok(self.f0_range) || !ok(self.h_range) || self.h_range[0] <= 0.0 {
            return Err(Error::config("parameter ranges must be finite, ordered, and h > 0"));
        }
        if self.load_steps == Some(0) {
            return Err(Error::config("load_steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub n: usize,
    pub h: f64,
    pub f0: f64,
    /// Interior values, index `(i * n + j) * n + k`, z fastest.
    pub u: Vec<f64>,
    pub iterations: usize,
}

impl PoissonSolution {
    pub fn spacing(&self) -> [f64; 3] {
        spacing(self.n, self.h)
    }

    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let s = self.spacing();
        [(i + 1) as f64 * s[0], (j + 1) as f64 * s[1], (k + 1) as f64 * s[2]]
    }

    /// `‖A u - f0‖∞` for the discrete operator.
    pub fn residual_inf(&self) -> f64 {
        let au = apply(self.n, self.spacing(), &self.u);
        au.iter().map(|v| (v - self.f0).abs()).fold(0.0, f64::max)
    }
}

fn spacing(n: usize, h: f64) -> [f64; 3] {
    let d = (n + 1) as f64;
    [1.0 / d, 1.0 / d, h / d]
}

/// Matrix-free negative Laplacian with zero boundary values.
fn apply(n: usize, s: [f64; 3], u: &[f64]) -> Vec<f64> {
    let w = s.map(|d| 1.0 / (d * d));
    let diag = 2.0 * (w[0] + w[1] + w[2]);
    let at = |i: isize, j: isize, k: isize| -> f64 {
        let m = n as isize;
        if i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m {
            0.0
        } else {
            u[((i * m + j) * m + k) as usize]
        }
    };
    let mut out = vec![0.0; u.len()];
    for i in 0..n as isize {
        for j in 0..n as isize {
            for k in 0..n as isize {
                let c = ((i * n as isize + j) * n as isize + k) as usize;
                out[c] = diag * u[c]
                    - w[0] * (at(i - 1, j, k) + at(i + 1, j, k))
                    - w[1] * (at(i, j - 1, k) + at(i, j + 1, k))
                    - w[2] * (at(i, j, k - 1) + at(i, j, k + 1));
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const TOL: f64 = 1e-8;

/// Solves on an `n^3` interior grid to `‖A u - f0‖₂ < 1e-8`.
pub fn solve_poisson(n: usize, h: f64, f0: f64) -> Result<PoissonSolution> {
    if n == 0 || !(h > 0.0) || !f0.is_finite() {
        return Err(Error::config("poisson solve needs n > 0, h > 0 and finite f0"));
    }
    let s = spacing(n, h);
    let len = n * n * n;
    let b = vec![f0; len];
    let mut u = vec![0.0; len];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 10 * len;
    let mut it = 0;
    while rr.sqrt() >= TOL {
        if it >= max_iter {
            return Err(Error::Numerical(format!(
                "conjugate gradients did not converge in {max_iter} iterations (residual {:.3e})",
                rr.sqrt()
            )));
        }
        let ap = apply(n, s, &p);
        let alpha = rr / dot(&p, &ap);
        for ((ui, ri), (pi, api)) in u.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *ui += alpha * pi;
            *ri -= alpha * api;
        }
        it += 1;
        if it % 50 == 0 {
            // refresh against drift of the recursive residual
            let au = apply(n, s, &u);
            for (ri, (bi, ai)) in r.iter_mut().zip(b.iter().zip(&au)) {
                *ri = bi - ai;
            }
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(PoissonSolution {
        n,
        h,
        f0,
        u,
        iterations: it,
    })
}

/// Smooth load history of `t` steps ending at 1: `τ^a (1 + b sin πτ)`.
pub fn load_profile(t: usize, a: f64, b: f64) -> Vec<f64> {
    (0..t)
        .map(|s| {
            let tau = if t == 1 { 1.0 } else { s as f64 / (t - 1) as f64 };
            tau.powf(a) * (1.0 + b * (std::f64::consts::PI * tau).sin())
        })
        .collect()
}

struct Draw {
    f0: f64,
    h: f64,
    a: f64,
    b: f64,
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Generates the dataset under `out` and returns its manifest.
pub fn gen_synthetic(cfg: &SynthConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<Draw> = (0..cfg.n_samples)
        .map(|_| Draw {
            f0: draw(&mut rng, cfg.f0_range[0], cfg.f0_range[1]),
            h: draw(&mut rng, cfg.h_range[0], cfg.h_range[1]),
            a: draw(&mut rng, 0.5, 2.0),
            b: draw(&mut rng, -0.3, 0.3),
        })
        .collect();
    let n = cfg.n;
    let samples = par::map(Exec::available(), &draws, |d| -> Result<Sample> {
        let sol = solve_poisson(n, d.h, d.f0)?;
        let mut coords = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    coords.push(sol.coord(i, j, k).map(|v| v as f32));
                }
            }
        }
        let (params, loads) = match cfg.load_steps {
            None => (vec![d.f0 as f32, d.h as f32], Vec::new()),
            Some(t) => (
                vec![d.h as f32],
                load_profile(t, d.a, d.b).iter().map(|v| (v * d.f0) as f32).collect(),
            ),
        };
        Ok(Sample {
            coords,
            params,
            loads,
            field: sol.u.iter().map(|&v| v as f32).collect(),
            channels: 1,
            edges: None,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let normalization = if cfg.normalized && cfg.n_samples >= 10 {
        let split = split_dataset(cfg.n_samples, &SplitSpec::default())?;
        Some(normalize_fields(&samples, &split.train)?)
    } else {
        None
    };
    let manifest = DatasetManifest {
        name: cfg.name.clone(),
        format_version: FORMAT_VERSION,
        n_samples: cfg.n_samples,
        geo_dim: if cfg.load_steps.is_some() { 1 } else { 2 },
        load_dim: cfg.load_steps.unwrap_or(0),
        channels: 1,
        grid: GridInfo {
            shape: [n.min(32); 3],
            lo: [0.0; 3],
            hi: [1.0, 1.0, cfg.h_range[1]],
        },
        normalized: cfg.normalized,
        normalization,
    };
    Dataset::write(out, &manifest, &samples)?;
    Ok(manifest)
}
