//! Simulation-based calibration: rank statistics of true parameters among
//! posterior draws, randomized PIT values, ECDF-difference curves, and
//! Monte Carlo simultaneous confidence bands.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use drbayes_core::prior::PriorSpec;
use drbayes_core::sim::SimModel;
use drbayes_core::{Scalar, Stream};
use drbayes_flows::ConditionalFlow;

use crate::error::{InferError, Result};

/// Anything that can produce posterior draws given a summary vector.
pub trait PosteriorSampler<F: Scalar>: Sync {
    fn theta_dim(&self) -> usize;
    fn sample_posterior(&self, s: &[F], m: usize, rng: &mut Stream) -> Result<Array2<F>>;
}

impl<F: Scalar> PosteriorSampler<F> for ConditionalFlow<F> {
    fn theta_dim(&self) -> usize {
        self.target_dim()
    }

    fn sample_posterior(&self, s: &[F], m: usize, rng: &mut Stream) -> Result<Array2<F>> {
        Ok(self.sample(s, m, rng)?)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbcConfig {
    /// Joint draws fromprior and simulator.
    pub n_sbc: usize,
    /// Posterior draws per joint draw; ranks lie in `0..=m_draws`.
    pub m_draws: usize,
    /// Simultaneous band coverage level.
    pub level: f64,
    /// Evaluation grid size for the ECDF difference.
    pub grid: usize,
}

impl Default for SbcConfig {
    fn default() -> Self {
        SbcConfig {
            n_sbc: 1000,
            m_draws: 100,
            level: 0.95,
            grid: 100,
        }
    }
}

/// Rank-based calibration diagnostics per parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbcResult {
    pub n_sbc: usize,
    pub m_draws: usize,
    pub level: f64,
    /// Interior evaluation grid on (0, 1).
    pub grid: Vec<f64>,
    /// Per-parameter ECDF difference curves on the grid.
    pub ecdf_diff: Vec<Vec<f64>>,
    /// Constant simultaneous band half-width.
    pub band: f64,
    /// Largest absolute ECDF deviation per parameter.
    pub max_dev: Vec<f64>,
    /// Whether each parameter's curve stays inside the band.
    pub pass: Vec<bool>,
    /// Raw ranks (row = SBC iteration, column = parameter).
    pub ranks: Vec<Vec<u32>>,
}

impl SbcResult {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }

    /// Export curves (`t,diff_theta0,...,band`) as CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.ecdf_diff.len()).map(|j| format!("diff_theta{j}")));
        header.push("band".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.grid.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            for curve in &self.ecdf_diff {
                row.push(format!("{:.16e}", curve[k]));
            }
            row.push(format!("{:.16e}", self.band));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn interior_grid(g: usize) -> Vec<f64> {
    (0..g).map(|k| (k as f64 + 1.0) / (g as f64 + 1.0)).collect()
}

fn max_ecdf_dev(sorted: &[f64], grid: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut dev: f64 = 0.0;
    let mut idx = 0usize;
    for &t in grid {
        while idx < sorted.len() && sorted[idx] <= t {
            idx += 1;
        }
        dev = dev.max((idx as f64 / n - t).abs());
    }
    dev
}

fn ecdf_diff_curve(sorted: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sorted.len() as f64;
    let mut out = Vec::with_capacity(grid.len());
    let mut idx = 0usize;
    for &t in grid {
        while idx < sorted.len() && sorted[idx] <= t {
            idx += 1;
        }
        out.push(idx as f64 / n - t);
    }
    out
}

/// Monte Carlo simultaneous band: simulate uniform rank sets, take the
/// level quantile of the maximal absolute ECDF deviation over the grid.
pub fn simultaneous_band(n_sbc: usize, grid_size: usize, level: f64, rng: &Stream) -> Result<f64> {
    if n_sbc == 0 {
        return Err(InferError::InvalidConfig("n_sbc must be positive".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(InferError::InvalidConfig("level must lie in (0,1)".into()));
    }
    let grid = interior_grid(grid_size);
    let sims = 10_000usize;
    let mut devs: Vec<f64> = (0..sims)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive_index(i as u64);
            let mut u: Vec<f64> = (0..n_sbc).map(|_| r.u01()).collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            max_ecdf_dev(&u, &grid)
        })
        .collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((level * sims as f64).ceil() as usize).min(sims) - 1;
    Ok(devs[k])
}

/// Run simulation-based calibration of a posterior sampler against the
/// joint model: draw `(theta, S)` pairs, rank each true parameter among
/// posterior draws, and compare the randomized-PIT ECDF to uniform under
/// a simultaneous band.
pub fn run_sbc<F: Scalar>(
    sampler: &dyn PosteriorSampler<F>,
    model: &dyn SimModel<F>,
    prior: &PriorSpec<F>,
    cfg: &SbcConfig,
    rng: &Stream,
) -> Result<SbcResult> {
    if cfg.n_sbc == 0 || cfg.m_draws == 0 {
        return Err(InferError::InvalidConfig(
            "n_sbc and m_draws must be positive".into(),
        ));
    }
    let p = sampler.theta_dim();
    if p != model.param_dim() {
        return Err(InferError::InvalidConfig(
            "sampler and model disagree on parameter dimension".into(),
        ));
    }
    let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..cfg.n_sbc)
        .into_par_iter()
        .map(|i| {
            let row = rng.derive_index(i as u64);
            let theta = prior.sample(&mut row.derive("theta"));
            let s = model.simulate(&theta, &mut row.derive("sim"))?;
            let draws = sampler.sample_posterior(&s, cfg.m_draws, &mut row.derive("post"))?;
            let mut jitter = row.derive("pit");
            let mut ranks = Vec::with_capacity(p);
            let mut pits = Vec::with_capacity(p);
            for j in 0..p {
                let rank = draws
                    .column(j)
                    .iter()
                    .filter(|&&d| d < theta[j])
                    .count() as u32;
                ranks.push(rank);
                // randomized PIT: exactly uniform when the sampler matches
                // the true posterior
                pits.push((rank as f64 + jitter.u01()) / (cfg.m_draws as f64 + 1.0));
            }
            Ok((ranks, pits))
        })
        .collect::<Result<_>>()?;
    let grid = interior_grid(cfg.grid);
    let band = simultaneous_band(cfg.n_sbc, cfg.grid, cfg.level, &rng.derive("band"))?;
    let mut ecdf_diff = Vec::with_capacity(p);
    let mut max_dev = Vec::with_capacity(p);
    let mut pass = Vec::with_capacity(p);
    for j in 0..p {
        let mut u: Vec<f64> = rows.iter().map(|(_, pits)| pits[j]).collect();
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let curve = ecdf_diff_curve(&u, &grid);
        let dev = curve.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        pass.push(dev <= band);
        max_dev.push(dev);
        ecdf_diff.push(curve);
    }
    Ok(SbcResult {
        n_sbc: cfg.n_sbc,
        m_draws: cfg.m_draws,
        level: cfg.level,
        grid,
        ecdf_diff,
        band,
        max_dev,
        pass,
        ranks: rows.into_iter().map(|(r, _)| r).collect(),
    })
}
