//! Robust-Bayes posterior computation: train posterior/likelihood flow
//! pairs under both bound priors, estimate the posterior class size from
//! the cancellation identity, and build marginal posterior bound curves.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use drbayes_core::grid::Rect;
use drbayes_core::kde;
use drbayes_core::prior::PriorSpec;
use drbayes_core::sim::{build_dataset, SimDataset, SimModel};
use drbayes_core::{Scalar, Stream};
use drbayes_flows::flow::FlowConfig;
use drbayes_flows::{train_joint, ConditionalFlow, LossTrace, TrainConfig};

use crate::error::{InferError, Result};

/// Elicited prior density ratio class: normalized bound priors and the
/// integrated-mass ratio `r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorClassSpec<F> {
    pub lower: PriorSpec<F>,
    pub upper: PriorSpec<F>,
    pub r: F,
}

impl<F: Scalar> PriorClassSpec<F> {
    pub fn validate(&self) -> Result<()> {
        self.lower.validate()?;
        self.upper.validate()?;
        if self.lower.dim() != self.upper.dim() {
            return Err(InferError::InvalidConfig(
                "bound priors disagree on dimension".into(),
            ));
        }
        if !(self.r > F::zero() && self.r.is_finite()) {
            return Err(InferError::InvalidConfig("class ratio must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    /// Rectangle where both bound priors are positive, used to keep the
    /// anchor point of the cancellation identity inside every density's
    /// support.
    pub fn joint_support(&self) -> Result<Rect<F>> {
        let a = self.lower.support_rect()?;
        let b = self.upper.support_rect()?;
        let lo: Vec<F> = a
            .lo()
            .iter()
            .zip(b.lo())
            .map(|(x, y)| x.max(*y))
            .collect();
        let hi: Vec<F> = a
            .hi()
            .iter()
            .zip(b.hi())
            .map(|(x, y)| x.min(*y))
            .collect();
        Rect::new(lo, hi).map_err(InferError::from)
    }

    /// Clip a point into the interior of the joint support, staying 1e-6
    /// of each width away from the faces.
    pub fn clip_into_support(&self, theta: &[F]) -> Result<Vec<F>> {
        let rect = self.joint_support()?;
        let eps = F::of(1e-6);
        Ok(theta
            .iter()
            .zip(rect.lo().iter().zip(rect.hi()))
            .map(|(t, (lo, hi))| {
                let w = *hi - *lo;
                t.max(*lo + eps * w).min(*hi - eps * w)
            })
            .collect())
    }
}

/// The four flows of a fitted class: posterior and likelihood estimators
/// under each bound prior.
pub struct BoundFlows<F> {
    pub class: PriorClassSpec<F>,
    pub posterior_l: ConditionalFlow<F>,
    pub likelihood_l: ConditionalFlow<F>,
    pub posterior_u: ConditionalFlow<F>,
    pub likelihood_u: ConditionalFlow<F>,
    pub traces: FitTraces,
    pub n_sims: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTraces {
    pub posterior_l: LossTrace,
    pub likelihood_l: LossTrace,
    pub posterior_u: LossTrace,
    pub likelihood_u: LossTrace,
}

/// Simulate training sets under both bound priors and train the four
/// flows. The lower- and upper-prior pairs are independent jobs and run
/// concurrently; results do not depend on thread count.
pub fn fit_bound_flows<F: Scalar>(
    model: &dyn SimModel<F>,
    class: &PriorClassSpec<F>,
    n_sims: usize,
    flow_cfg: &FlowConfig,
    train_cfg: &TrainConfig,
    rng: &Stream,
) -> Result<BoundFlows<F>> {
    let data_l = build_dataset(model, &class.lower, "lower", n_sims, &rng.derive("sims-lower"))?;
    let data_u = build_dataset(model, &class.upper, "upper", n_sims, &rng.derive("sims-upper"))?;
    fit_bound_flows_from_datasets(class, &data_l, &data_u, flow_cfg, train_cfg, rng)
}

/// Train the four flows on pre-built simulated datasets (one per bound
/// prior). The two pairs are independent jobs and run concurrently;
/// results do not depend on thread count.
pub fn fit_bound_flows_from_datasets<F: Scalar>(
    class: &PriorClassSpec<F>,
    data_lower: &SimDataset<F>,
    data_upper: &SimDataset<F>,
    flow_cfg: &FlowConfig,
    train_cfg: &TrainConfig,
    rng: &Stream,
) -> Result<BoundFlows<F>> {
    class.validate()?;
    for data in [data_lower, data_upper] {
        if data.theta.ncols() != class.dim() {
            return Err(InferError::InvalidConfig(format!(
                "prior dimension {} does not match dataset parameter dimension {}",
                class.dim(),
                data.theta.ncols()
            )));
        }
    }
    if data_lower.summaries.ncols() != data_upper.summaries.ncols() {
        return Err(InferError::InvalidConfig(
            "datasets disagree on summary dimension".into(),
        ));
    }
    let fit_side = |data: &SimDataset<F>,
                    label: &str|
     -> Result<(ConditionalFlow<F>, ConditionalFlow<F>, LossTrace, LossTrace)> {
        let p = data.theta.ncols();
        let d = data.summaries.ncols();
        let mut post = ConditionalFlow::new(
            p,
            d,
            flow_cfg,
            &mut rng.derive(&format!("init-post-{label}")),
        )?;
        let mut lik = ConditionalFlow::new(
            d,
            p,
            flow_cfg,
            &mut rng.derive(&format!("init-lik-{label}")),
        )?;
        let mut cfg = *train_cfg;
        cfg.seed = rng.derive(&format!("train-{label}")).next_seed();
        let (tp, tl) = train_joint(&mut post, &mut lik, data, &cfg)?;
        Ok((post, lik, tp, tl))
    };
    let (lower_fit, upper_fit) = rayon::join(
        || fit_side(data_lower, "lower"),
        || fit_side(data_upper, "upper"),
    );
    let (posterior_l, likelihood_l, trace_pl, trace_ll) = lower_fit?;
    let (posterior_u, likelihood_u, trace_pu, trace_lu) = upper_fit?;
    Ok(BoundFlows {
        class: class.clone(),
        posterior_l,
        likelihood_l,
        posterior_u,
        likelihood_u,
        traces: FitTraces {
            posterior_l: trace_pl,
            likelihood_l: trace_ll,
            posterior_u: trace_pu,
            likelihood_u: trace_lu,
        },
        n_sims: data_lower.len(),
    })
}

/// Estimated posterior class ratio and the anchor point it was evaluated
/// at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RTildeEstimate<F> {
    pub r_tilde: F,
    pub theta_star: Vec<F>,
}

/// Posterior mean of the upper-bound posterior flow at `s`, clipped into
/// the joint prior support.
pub fn posterior_mean_upper<F: Scalar>(
    flows: &BoundFlows<F>,
    s: &[F],
    m_mean: usize,
    rng: &mut Stream,
) -> Result<Vec<F>> {
    let draws = flows.posterior_u.sample(s, m_mean, rng)?;
    let mean: Vec<F> = (0..draws.ncols())
        .map(|j| draws.column(j).sum() / F::of(m_mean as f64))
        .collect();
    flows.class.clip_into_support(&mean)
}

/// Log of the class-size statistic at an anchor point: the likelihood
/// cancels, leaving prior and posterior density ratios.
pub fn log_r_tilde_at<F: Scalar>(
    flows: &BoundFlows<F>,
    theta: &[F],
    s: &[F],
) -> Result<F> {
    let lp_l = flows.posterior_l.log_density(theta, s)?;
    let lp_u = flows.posterior_u.log_density(theta, s)?;
    let prior_l = flows.class.lower.log_pdf(theta);
    let prior_u = flows.class.upper.log_pdf(theta);
    let out = flows.class.r.ln() + prior_u + lp_l - prior_l - lp_u;
    if !out.is_finite() {
        return Err(InferError::NonFiniteRatio(format!(
            "log r-tilde at theta {:?}: prior logs ({}, {}), posterior logs ({}, {})",
            theta.iter().map(|v| v.f64()).collect::<Vec<_>>(),
            prior_l.f64(),
            prior_u.f64(),
            lp_l.f64(),
            lp_u.f64()
        )));
    }
    Ok(out)
}

/// Estimate `r(S)` at a summary value: anchor at the posterior mean of the
/// upper-bound flow and apply the cancellation identity.
pub fn estimate_r_tilde<F: Scalar>(
    flows: &BoundFlows<F>,
    s: &[F],
    m_mean: usize,
    rng: &mut Stream,
) -> Result<RTildeEstimate<F>> {
    let theta_star = posterior_mean_upper(flows, s, m_mean, rng)?;
    let log_r = log_r_tilde_at(flows, &theta_star, s)?;
    Ok(RTildeEstimate {
        r_tilde: log_r.exp(),
        theta_star,
    })
}

/// Spread of the ratio estimate across random posterior draws used as
/// anchor points; the exact statistic is anchor-independent, so a large
/// spread flags unreliable flows.
pub fn r_tilde_stability<F: Scalar>(
    flows: &BoundFlows<F>,
    s: &[F],
    n_anchors: usize,
    rng: &mut Stream,
) -> Result<(F, Vec<F>)> {
    let draws = flows.posterior_u.sample(s, n_anchors, rng)?;
    let mut values = Vec::with_capacity(n_anchors);
    for i in 0..n_anchors {
        let theta = flows.class.clip_into_support(&draws.row(i).to_vec())?;
        values.push(log_r_tilde_at(flows, &theta, s)?.exp());
    }
    let max = values.iter().cloned().fold(F::neg_infinity(), F::max);
    let min = values.iter().cloned().fold(F::infinity(), F::min);
    Ok((max / min, values))
}

/// One marginal posterior bound curve: the lower values are already
/// scaled by the inverse estimated class ratio; the upper values are a
/// normalized density estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalCurve<F> {
    pub grid: Vec<F>,
    pub lower: Vec<F>,
    pub upper: Vec<F>,
    pub bandwidth_lower: F,
    pub bandwidth_upper: F,
}

/// Trained-class posterior summary at one observed summary vector.
#[derive(Debug, Clone)]
pub struct PosteriorClassEstimate<F> {
    pub s_obs: Vec<F>,
    pub r_tilde: F,
    pub theta_star: Vec<F>,
    pub curves: Vec<MarginalCurve<F>>,
    pub samples_lower: Array2<F>,
    pub samples_upper: Array2<F>,
}

/// Kernel density estimates of every parameter marginal from posterior
/// flow samples under each bound prior, on shared per-parameter grids.
pub fn marginal_bound_curves<F: Scalar>(
    flows: &BoundFlows<F>,
    r_tilde: F,
    theta_star: &[F],
    s_obs: &[F],
    n_draws: usize,
    grids: Option<&[Vec<F>]>,
    rng: &mut Stream,
) -> Result<PosteriorClassEstimate<F>> {
    if !(r_tilde > F::zero()) {
        return Err(InferError::InvalidConfig(
            "r_tilde must be positive".into(),
        ));
    }
    let samples_lower = flows.posterior_l.sample(s_obs, n_draws, &mut rng.derive("draws-lower"))?;
    let samples_upper = flows.posterior_u.sample(s_obs, n_draws, &mut rng.derive("draws-upper"))?;
    let p = samples_lower.ncols();
    let mut curves = Vec::with_capacity(p);
    for j in 0..p {
        let ls: Vec<F> = samples_lower.column(j).to_vec();
        let us: Vec<F> = samples_upper.column(j).to_vec();
        let h_l = kde::silverman_bandwidth(&ls)?;
        let h_u = kde::silverman_bandwidth(&us)?;
        let grid = match grids {
            Some(gs) => gs
                .get(j)
                .cloned()
                .ok_or_else(|| InferError::GridMismatch(format!("no grid for parameter {j}")))?,
            None => {
                let mut combined = ls.clone();
                combined.extend_from_slice(&us);
                kde::default_grid(&combined, h_l.max(h_u), 512)
            }
        };
        let lower: Vec<F> = kde::evaluate_on(&ls, h_l, &grid)
            .into_iter()
            .map(|v| v / r_tilde)
            .collect();
        let upper = kde::evaluate_on(&us, h_u, &grid);
        curves.push(MarginalCurve {
            grid,
            lower,
            upper,
            bandwidth_lower: h_l,
            bandwidth_upper: h_u,
        });
    }
    Ok(PosteriorClassEstimate {
        s_obs: s_obs.to_vec(),
        r_tilde,
        theta_star: theta_star.to_vec(),
        curves,
        samples_lower,
        samples_upper,
    })
}

/// Event probability bounds for a one-dimensional interval event on one
/// parameter, from the tabulated bound curves.
pub fn posterior_event_bounds<F: Scalar>(
    estimate: &PosteriorClassEstimate<F>,
    axis: usize,
    lo: F,
    hi: F,
) -> Result<(F, F)> {
    let curve = estimate
        .curves
        .get(axis)
        .ok_or_else(|| InferError::GridMismatch(format!("no curve for parameter {axis}")))?;
    let g0 = curve.grid[0];
    let g1 = *curve.grid.last().unwrap();
    if lo < g0 || hi > g1 || !(lo < hi) {
        return Err(InferError::GridMismatch(format!(
            "event [{}, {}] outside curve grid [{}, {}]",
            lo.f64(),
            hi.f64(),
            g0.f64(),
            g1.f64()
        )));
    }
    let inside = |x: F| x >= lo && x <= hi;
    let mut l_in = F::zero();
    let mut l_out = F::zero();
    let mut u_in = F::zero();
    let mut u_out = F::zero();
    let half = F::of(0.5);
    for i in 1..curve.grid.len() {
        let dx = curve.grid[i] - curve.grid[i - 1];
        let lm = (curve.lower[i] + curve.lower[i - 1]) * half * dx;
        let um = (curve.upper[i] + curve.upper[i - 1]) * half * dx;
        // assign segments by midpoint
        if inside((curve.grid[i] + curve.grid[i - 1]) * half) {
            l_in += lm;
            u_in += um;
        } else {
            l_out += lm;
            u_out += um;
        }
    }
    let p_lower = if l_in + u_out > F::zero() {
        l_in / (l_in + u_out)
    } else {
        F::zero()
    };
    let p_upper = if u_in + l_out > F::zero() {
        u_in / (u_in + l_out)
    } else {
        F::zero()
    };
    Ok((p_lower, p_upper))
}

impl<F: Scalar> PosteriorClassEstimate<F> {
    /// Write one `theta_j,lower,upper` CSV per parameter into `dir`.
    pub fn save_curves(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (j, curve) in self.curves.iter().enumerate() {
            let mut w = std::io::BufWriter::new(std::fs::File::create(
                dir.join(format!("curve_theta{j}.csv")),
            )?);
            writeln!(w, "theta_j,lower,upper")?;
            for i in 0..curve.grid.len() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    curve.grid[i].f64(),
                    curve.lower[i].f64(),
                    curve.upper[i].f64()
                )?;
            }
        }
        Ok(())
    }

    /// Metadata JSON: the estimated ratio, anchor point, and observed
    /// summaries.
    pub fn save_metadata(&self, path: &Path, seed: u64) -> Result<()> {
        #[derive(Serialize)]
        struct Meta {
            r_tilde: f64,
            theta_star: Vec<f64>,
            s_obs: Vec<f64>,
            n_draws: usize,
            seed: u64,
        }
        let meta = Meta {
            r_tilde: self.r_tilde.f64(),
            theta_star: self.theta_star.iter().map(|v| v.f64()).collect(),
            s_obs: self.s_obs.iter().map(|v| v.f64()).collect(),
            n_draws: self.samples_upper.nrows(),
            seed,
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| InferError::InvalidConfig(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Fraction of grid nodes where the scaled lower curve exceeds the
    /// upper curve (ordering violations from KDE noise).
    pub fn ordering_violation_rate(&self) -> f64 {
        let mut total = 0usize;
        let mut bad = 0usize;
        for curve in &self.curves {
            for (l, u) in curve.lower.iter().zip(&curve.upper) {
                total += 1;
                if *l > *u {
                    bad += 1;
                }
            }
        }
        bad as f64 / total.max(1) as f64
    }
}

/// L1 distance between two curves tabulated on (possibly different)
/// uniform grids, via linear interpolation onto the first grid.
pub fn curve_l1_distance<F: Scalar>(
    grid_a: &[F],
    vals_a: &[F],
    grid_b: &[F],
    vals_b: &[F],
) -> F {
    let interp = |g: &[F], v: &[F], x: F| -> F {
        if x <= g[0] || x >= *g.last().unwrap() {
            return F::zero();
        }
        let step = g[1] - g[0];
        let k = ((x - g[0]) / step).floor().f64() as usize;
        let k = k.min(g.len() - 2);
        let w = (x - g[k]) / step;
        v[k] * (F::one() - w) + v[k + 1] * w
    };
    let mut acc = F::zero();
    for i in 1..grid_a.len() {
        let x = (grid_a[i] + grid_a[i - 1]) * F::of(0.5);
        let dx = grid_a[i] - grid_a[i - 1];
        let a = (vals_a[i] + vals_a[i - 1]) * F::of(0.5);
        let b = interp(grid_b, vals_b, x);
        acc += (a - b).abs() * dx;
    }
    acc
}

/// Area between the upper curve and the scaled lower curve where the
/// ordering holds (the visible "ambiguity gap" of a marginal).
pub fn gap_area<F: Scalar>(curve: &MarginalCurve<F>) -> F {
    let mut acc = F::zero();
    for i in 1..curve.grid.len() {
        let dx = curve.grid[i] - curve.grid[i - 1];
        let d0 = (curve.upper[i - 1] - curve.lower[i - 1]).max(F::zero());
        let d1 = (curve.upper[i] - curve.lower[i]).max(F::zero());
        acc += (d0 + d1) * F::of(0.5) * dx;
    }
    acc
}

/// Relative shape gap of a marginal: L1 distance between the normalized
/// lower and upper curves, removing the global `1 - 1/r` offset that all
/// coordinates share.
pub fn shape_gap<F: Scalar>(curve: &MarginalCurve<F>, r_tilde: F) -> F {
    let rescaled: Vec<F> = curve.lower.iter().map(|v| *v * r_tilde).collect();
    curve_l1_distance(&curve.grid, &rescaled, &curve.grid, &curve.upper)
}

/// Convenience: dataset for external consumers that need the same
/// simulated pairs the fit used.
pub fn simulate_training_set<F: Scalar>(
    model: &dyn SimModel<F>,
    prior: &PriorSpec<F>,
    label: &str,
    n_sims: usize,
    rng: &Stream,
) -> Result<SimDataset<F>> {
    Ok(build_dataset(model, prior, label, n_sims, &rng.derive(&format!("sims-{label}")))?)
}

