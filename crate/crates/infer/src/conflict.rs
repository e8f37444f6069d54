//! Prior-data and summary-conflict checks with Monte Carlo calibration:
//! single-bound predictive checks, the whole-class check based on the
//! class-size statistic, and the two summary-split checks with an ABC
//! conditional sampler.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use drbayes_core::prior::PriorSpec;
use drbayes_core::sim::SimModel;
use drbayes_core::{Scalar, Stream};
use drbayes_flows::ConditionalFlow;

use crate::amortized::{log_r_tilde_at, posterior_mean_upper, BoundFlows};
use crate::error::{InferError, Result};

/// Which bound prior a single-prior check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
}

impl BoundSide {
    pub fn label(self) -> &'static str {
        match self {
            BoundSide::Lower => "lower",
            BoundSide::Upper => "upper",
        }
    }
}

/// Result of one conflict check: the observed discrepancy, the replicate
/// discrepancies behind the Monte Carlo calibration, and the calibrated
/// tail probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub kind: String,
    pub observed_discrepancy: f64,
    pub tail_probability: f64,
    /// Replicates per side (one side for bound checks, two for class checks).
    pub replicates_per_side: usize,
    /// Joint simulation pool behind the ABC conditional sampler, if used.
    pub abc_pool: Option<usize>,
    /// The class ratio entering the calibration formula (`r` or the
    /// estimated `r(S_obs_A)`), if the check is class-level.
    pub r_used: Option<f64>,
    pub seed_label: String,
    /// Replicate discrepancies under the upper bound prior (or the single
    /// prior of a bound check).
    pub replicates_upper: Vec<f64>,
    /// Replicate discrepancies under the lower bound prior, for class
    /// checks.
    pub replicates_lower: Vec<f64>,
}

impl CheckReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Slim<'a> {
            kind: &'a str,
            observed_discrepancy: f64,
            tail_probability: f64,
            replicates_per_side: usize,
            abc_pool: Option<usize>,
            r_used: Option<f64>,
            seed_label: &'a str,
        }
        let slim = Slim {
            kind: &self.kind,
            observed_discrepancy: self.observed_discrepancy,
            tail_probability: self.tail_probability,
            replicates_per_side: self.replicates_per_side,
            abc_pool: self.abc_pool,
            r_used: self.r_used,
            seed_label: &self.seed_label,
        };
        let json = serde_json::to_string_pretty(&slim)
            .map_err(|e| InferError::InvalidConfig(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Replicate discrepancies as CSV (`side,discrepancy`).
    pub fn save_replicates_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "side,discrepancy")?;
        for d in &self.replicates_upper {
            writeln!(w, "upper,{d:.16e}")?;
        }
        for d in &self.replicates_lower {
            writeln!(w, "lower,{d:.16e}")?;
        }
        Ok(())
    }
}

/// Calibration formula of the class checks from indicator fractions:
/// `I_u / (I_u + r^{-1} I_l)`.
pub fn upper_probability_from_fractions<F: Scalar>(i_u: F, i_l: F, r: F) -> F {
    let denom = i_u + i_l / r;
    if denom > F::zero() {
        i_u / denom
    } else {
        F::one()
    }
}

/// Draws per anchor-point estimate inside discrepancy evaluations.
const M_MEAN: usize = 1000;

fn select_flows<F: Scalar>(
    flows: &BoundFlows<F>,
    side: BoundSide,
) -> (&ConditionalFlow<F>, &ConditionalFlow<F>, &PriorSpec<F>) {
    match side {
        BoundSide::Lower => (&flows.posterior_l, &flows.likelihood_l, &flows.class.lower),
        BoundSide::Upper => (&flows.posterior_u, &flows.likelihood_u, &flows.class.upper),
    }
}

/// Log prior predictive density of a summary under one bound prior, from
/// the Bayes-rule identity at an anchor point: the posterior mean of that
/// prior's posterior flow.
pub fn log_predictive_at<F: Scalar>(
    flows: &BoundFlows<F>,
    side: BoundSide,
    s: &[F],
    rng: &mut Stream,
) -> Result<F> {
    let (post, lik, prior) = select_flows(flows, side);
    let draws = post.sample(s, M_MEAN, rng)?;
    let mean: Vec<F> = (0..draws.ncols())
        .map(|j| draws.column(j).sum() / F::of(M_MEAN as f64))
        .collect();
    let theta = flows.class.clip_into_support(&mean)?;
    let out = prior.log_pdf(&theta) + lik.log_density(s, &theta)? - post.log_density(&theta, s)?;
    if !out.is_finite() {
        return Err(InferError::NonFiniteRatio(format!(
            "log predictive at s {:?}",
            s.iter().map(|v| v.f64()).collect::<Vec<_>>()
        )));
    }
    Ok(out)
}

/// Simulate `v` prior-predictive summary replicates.
fn prior_predictive_replicates<F: Scalar>(
    model: &dyn SimModel<F>,
    prior: &PriorSpec<F>,
    v: usize,
    rng: &Stream,
) -> Result<Vec<Vec<F>>> {
    (0..v)
        .into_par_iter()
        .map(|i| {
            let row = rng.derive_index(i as u64);
            let theta = prior.sample(&mut row.derive("theta"));
            let s = model.simulate(&theta, &mut row.derive("sim"))?;
            Ok(s)
        })
        .collect()
}

/// Prior-data conflict check for one bound prior: the discrepancy is the
/// negative log prior predictive density of the summary, calibrated by
/// prior-predictive replicates.
pub fn em_bound_check<F: Scalar>(
    flows: &BoundFlows<F>,
    side: BoundSide,
    model: &dyn SimModel<F>,
    s_obs: &[F],
    v: usize,
    rng: &Stream,
) -> Result<CheckReport> {
    let prior = match side {
        BoundSide::Lower => &flows.class.lower,
        BoundSide::Upper => &flows.class.upper,
    };
    let d_obs = -log_predictive_at(flows, side, s_obs, &mut rng.derive("obs"))?.f64();
    let reps = prior_predictive_replicates(model, prior, v, &rng.derive("replicates"))?;
    let disc: Vec<f64> = reps
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng.derive("disc").derive_index(i as u64);
            Ok(-log_predictive_at(flows, side, s, &mut r)?.f64())
        })
        .collect::<Result<_>>()?;
    let hits = disc.iter().filter(|&&d| d >= d_obs).count();
    Ok(CheckReport {
        kind: format!("em_bound_{}", side.label()),
        observed_discrepancy: d_obs,
        tail_probability: hits as f64 / v as f64,
        replicates_per_side: v,
        abc_pool: None,
        r_used: None,
        seed_label: "derived".into(),
        replicates_upper: disc,
        replicates_lower: Vec::new(),
    })
}

/// Whole-class conflict check: the class-size statistic is the
/// discrepancy, calibrated by the upper probability over the predictive
/// class with replicates under both bound priors.
pub fn class_conflict_check<F: Scalar>(
    flows: &BoundFlows<F>,
    model: &dyn SimModel<F>,
    s_obs: &[F],
    v: usize,
    rng: &Stream,
) -> Result<CheckReport> {
    if prior_specs_equal(&flows.class.lower, &flows.class.upper) {
        return Err(InferError::DegenerateClass);
    }
    let r_obs = {
        let mut r = rng.derive("obs");
        let theta = posterior_mean_upper(flows, s_obs, M_MEAN, &mut r)?;
        log_r_tilde_at(flows, &theta, s_obs)?.f64()
    };
    let eval_side = |prior: &PriorSpec<F>, label: &str| -> Result<Vec<f64>> {
        let reps = prior_predictive_replicates(model, prior, v, &rng.derive(&format!("reps-{label}")))?;
        reps.par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r = rng.derive(&format!("disc-{label}")).derive_index(i as u64);
                let theta = posterior_mean_upper(flows, s, M_MEAN, &mut r)?;
                Ok(log_r_tilde_at(flows, &theta, s)?.f64())
            })
            .collect::<Result<_>>()
    };
    let disc_u = eval_side(&flows.class.upper, "upper")?;
    let disc_l = eval_side(&flows.class.lower, "lower")?;
    let i_u = disc_u.iter().filter(|&&d| d >= r_obs).count() as f64 / v as f64;
    let i_l = disc_l.iter().filter(|&&d| d < r_obs).count() as f64 / v as f64;
    let p_bar = upper_probability_from_fractions(i_u, i_l, flows.class.r.f64());
    Ok(CheckReport {
        kind: "class".into(),
        observed_discrepancy: r_obs.exp(),
        tail_probability: p_bar,
        replicates_per_side: v,
        abc_pool: None,
        r_used: Some(flows.class.r.f64()),
        seed_label: "derived".into(),
        replicates_upper: disc_u.iter().map(|d| d.exp()).collect(),
        replicates_lower: disc_l.iter().map(|d| d.exp()).collect(),
    })
}

fn prior_specs_equal<F: Scalar>(a: &PriorSpec<F>, b: &PriorSpec<F>) -> bool {
    serde_json::to_string(&to_f64_spec(a)).ok() == serde_json::to_string(&to_f64_spec(b)).ok()
}

fn to_f64_spec<F: Scalar>(p: &PriorSpec<F>) -> PriorSpec<f64> {
    match p {
        PriorSpec::Lognormal { mu, sigma } => PriorSpec::Lognormal {
            mu: mu.iter().map(|v| v.f64()).collect(),
            sigma: sigma.iter().map(|v| v.f64()).collect(),
        },
        PriorSpec::UniformBox { lo, hi } => PriorSpec::UniformBox {
            lo: lo.iter().map(|v| v.f64()).collect(),
            hi: hi.iter().map(|v| v.f64()).collect(),
        },
        PriorSpec::NormalProduct { mean, var } => PriorSpec::NormalProduct {
            mean: mean.iter().map(|v| v.f64()).collect(),
            var: var.iter().map(|v| v.f64()).collect(),
        },
    }
}

/// Partition of the summary coordinates into the conditioning block `A`
/// and the checked block `B`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummarySplit {
    pub a_idx: Vec<usize>,
    pub b_idx: Vec<usize>,
}

impl SummarySplit {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.a_idx.is_empty() || self.b_idx.is_empty() {
            return Err(InferError::InvalidConfig(
                "both summary blocks must be nonempty".into(),
            ));
        }
        let mut seen = vec![false; dim];
        for &i in self.a_idx.iter().chain(&self.b_idx) {
            if i >= dim || seen[i] {
                return Err(InferError::InvalidConfig(format!(
                    "summary split must partition 0..{dim} (bad index {i})"
                )));
            }
            seen[i] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(InferError::InvalidConfig(
                "summary split must cover all coordinates".into(),
            ));
        }
        Ok(())
    }

    /// Full summary vector from the observed `A` block and a replicate `B`
    /// block.
    pub fn assemble<F: Scalar>(&self, s_a: &[F], s_b: &[F]) -> Vec<F> {
        let dim = self.a_idx.len() + self.b_idx.len();
        let mut out = vec![F::zero(); dim];
        for (k, &i) in self.a_idx.iter().enumerate() {
            out[i] = s_a[k];
        }
        for (k, &i) in self.b_idx.iter().enumerate() {
            out[i] = s_b[k];
        }
        out
    }

    pub fn project_a<F: Scalar>(&self, s: &[F]) -> Vec<F> {
        self.a_idx.iter().map(|&i| s[i]).collect()
    }

    pub fn project_b<F: Scalar>(&self, s: &[F]) -> Vec<F> {
        self.b_idx.iter().map(|&i| s[i]).collect()
    }
}

/// ABC conditional sampler configuration: simulate a joint pool of size
/// `pool` and keep the `keep` replicates nearest to the observed `A`
/// block in standardized Euclidean distance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AbcConfig {
    pub pool: usize,
    pub keep: usize,
}

impl Default for AbcConfig {
    fn default() -> Self {
        AbcConfig {
            pool: 100_000,
            keep: 500,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool < 10 * self.keep {
            return Err(InferError::InsufficientAcceptance {
                pool: self.pool,
                keep: self.keep,
            });
        }
        Ok(())
    }
}

/// Approximate draws of `S_B | S_A = s_obs_A` under one prior: keep the
/// nearest joint replicates, distance standardized by the pool's
/// per-coordinate standard deviations on the `A` block.
pub fn abc_conditional_replicates<F: Scalar>(
    model: &dyn SimModel<F>,
    prior: &PriorSpec<F>,
    split: &SummarySplit,
    s_obs_a: &[F],
    abc: &AbcConfig,
    rng: &Stream,
) -> Result<Vec<Vec<F>>> {
    abc.validate()?;
    let pool = prior_predictive_replicates(model, prior, abc.pool, rng)?;
    let da = split.a_idx.len();
    let mut mean = vec![0.0f64; da];
    let mut sq = vec![0.0f64; da];
    for s in &pool {
        for (k, &i) in split.a_idx.iter().enumerate() {
            let v = s[i].f64();
            mean[k] += v;
            sq[k] += v * v;
        }
    }
    let n = pool.len() as f64;
    let sd: Vec<f64> = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| {
            let mu = m / n;
            let var = (q / n - mu * mu).max(0.0);
            let s = var.sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let mut d = 0.0;
            for (k, &i) in split.a_idx.iter().enumerate() {
                let z = (s[i].f64() - s_obs_a[k].f64()) / sd[k];
                d += z * z;
            }
            (d, idx)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored
        .iter()
        .take(abc.keep)
        .map(|&(_, idx)| split.project_b(&pool[idx]))
        .collect())
}

/// Class-level summary-split check: conditional class-size discrepancy,
/// ABC conditional replicates under both bound priors, and the
/// upper-probability calibration with the estimated `r(S_obs_A)` from
/// auxiliary flows trained on the `A` block alone.
pub fn split_class_check<F: Scalar>(
    full: &BoundFlows<F>,
    aux_a: &BoundFlows<F>,
    model: &dyn SimModel<F>,
    split: &SummarySplit,
    s_obs: &[F],
    abc: &AbcConfig,
    v_used: usize,
    rng: &Stream,
) -> Result<CheckReport> {
    if prior_specs_equal(&full.class.lower, &full.class.upper) {
        return Err(InferError::DegenerateClass);
    }
    split.validate(s_obs.len())?;
    let keep = v_used.min(abc.keep);
    let s_obs_a = split.project_a(s_obs);
    // r(S_obs_A) from the auxiliary flows
    let r_sobsa = {
        let mut r = rng.derive("r-sobsa");
        let theta = posterior_mean_upper(aux_a, &s_obs_a, M_MEAN, &mut r)?;
        log_r_tilde_at(aux_a, &theta, &s_obs_a)?.exp().f64()
    };
    // observed conditional discrepancy via the full-summary flows
    let disc_at = |s_b: &[F], r: &mut Stream| -> Result<f64> {
        let s_full = split.assemble(&s_obs_a, s_b);
        let theta = posterior_mean_upper(full, &s_full, M_MEAN, r)?;
        Ok(log_r_tilde_at(full, &theta, &s_full)?.f64())
    };
    let d_obs = disc_at(&split.project_b(s_obs), &mut rng.derive("obs"))?;
    let side = |prior: &PriorSpec<F>, label: &str| -> Result<Vec<f64>> {
        let reps = abc_conditional_replicates(
            model,
            prior,
            split,
            &s_obs_a,
            abc,
            &rng.derive(&format!("abc-{label}")),
        )?;
        reps[..keep]
            .par_iter()
            .enumerate()
            .map(|(i, s_b)| {
                let mut r = rng.derive(&format!("disc-{label}")).derive_index(i as u64);
                disc_at(s_b, &mut r)
            })
            .collect::<Result<_>>()
    };
    let disc_u = side(&full.class.upper, "upper")?;
    let disc_l = side(&full.class.lower, "lower")?;
    let i_u = disc_u.iter().filter(|&&d| d >= d_obs).count() as f64 / disc_u.len() as f64;
    let i_l = disc_l.iter().filter(|&&d| d < d_obs).count() as f64 / disc_l.len() as f64;
    let p_bar = upper_probability_from_fractions(i_u, i_l, r_sobsa);
    Ok(CheckReport {
        kind: "split_class".into(),
        observed_discrepancy: d_obs.exp(),
        tail_probability: p_bar,
        replicates_per_side: keep,
        abc_pool: Some(abc.pool),
        r_used: Some(r_sobsa),
        seed_label: "derived".into(),
        replicates_upper: disc_u.iter().map(|d| d.exp()).collect(),
        replicates_lower: disc_l.iter().map(|d| d.exp()).collect(),
    })
}

/// Bound-level summary-split check: conditional predictive surprise of
/// the observed `B` block given the `A` block under one bound prior.
pub fn split_bound_check<F: Scalar>(
    full: &BoundFlows<F>,
    aux_a: &BoundFlows<F>,
    side: BoundSide,
    model: &dyn SimModel<F>,
    split: &SummarySplit,
    s_obs: &[F],
    abc: &AbcConfig,
    v_used: usize,
    rng: &Stream,
) -> Result<CheckReport> {
    split.validate(s_obs.len())?;
    let keep = v_used.min(abc.keep);
    let s_obs_a = split.project_a(s_obs);
    let prior = match side {
        BoundSide::Lower => &full.class.lower,
        BoundSide::Upper => &full.class.upper,
    };
    // marginal predictive of the A block is the same for every replicate
    let log_pa = log_predictive_at(aux_a, side, &s_obs_a, &mut rng.derive("pa"))?.f64();
    let disc_at = |s_b: &[F], r: &mut Stream| -> Result<f64> {
        let s_full = split.assemble(&s_obs_a, s_b);
        let lp = log_predictive_at(full, side, &s_full, r)?.f64();
        Ok(-(lp - log_pa))
    };
    let d_obs = disc_at(&split.project_b(s_obs), &mut rng.derive("obs"))?;
    let reps = abc_conditional_replicates(
        model,
        prior,
        split,
        &s_obs_a,
        abc,
        &rng.derive("abc"),
    )?;
    let disc: Vec<f64> = reps[..keep]
        .par_iter()
        .enumerate()
        .map(|(i, s_b)| {
            let mut r = rng.derive("disc").derive_index(i as u64);
            disc_at(s_b, &mut r)
        })
        .collect::<Result<_>>()?;
    let hits = disc.iter().filter(|&&d| d >= d_obs).count();
    Ok(CheckReport {
        kind: format!("split_bound_{}", side.label()),
        observed_discrepancy: d_obs,
        tail_probability: hits as f64 / disc.len() as f64,
        replicates_per_side: keep,
        abc_pool: Some(abc.pool),
        r_used: None,
        seed_label: "derived".into(),
        replicates_upper: disc,
        replicates_lower: Vec::new(),
    })
}

/// Heuristic flag for an uninformative split: when the conditioning block
/// is sufficient, the observed discrepancy's quantile among replicates is
/// unremarkable and the replicate spread is tiny relative to its center.
pub fn sufficiency_warning(report: &CheckReport) -> bool {
    let reps = &report.replicates_upper;
    if reps.len() < 20 {
        return false;
    }
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let sd = (reps.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / reps.len() as f64).sqrt();
    sd < 0.05 * mean.abs().max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_formula_boundaries_and_monotonicity() {
        // boundary: all upper replicates in the event, none of the lower
        assert_eq!(upper_probability_from_fractions(1.0, 0.0, 3.0), 1.0);
        // monotone in i_u, antitone in i_l
        let mut prev = 0.0;
        for k in 0..=10 {
            let iu = k as f64 / 10.0;
            let p = upper_probability_from_fractions(iu, 0.4, 2.0);
            assert!(p >= prev);
            assert!((0.0..=1.0).contains(&p));
            prev = p;
        }
        let mut prev = 1.0;
        for k in 0..=10 {
            let il = k as f64 / 10.0;
            let p = upper_probability_from_fractions(0.4, il, 2.0);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn split_validation() {
        let ok = SummarySplit {
            a_idx: vec![1],
            b_idx: vec![0],
        };
        ok.validate(2).unwrap();
        assert_eq!(ok.assemble(&[5.0], &[1.0]), vec![1.0, 5.0]);
        let bad = SummarySplit {
            a_idx: vec![0],
            b_idx: vec![0],
        };
        assert!(bad.validate(2).is_err());
        let uncovering = SummarySplit {
            a_idx: vec![0],
            b_idx: vec![1],
        };
        assert!(uncovering.validate(3).is_err());
    }

    #[test]
    fn abc_pool_guard() {
        let abc = AbcConfig {
            pool: 100,
            keep: 50,
        };
        assert!(matches!(
            abc.validate(),
            Err(InferError::InsufficientAcceptance { .. })
        ));
    }
}
