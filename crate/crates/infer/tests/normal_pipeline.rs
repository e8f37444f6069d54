//! End-to-end checks of the amortized machinery on the two-source normal
//! model, where conjugate posteriors and exact predictive densities are
//! available as oracles.

use drbayes_core::analytic::{conjugate_posterior, normal_r_s, NormalExampleConfig};
use drbayes_core::sim::{NormalTwoSourceModel, SimModel};
use drbayes_core::{PriorSpec, Stream};
use drbayes_flows::flow::FlowConfig;
use drbayes_flows::TrainConfig;
use drbayes_infer::amortized::r_tilde_stability;
use drbayes_infer::conflict::{em_bound_check, split_bound_check, BoundSide, SummarySplit};
use drbayes_infer::{
    estimate_r_tilde, fit_bound_flows, marginal_bound_curves, posterior_event_bounds,
    AbcConfig, BoundFlows, PriorClassSpec,
};

fn model() -> NormalTwoSourceModel<f64> {
    NormalTwoSourceModel {
        n1: 100,
        n2: 1000,
        delta1: 1.0,
        delta2: 100.0,
        shrink_k: 0.9,
    }
}

fn class_spec(m: &NormalTwoSourceModel<f64>) -> PriorClassSpec<f64> {
    let (lower, upper) = m.bound_priors();
    PriorClassSpec {
        lower,
        upper,
        r: 1.0 / 0.9,
    }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 120,
        patience: 15,
        ..TrainConfig::default()
    }
}

fn fit(seed: u64) -> BoundFlows<f64> {
    let m = model();
    let class = class_spec(&m);
    fit_bound_flows(
        &m,
        &class,
        20_000,
        &FlowConfig::default(),
        &train_cfg(),
        &Stream::new(seed).derive("fit"),
    )
    .unwrap()
}

#[test]
fn amortized_pipeline_matches_conjugate_oracles() {
    let m = model();
    let flows = fit(1001);
    let s_obs = [0.0f64, 0.25];

    // --- conjugate posterior mean recovery (upper prior) ---
    let (exact_mean, exact_cov) =
        conjugate_posterior(m.n1, m.n2, 1.0 / m.delta1, 1.0 / m.delta2, s_obs[0], s_obs[1]);
    let draws = flows
        .posterior_u
        .sample(&s_obs, 20_000, &mut Stream::new(7).derive("draws"))
        .unwrap();
    let mean_phi = draws.column(0).sum() / draws.nrows() as f64;
    let sd_phi = exact_cov[0][0].sqrt();
    assert!(
        (mean_phi - exact_mean[0]).abs() < 0.05 * sd_phi.max(exact_mean[0].abs()),
        "flow mean {mean_phi} vs conjugate {}",
        exact_mean[0]
    );
    let var_phi = draws
        .column(0)
        .iter()
        .map(|v| (v - mean_phi) * (v - mean_phi))
        .sum::<f64>()
        / (draws.nrows() - 1) as f64;
    assert!(
        (var_phi / exact_cov[0][0] - 1.0).abs() < 0.25,
        "flow var {var_phi} vs conjugate {}",
        exact_cov[0][0]
    );

    // --- class-size estimate vs the exact statistic ---
    let cfg = NormalExampleConfig {
        zbar_obs: s_obs[0],
        wbar_obs: s_obs[1],
        ..NormalExampleConfig::reference()
    };
    let exact_r_s = normal_r_s(&cfg, s_obs[0], s_obs[1]);
    let est = estimate_r_tilde(&flows, &s_obs, 1000, &mut Stream::new(8).derive("rt")).unwrap();
    assert!(
        (est.r_tilde / exact_r_s - 1.0).abs() < 0.10,
        "r-tilde {} vs exact {exact_r_s}",
        est.r_tilde
    );

    // --- anchor-point stability of the cancellation identity ---
    let (spread, values) =
        r_tilde_stability(&flows, &s_obs, 10, &mut Stream::new(9).derive("stab")).unwrap();
    assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(spread < 1.5, "anchor spread {spread}");

    // --- marginal curves and event bounds bracket the single-prior masses ---
    let est_curves = marginal_bound_curves(
        &flows,
        est.r_tilde,
        &est.theta_star,
        &s_obs,
        10_000,
        None,
        &mut Stream::new(10).derive("curves"),
    )
    .unwrap();
    assert_eq!(est_curves.curves.len(), 2);
    // upper curve is a density estimate
    for curve in &est_curves.curves {
        let mass = drbayes_core::kde::curve_mass(&curve.grid, &curve.upper);
        assert!((mass - 1.0).abs() < 0.02, "upper curve mass {mass}");
    }
    // pointwise ordering up to KDE noise
    assert!(
        est_curves.ordering_violation_rate() < 0.01,
        "violations {}",
        est_curves.ordering_violation_rate()
    );
    // full-grid event recovers certainty
    let curve0 = &est_curves.curves[0];
    let (pl_full, pu_full) = posterior_event_bounds(
        &est_curves,
        0,
        curve0.grid[0],
        *curve0.grid.last().unwrap(),
    )
    .unwrap();
    assert!((pl_full - 1.0).abs() < 0.02 && (pu_full - 1.0).abs() < 0.02);

    // event phi in [-0.1, 0.1]: the bounds bracket both single-prior
    // posterior probabilities (conjugate, exact)
    let (pl, pu) = posterior_event_bounds(&est_curves, 0, -0.1, 0.1).unwrap();
    let normal_cdf = |x: f64| -> f64 {
        let z = x / 2.0f64.sqrt();
        if z >= 0.0 {
            1.0 - 0.5 * drbayes_core::special::gamma_q(0.5, z * z)
        } else {
            0.5 * drbayes_core::special::gamma_q(0.5, z * z)
        }
    };
    for eta_var in [1.0 / m.delta2, m.shrink_k / m.delta2] {
        let (mean, cov) = conjugate_posterior(m.n1, m.n2, 1.0 / m.delta1, eta_var, s_obs[0], s_obs[1]);
        let sd = cov[0][0].sqrt();
        let p = normal_cdf((0.1 - mean[0]) / sd) - normal_cdf((-0.1 - mean[0]) / sd);
        assert!(
            pl <= p + 0.03 && p <= pu + 0.03,
            "bracketing failed: {pl} <= {p} <= {pu}"
        );
    }

    // --- bound check at the prior predictive mode is unsurprising ---
    let report = em_bound_check(
        &flows,
        BoundSide::Upper,
        &m,
        &[0.0, 0.0],
        400,
        &Stream::new(11).derive("em"),
    )
    .unwrap();
    assert!(
        report.tail_probability >= 0.5,
        "p at mode {}",
        report.tail_probability
    );

    // --- split bound check at the predictive center is unsurprising ---
    let split = SummarySplit {
        a_idx: vec![0],
        b_idx: vec![1],
    };
    let center = (m.n1 as f64) / (m.n1 as f64 + m.delta1) * s_obs[0];
    let s_center = [s_obs[0], center];
    // auxiliary flows conditioned on the first summary alone
    let proj = drbayes_core::sim::ProjectedModel::new(&m, vec![0]).unwrap();
    let aux = fit_bound_flows(
        &proj,
        &flows.class,
        20_000,
        &FlowConfig::default(),
        &train_cfg(),
        &Stream::new(1002).derive("fit-aux"),
    )
    .unwrap();
    let report = split_bound_check(
        &flows,
        &aux,
        BoundSide::Upper,
        &m,
        &split,
        &s_center,
        &AbcConfig {
            pool: 40_000,
            keep: 400,
        },
        400,
        &Stream::new(12).derive("split"),
    )
    .unwrap();
    assert!(
        report.tail_probability >= 0.5,
        "split p at center {}",
        report.tail_probability
    );
}

#[test]
fn identical_priors_make_exchangeable_posteriors() {
    // l-hat = u-hat: the two posterior flows see the same training
    // distribution, so their posterior means agree up to Monte Carlo error
    let m = NormalTwoSourceModel {
        shrink_k: 1.0,
        ..model()
    };
    let (lower, upper) = m.bound_priors();
    let class = PriorClassSpec {
        lower,
        upper,
        r: 1.0,
    };
    let flows = fit_bound_flows(
        &m,
        &class,
        8_000,
        &FlowConfig::default(),
        &TrainConfig {
            epochs: 60,
            patience: 12,
            ..TrainConfig::default()
        },
        &Stream::new(2001).derive("fit"),
    )
    .unwrap();
    let s_obs = [0.1f64, 0.2];
    let n = 20_000usize;
    let du = flows
        .posterior_u
        .sample(&s_obs, n, &mut Stream::new(3).derive("du"))
        .unwrap();
    let dl = flows
        .posterior_l
        .sample(&s_obs, n, &mut Stream::new(4).derive("dl"))
        .unwrap();
    for j in 0..2 {
        let mu = du.column(j).sum() / n as f64;
        let ml = dl.column(j).sum() / n as f64;
        let vu = du.column(j).iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let vl = dl.column(j).iter().map(|v| (v - ml) * (v - ml)).sum::<f64>() / n as f64;
        let se = (vu / n as f64 + vl / n as f64).sqrt();
        // 3 combined Monte Carlo standard errors plus a small training slack
        assert!(
            (mu - ml).abs() < 3.0 * se + 0.15 * vu.sqrt(),
            "param {j}: {mu} vs {ml} (se {se})"
        );
        assert!((vu / vl - 1.0).abs() < 0.35, "param {j}: var {vu} vs {vl}");
    }

    // and with identical priors + ideal flows r-tilde ~ r = 1
    let est = estimate_r_tilde(&flows, &s_obs, 1000, &mut Stream::new(5).derive("rt")).unwrap();
    assert!(
        (est.r_tilde - 1.0).abs() < 0.35,
        "r-tilde {} for the singleton class",
        est.r_tilde
    );
}

#[test]
fn summary_reparametrization_shifts_r_tilde_mildly() {
    // affine reparametrization of the summaries: the exact statistic is
    // invariant; retrained flows with the same seeds move it by < 20%
    struct AffineSummaries {
        inner: NormalTwoSourceModel<f64>,
    }
    impl SimModel<f64> for AffineSummaries {
        fn name(&self) -> &'static str {
            "normal_two_source_affine"
        }
        fn param_dim(&self) -> usize {
            2
        }
        fn summary_dim(&self) -> usize {
            2
        }
        fn simulate(&self, theta: &[f64], rng: &mut Stream) -> drbayes_core::error::Result<Vec<f64>> {
            let s = self.inner.simulate(theta, rng)?;
            // fixed invertible affine map of the summary vector
            Ok(vec![2.0 * s[0] - s[1] + 0.3, 0.5 * s[0] + 1.5 * s[1] - 1.0])
        }
    }

    let m = model();
    let class = class_spec(&m);
    let flows = fit(1001);
    let s_obs = [0.0f64, 0.25];
    let est = estimate_r_tilde(&flows, &s_obs, 1000, &mut Stream::new(21).derive("rt")).unwrap();

    let affine = AffineSummaries { inner: model() };
    let flows_t = fit_bound_flows(
        &affine,
        &class,
        20_000,
        &FlowConfig::default(),
        &train_cfg(),
        &Stream::new(1001).derive("fit"),
    )
    .unwrap();
    let s_obs_t = [2.0 * s_obs[0] - s_obs[1] + 0.3, 0.5 * s_obs[0] + 1.5 * s_obs[1] - 1.0];
    let est_t =
        estimate_r_tilde(&flows_t, &s_obs_t, 1000, &mut Stream::new(21).derive("rt")).unwrap();
    assert!(
        (est_t.r_tilde / est.r_tilde - 1.0).abs() < 0.20,
        "r-tilde moved from {} to {}",
        est.r_tilde,
        est_t.r_tilde
    );
}
