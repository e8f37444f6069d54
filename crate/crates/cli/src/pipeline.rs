//! Pipeline stages behind the CLI subcommands: artifact paths, observed
//! data loading, stage implementations, and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Axis;
use serde::Serialize;
use sha2::{Digest, Sha256};

use drbayes_core::analytic::{calibration_curve, NormalExampleConfig};
use drbayes_core::sim::{DatasetProvenance, SimDataset};
use drbayes_core::Stream;
use drbayes_flows::io::{load_flow, save_flow};
use drbayes_flows::Flow;
use drbayes_infer::amortized::{r_tilde_stability, FitTraces};
use drbayes_infer::calibration::PosteriorSampler;
use drbayes_infer::{
    class_conflict_check, em_bound_check, estimate_r_tilde, fit_bound_flows_from_datasets,
    marginal_bound_curves, run_sbc, split_bound_check, split_class_check, AbcConfig, BoundFlows,
    BoundSide, CheckReport, SummarySplit,
};

use crate::config::{ExperimentConfig, ModelSection, ObservedKind, ObservedSection};
use crate::svg::{Band, LinePlot, Series};
use crate::CliError;

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    /// Files written by the current command, with content hashes.
    written: Vec<(PathBuf, String)>,
    timer: Instant,
}

type Result<T> = std::result::Result<T, CliError>;

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out_override: Option<PathBuf>) -> Result<Self> {
        let base = out_override.unwrap_or_else(|| cfg.experiment.output_dir.clone());
        let out = if base.is_relative() {
            match std::env::var_os("DRBAYES_OUT") {
                Some(root) => PathBuf::from(root).join(base),
                None => base,
            }
        } else {
            base
        };
        std::fs::create_dir_all(&out)?;
        Ok(Pipeline {
            cfg,
            out,
            written: Vec::new(),
            timer: Instant::now(),
        })
    }

    fn master(&self) -> Stream {
        Stream::new(self.cfg.experiment.seed)
    }

    fn record(&mut self, path: PathBuf) -> Result<()> {
        let bytes = std::fs::read(&path)?;
        let hash: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.written.push((path, hash));
        Ok(())
    }

    fn write_text(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.record(path.clone())?;
        Ok(path)
    }

    /// Run manifest: seeds, versions, outputs with hashes, and wall time.
    pub fn write_manifest(&mut self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            experiment: &'a str,
            command: &'a str,
            seed: u64,
            version: &'a str,
            outputs: Vec<OutputEntry>,
            timings_ms: u128,
        }
        #[derive(Serialize)]
        struct OutputEntry {
            path: String,
            sha256: String,
        }
        let outputs = self
            .written
            .iter()
            .map(|(p, h)| OutputEntry {
                path: p
                    .strip_prefix(&self.out)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
                sha256: h.clone(),
            })
            .collect();
        let manifest = Manifest {
            experiment: &self.cfg.experiment.name,
            command,
            seed: self.cfg.experiment.seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs,
            timings_ms: self.timer.elapsed().as_millis(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        let path = self.out.join(format!("manifest_{command}.json"));
        std::fs::write(&path, json)?;
        Ok(())
    }

    fn dataset_path(&self, label: &str) -> PathBuf {
        self.out.join("datasets").join(format!("{label}.csv"))
    }

    fn flow_path(&self, name: &str) -> PathBuf {
        self.out.join("flows").join(format!("{name}.json"))
    }

    // ------------------------------------------------------------------
    // simulate
    // ------------------------------------------------------------------

    pub fn cmd_simulate(&mut self) -> Result<()> {
        let model = self.cfg.model.build()?;
        let class = self.cfg.prior_class.to_spec()?;
        let master = self.master();
        std::fs::create_dir_all(self.out.join("datasets"))?;
        for (label, prior) in [("lower", &class.lower), ("upper", &class.upper)] {
            let data = drbayes_core::sim::build_dataset(
                model.as_ref(),
                prior,
                label,
                self.cfg.train.n_sims,
                &master.derive(&format!("sims-{label}")),
            )
            .map_err(CliError::compute)?;
            let path = self.dataset_path(label);
            data.save_csv(&path).map_err(CliError::compute)?;
            self.record(path)?;
        }
        self.write_manifest("simulate")
    }

    fn load_dataset(&self, label: &str) -> Result<SimDataset<f64>> {
        let path = self.dataset_path(label);
        if !path.exists() {
            return Err(CliError::Config(format!(
                "dataset {} not found; run `drbayes simulate` first",
                path.display()
            )));
        }
        let model = self.cfg.model.build()?;
        SimDataset::load_csv(
            &path,
            model.param_dim(),
            DatasetProvenance {
                model: model.name().into(),
                prior_label: label.into(),
                seed_label: format!("seed {}", self.cfg.experiment.seed),
                n_requested: self.cfg.train.n_sims,
                n_dropped: 0,
            },
        )
        .map_err(CliError::compute)
    }

    // ------------------------------------------------------------------
    // train
    // ------------------------------------------------------------------

    pub fn cmd_train(&mut self) -> Result<()> {
        let class = self.cfg.prior_class.to_spec()?;
        let data_l = self.load_dataset("lower")?;
        let data_u = self.load_dataset("upper")?;
        let flows = fit_bound_flows_from_datasets(
            &class,
            &data_l,
            &data_u,
            &self.cfg.train.flow_config(),
            &self.cfg.train.train_config(),
            &self.master().derive("fit"),
        )
        .map_err(CliError::compute)?;
        self.save_flows(&flows, "")?;
        self.save_traces(&flows.traces, "loss")?;
        if self.cfg.sbc.enabled {
            self.run_sbc_reports(&flows)?;
        }
        self.write_manifest("train")
    }

    fn save_flows(&mut self, flows: &BoundFlows<f64>, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(self.out.join("flows"))?;
        for (name, flow) in [
            ("posterior_lower", &flows.posterior_l),
            ("likelihood_lower", &flows.likelihood_l),
            ("posterior_upper", &flows.posterior_u),
            ("likelihood_upper", &flows.likelihood_u),
        ] {
            let path = self.flow_path(&format!("{prefix}{name}"));
            save_flow(flow, &path).map_err(CliError::compute)?;
            self.record(path)?;
        }
        Ok(())
    }

    fn save_traces(&mut self, traces: &FitTraces, stem: &str) -> Result<()> {
        let mut csv = String::from("flow,epoch,train_loss,val_loss\n");
        for (name, trace) in [
            ("posterior_lower", &traces.posterior_l),
            ("likelihood_lower", &traces.likelihood_l),
            ("posterior_upper", &traces.posterior_u),
            ("likelihood_upper", &traces.likelihood_u),
        ] {
            for (e, (t, v)) in trace.train.iter().zip(&trace.val).enumerate() {
                csv.push_str(&format!("{name},{e},{t:.16e},{v:.16e}\n"));
            }
        }
        self.write_text(&format!("flows/{stem}.csv"), &csv)?;
        Ok(())
    }

    fn load_flows(&self, prefix: &str) -> Result<BoundFlows<f64>> {
        let class = self.cfg.prior_class.to_spec()?;
        let load = |name: &str| -> Result<Flow> {
            let path = self.flow_path(&format!("{prefix}{name}"));
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "flow checkpoint {} not found; run `drbayes train` first",
                    path.display()
                )));
            }
            load_flow(&path).map_err(CliError::compute)
        };
        Ok(BoundFlows {
            class,
            posterior_l: load("posterior_lower")?,
            likelihood_l: load("likelihood_lower")?,
            posterior_u: load("posterior_upper")?,
            likelihood_u: load("likelihood_upper")?,
            traces: FitTraces {
                posterior_l: empty_trace(),
                likelihood_l: empty_trace(),
                posterior_u: empty_trace(),
                likelihood_u: empty_trace(),
            },
            n_sims: self.cfg.train.n_sims,
        })
    }

    fn run_sbc_reports(&mut self, flows: &BoundFlows<f64>) -> Result<()> {
        let model = self.cfg.model.build()?;
        let sbc_cfg = self.cfg.sbc.to_config();
        let master = self.master();
        std::fs::create_dir_all(self.out.join("sbc"))?;
        let mut summary = BTreeMap::new();
        for (label, flow, prior) in [
            ("lower", &flows.posterior_l, &flows.class.lower),
            ("upper", &flows.posterior_u, &flows.class.upper),
        ] {
            let res = run_sbc(
                flow as &dyn PosteriorSampler<f64>,
                model.as_ref(),
                prior,
                &sbc_cfg,
                &master.derive(&format!("sbc-{label}")),
            )
            .map_err(CliError::compute)?;
            let csv_path = self.out.join("sbc").join(format!("sbc_{label}.csv"));
            res.save_csv(&csv_path).map_err(CliError::compute)?;
            self.record(csv_path)?;
            let svg = sbc_plot(&res, &format!("PIT ECDF difference ({label} bound prior)"));
            self.write_text(&format!("sbc/sbc_{label}.svg"), &svg)?;
            summary.insert(
                label.to_string(),
                serde_json::json!({
                    "pass": res.all_pass(),
                    "band": res.band,
                    "max_dev": res.max_dev,
                }),
            );
        }
        let report = serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        self.write_text("sbc/sbc_report.json", &report)?;
        Ok(())
    }

    // ------------------------------------------------------------------
    // observed data
    // ------------------------------------------------------------------

    pub fn load_observed(&self, override_path: Option<&Path>) -> Result<Vec<f64>> {
        let section = match (override_path, &self.cfg.observed) {
            (Some(p), Some(sec)) => ObservedSection {
                path: p.to_path_buf(),
                kind: sec.kind,
            },
            (Some(p), None) => ObservedSection {
                path: p.to_path_buf(),
                kind: ObservedKind::Raw,
            },
            (None, Some(sec)) => sec.clone(),
            (None, None) => {
                return Err(CliError::Config(
                    "no observed data: set [observed] in the config or pass --observed".into(),
                ))
            }
        };
        let raw = std::fs::read_to_string(&section.path).map_err(|e| {
            CliError::Config(format!(
                "cannot read observed data {}: {e}",
                section.path.display()
            ))
        })?;
        let model = self.cfg.model.build()?;
        let s = match section.kind {
            ObservedKind::Summaries => parse_summary_csv(&raw)?,
            ObservedKind::Raw => observed_from_raw(&self.cfg.model, &raw)?,
        };
        if s.len() != model.summary_dim() {
            return Err(CliError::Config(format!(
                "observed summaries have dimension {}, model expects {}",
                s.len(),
                model.summary_dim()
            )));
        }
        Ok(s)
    }

    // ------------------------------------------------------------------
    // posterior bounds
    // ------------------------------------------------------------------

    pub fn cmd_posterior_bounds(&mut self, observed: Option<&Path>) -> Result<()> {
        let flows = self.load_flows("")?;
        let s_obs = self.load_observed(observed)?;
        let master = self.master();
        let est = estimate_r_tilde(
            &flows,
            &s_obs,
            self.cfg.posterior.m_mean,
            &mut master.derive("r-tilde"),
        )
        .map_err(CliError::compute)?;
        let (spread, _) = r_tilde_stability(&flows, &s_obs, 10, &mut master.derive("r-stab"))
            .map_err(CliError::compute)?;
        let curves = marginal_bound_curves(
            &flows,
            est.r_tilde,
            &est.theta_star,
            &s_obs,
            self.cfg.posterior.n_draws,
            None,
            &mut master.derive("curves"),
        )
        .map_err(CliError::compute)?;
        let dir = self.out.join("posterior");
        curves.save_curves(&dir).map_err(CliError::compute)?;
        for j in 0..curves.curves.len() {
            self.record(dir.join(format!("curve_theta{j}.csv")))?;
        }
        let meta_path = dir.join("estimate.json");
        #[derive(Serialize)]
        struct Meta {
            r_tilde: f64,
            theta_star: Vec<f64>,
            s_obs: Vec<f64>,
            n_draws: usize,
            anchor_spread: f64,
            anchor_warning: bool,
            seed: u64,
        }
        let meta = Meta {
            r_tilde: est.r_tilde,
            theta_star: est.theta_star.clone(),
            s_obs: s_obs.clone(),
            n_draws: self.cfg.posterior.n_draws,
            anchor_spread: spread,
            anchor_warning: spread >= 1.5,
            seed: self.cfg.experiment.seed,
        };
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&meta).map_err(|e| CliError::Compute(e.to_string()))?,
        )?;
        self.record(meta_path)?;
        // one figure per parameter: shaded gap between the bound curves
        for (j, curve) in curves.curves.iter().enumerate() {
            let pts = |vals: &Vec<f64>| -> Vec<(f64, f64)> {
                curve.grid.iter().cloned().zip(vals.iter().cloned()).collect()
            };
            let plot = LinePlot {
                title: format!(
                    "Marginal posterior bounds, theta{j} (r-tilde {:.3})",
                    est.r_tilde
                ),
                x_label: format!("theta{j}"),
                y_label: "density".into(),
                series: vec![
                    Series {
                        label: "upper bound".into(),
                        points: pts(&curve.upper),
                        dashed: false,
                    },
                    Series {
                        label: "lower bound".into(),
                        points: pts(&curve.lower),
                        dashed: true,
                    },
                ],
                bands: vec![Band {
                    label: "ambiguity".into(),
                    upper: pts(&curve.upper),
                    lower: pts(&curve.lower),
                }],
            };
            self.write_text(&format!("posterior/curve_theta{j}.svg"), &plot.render())?;
        }
        self.write_manifest("posterior-bounds")
    }

    // ------------------------------------------------------------------
    // conflict checks
    // ------------------------------------------------------------------

    fn split(&self) -> Result<SummarySplit> {
        if self.cfg.checks.split_a.is_empty() || self.cfg.checks.split_b.is_empty() {
            return Err(CliError::Config(
                "split checks need checks.split_a and checks.split_b".into(),
            ));
        }
        Ok(SummarySplit {
            a_idx: self.cfg.checks.split_a.clone(),
            b_idx: self.cfg.checks.split_b.clone(),
        })
    }

    /// Auxiliary flows conditioned on the `A` block only: trained on the
    /// stored datasets with the summaries projected, cached as
    /// checkpoints.
    fn aux_flows(&mut self, split: &SummarySplit) -> Result<BoundFlows<f64>> {
        let have_all = ["posterior_lower", "likelihood_lower", "posterior_upper", "likelihood_upper"]
            .iter()
            .all(|n| self.flow_path(&format!("aux_{n}")).exists());
        if have_all {
            return self.load_flows("aux_");
        }
        let class = self.cfg.prior_class.to_spec()?;
        let project = |data: &SimDataset<f64>| -> SimDataset<f64> {
            let cols: Vec<usize> = split.a_idx.clone();
            let summaries = data.summaries.select(Axis(1), &cols);
            SimDataset {
                theta: data.theta.clone(),
                summaries,
                provenance: data.provenance.clone(),
            }
        };
        let data_l = project(&self.load_dataset("lower")?);
        let data_u = project(&self.load_dataset("upper")?);
        let flows = fit_bound_flows_from_datasets(
            &class,
            &data_l,
            &data_u,
            &self.cfg.train.flow_config(),
            &self.cfg.train.train_config(),
            &self.master().derive("fit-aux"),
        )
        .map_err(CliError::compute)?;
        self.save_flows(&flows, "aux_")?;
        Ok(flows)
    }

    pub fn cmd_conflict(&mut self, observed: Option<&Path>, kind: &str) -> Result<()> {
        let kinds: Vec<&str> = if kind == "all" {
            vec!["em-lower", "em-upper", "class"]
        } else {
            vec![kind]
        };
        for k in kinds {
            self.run_one_check(observed, k)?;
        }
        self.write_manifest("conflict")
    }

    fn run_one_check(&mut self, observed: Option<&Path>, kind: &str) -> Result<()> {
        let model = self.cfg.model.build()?;
        let flows = self.load_flows("")?;
        let s_obs = self.load_observed(observed)?;
        let master = self.master();
        let v = self.cfg.checks.v;
        let abc = AbcConfig {
            pool: self.cfg.checks.abc_pool,
            keep: self.cfg.checks.abc_keep,
        };
        let report: CheckReport = match kind {
            "em-lower" | "em-upper" => {
                let side = if kind == "em-lower" {
                    BoundSide::Lower
                } else {
                    BoundSide::Upper
                };
                em_bound_check(
                    &flows,
                    side,
                    model.as_ref(),
                    &s_obs,
                    v,
                    &master.derive(&format!("check-{kind}")),
                )
                .map_err(CliError::compute)?
            }
            "class" => class_conflict_check(
                &flows,
                model.as_ref(),
                &s_obs,
                v,
                &master.derive("check-class"),
            )
            .map_err(CliError::compute)?,
            "split-class" => {
                let split = self.split()?;
                let aux = self.aux_flows(&split)?;
                split_class_check(
                    &flows,
                    &aux,
                    model.as_ref(),
                    &split,
                    &s_obs,
                    &abc,
                    abc.keep,
                    &master.derive("check-split-class"),
                )
                .map_err(CliError::compute)?
            }
            "split-bound-lower" | "split-bound-upper" => {
                let side = if kind == "split-bound-lower" {
                    BoundSide::Lower
                } else {
                    BoundSide::Upper
                };
                let split = self.split()?;
                let aux = self.aux_flows(&split)?;
                split_bound_check(
                    &flows,
                    &aux,
                    side,
                    model.as_ref(),
                    &split,
                    &s_obs,
                    &abc,
                    abc.keep,
                    &master.derive(&format!("check-{kind}")),
                )
                .map_err(CliError::compute)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown check kind `{other}` (expected em-lower, em-upper, class, split-class, split-bound-lower, split-bound-upper, all)"
                )))
            }
        };
        std::fs::create_dir_all(self.out.join("checks"))?;
        let stem = kind.replace('-', "_");
        let json_path = self.out.join("checks").join(format!("{stem}.json"));
        report.save_json(&json_path).map_err(CliError::compute)?;
        self.record(json_path)?;
        let csv_path = self
            .out
            .join("checks")
            .join(format!("{stem}_replicates.csv"));
        report
            .save_replicates_csv(&csv_path)
            .map_err(CliError::compute)?;
        self.record(csv_path)?;
        Ok(())
    }

    // ------------------------------------------------------------------
    // normal analytic
    // ------------------------------------------------------------------

    pub fn cmd_normal_analytic(&mut self) -> Result<()> {
        let section = self.cfg.normal_analytic.clone().ok_or_else(|| {
            CliError::Config("normal-analytic needs a [normal_analytic] section".into())
        })?;
        let (n1, n2, delta1, delta2, shrink_k) = match &self.cfg.model {
            ModelSection::NormalTwoSource {
                n1,
                n2,
                delta1,
                delta2,
                shrink_k,
            } => (*n1, *n2, *delta1, *delta2, *shrink_k),
            _ => {
                return Err(CliError::Config(
                    "normal-analytic requires model.kind = \"normal_two_source\"".into(),
                ))
            }
        };
        if section.points < 2 || section.r_values.is_empty() {
            return Err(CliError::Config(
                "normal_analytic needs points >= 2 and at least one r value".into(),
            ));
        }
        let grid: Vec<f64> = (0..section.points)
            .map(|i| {
                section.wbar_min
                    + (section.wbar_max - section.wbar_min) * i as f64
                        / (section.points - 1) as f64
            })
            .collect();
        let mut csv = String::from("wbar,r,p_upper_tail,p_lower_tail,p_bar\n");
        let mut series = Vec::new();
        for &r in &section.r_values {
            let cfg = NormalExampleConfig {
                n1,
                n2,
                delta1,
                delta2,
                shrink_k,
                r,
                zbar_obs: section.zbar_obs,
                wbar_obs: 0.0,
            };
            let pts = calibration_curve(&cfg, &grid);
            for p in &pts {
                csv.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    p.wbar, r, p.p_upper_tail, p.p_lower_tail, p.p_bar
                ));
            }
            series.push(Series {
                label: format!("class check, r = {r:.4}"),
                points: pts.iter().map(|p| (p.wbar, p.p_bar)).collect(),
                dashed: false,
            });
            if (r - section.r_values[0]).abs() < 1e-14 {
                series.push(Series {
                    label: "bound check (upper)".into(),
                    points: pts.iter().map(|p| (p.wbar, p.p_upper_tail)).collect(),
                    dashed: true,
                });
                series.push(Series {
                    label: "bound check (lower)".into(),
                    points: pts.iter().map(|p| (p.wbar, p.p_lower_tail)).collect(),
                    dashed: true,
                });
            }
        }
        std::fs::create_dir_all(self.out.join("normal_analytic"))?;
        self.write_text("normal_analytic/curve.csv", &csv)?;
        let plot = LinePlot {
            title: "Calibration tail probabilities".into(),
            x_label: "observed wbar".into(),
            y_label: "tail probability".into(),
            series,
            bands: Vec::new(),
        };
        self.write_text("normal_analytic/curve.svg", &plot.render())?;
        self.write_manifest("normal-analytic")
    }

    // ------------------------------------------------------------------
    // sbc command
    // ------------------------------------------------------------------

    pub fn cmd_sbc(&mut self) -> Result<()> {
        let flows = self.load_flows("")?;
        self.run_sbc_reports(&flows)?;
        self.write_manifest("sbc")
    }
}

fn empty_trace() -> drbayes_flows::LossTrace {
    drbayes_flows::LossTrace {
        train: Vec::new(),
        val: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    }
}

fn sbc_plot(res: &drbayes_infer::SbcResult, title: &str) -> String {
    let band_pts_hi: Vec<(f64, f64)> = res.grid.iter().map(|&t| (t, res.band)).collect();
    let band_pts_lo: Vec<(f64, f64)> = res.grid.iter().map(|&t| (t, -res.band)).collect();
    let series = res
        .ecdf_diff
        .iter()
        .enumerate()
        .map(|(j, curve)| Series {
            label: format!("theta{j}"),
            points: res.grid.iter().cloned().zip(curve.iter().cloned()).collect(),
            dashed: false,
        })
        .collect();
    LinePlot {
        title: title.into(),
        x_label: "PIT value".into(),
        y_label: "ECDF difference".into(),
        series,
        bands: vec![Band {
            label: "simultaneous band".into(),
            upper: band_pts_hi,
            lower: band_pts_lo,
        }],
    }
    .render()
}

fn parse_summary_csv(raw: &str) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.starts_with('s') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(vals.map_err(|e| CliError::Config(format!("observed csv line {i}: {e}")))?);
    }
    match rows.len() {
        1 => Ok(rows.pop().unwrap()),
        n => Err(CliError::Config(format!(
            "summary csv must contain exactly one data row, found {n}"
        ))),
    }
}

fn observed_from_raw(model: &ModelSection, raw: &str) -> Result<Vec<f64>> {
    match model {
        ModelSection::Poisson {
            n_obs, summary, ..
        } => {
            let counts = parse_single_column(raw, "y")?;
            let m = drbayes_core::sim::PoissonModel {
                n_obs: *n_obs,
                summary: *summary,
                dequantize: false,
            };
            m.summaries_from_counts(&counts).map_err(CliError::config)
        }
        ModelSection::Ricker { t_len, n0, burn_in } => {
            let counts = parse_single_column(raw, "y")?;
            let m = drbayes_core::sim::RickerModel {
                t_len: *t_len,
                n0: *n0,
                burn_in: *burn_in,
            };
            m.summaries(&counts).map_err(CliError::config)
        }
        ModelSection::NormalTwoSource { n1, n2, delta1, delta2, shrink_k } => {
            let m = drbayes_core::sim::NormalTwoSourceModel {
                n1: *n1,
                n2: *n2,
                delta1: *delta1,
                delta2: *delta2,
                shrink_k: *shrink_k,
            };
            let (z, w) = parse_series_csv(raw)?;
            m.summaries_from_raw(&z, &w).map_err(CliError::config)
        }
    }
}

fn parse_single_column(raw: &str, header: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.eq_ignore_ascii_case(header) {
            continue;
        }
        out.push(
            line.parse::<f64>()
                .map_err(|e| CliError::Config(format!("observed csv line {i}: {e}")))?,
        );
    }
    Ok(out)
}

fn parse_series_csv(raw: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut z = Vec::new();
    let mut w = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.starts_with("series") {
            continue;
        }
        let (name, val) = line.split_once(',').ok_or_else(|| {
            CliError::Config(format!("observed csv line {i}: expected series,value"))
        })?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("observed csv line {i}: {e}")))?;
        match name.trim() {
            "z" => z.push(v),
            "w" => w.push(v),
            other => {
                return Err(CliError::Config(format!(
                    "observed csv line {i}: unknown series `{other}`"
                )))
            }
        }
    }
    Ok((z, w))
}
