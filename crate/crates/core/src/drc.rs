//! Density ratio class algebra: construction with bound validation,
//! lower/upper event probabilities, Bayesian updating, marginalization on
//! grids, and the membership test from the ratio characterization.
//!
//! A class is the set of normalized densities whose unnormalized versions
//! fit pointwise between a lower bound `l` and an upper bound `u`. Bounds
//! are stored unnormalized together with their integrated masses, so the
//! ratio `r = (integral of u) / (integral of l)` and both normalized forms
//! are always available.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{Grid, GridDensity, Rect};
use crate::quad::QuadratureConfig;
use crate::scalar::Scalar;

/// Shared density evaluator on the parameter space.
pub type DensityFn<F> = Arc<dyn Fn(&[F]) -> F + Send + Sync>;

/// Event in parameter space: a total indicator plus a label. Rectangle
/// events cover the grid operations; complements are first-class so that
/// conjugacy between lower and upper probabilities can be exercised.
#[derive(Clone)]
pub struct ParamEvent<F> {
    indicator: Arc<dyn Fn(&[F]) -> bool + Send + Sync>,
    pub description: String,
}

impl<F: Scalar> ParamEvent<F> {
    pub fn from_indicator(
        indicator: impl Fn(&[F]) -> bool + Send + Sync + 'static,
        description: impl Into<String>,
    ) -> Self {
        ParamEvent {
            indicator: Arc::new(indicator),
            description: description.into(),
        }
    }

    pub fn rect(rect: Rect<F>, description: impl Into<String>) -> Self {
        ParamEvent {
            indicator: Arc::new(move |x: &[F]| rect.contains(x)),
            description: description.into(),
        }
    }

    pub fn full() -> Self {
        ParamEvent::from_indicator(|_| true, "full support")
    }

    pub fn empty() -> Self {
        ParamEvent::from_indicator(|_| false, "empty")
    }

    pub fn complement(&self) -> Self {
        let ind = Arc::clone(&self.indicator);
        ParamEvent {
            indicator: Arc::new(move |x: &[F]| !ind(x)),
            description: format!("complement of {}", self.description),
        }
    }

    #[inline]
    pub fn contains(&self, x: &[F]) -> bool {
        (self.indicator)(x)
    }
}

impl<F> std::fmt::Debug for ParamEvent<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamEvent")
            .field("description", &self.description)
            .finish()
    }
}

/// Density ratio class with evaluable bounds on a rectangular support.
#[derive(Clone)]
pub struct DensityRatioClass<F> {
    lower: DensityFn<F>,
    upper: DensityFn<F>,
    support: Rect<F>,
    mass_lower: F,
    mass_upper: F,
    quad: QuadratureConfig,
}

/// Absolute tolerance for the `l <= u` validation after normalizing the
/// upper bound to unit supremum: floating-point slack without hiding real
/// violations.
const BOUND_TOL: f64 = 1e-12;

/// Relative tolerance for the membership test; the sup construction is
/// exact, slack only covers rounding.
const MEMBERSHIP_TOL: f64 = 1e-10;

const VALIDATION_NODES: usize = 10_000;

impl<F: Scalar> DensityRatioClass<F> {
    /// Build a class from bound evaluators, validating `l <= u` on a
    /// lattice and computing the mass ratio by quadrature.
    pub fn make(
        lower: DensityFn<F>,
        upper: DensityFn<F>,
        support: Rect<F>,
        quad: QuadratureConfig,
    ) -> Result<Self> {
        let vgrid = quad.validation_grid(&support, VALIDATION_NODES)?;
        let mut buf = Vec::with_capacity(support.dim());
        let mut sup_u = F::zero();
        for i in 0..vgrid.len() {
            vgrid.node_into(i, &mut buf);
            let u = (upper)(&buf);
            if !u.is_finite() || u < F::zero() {
                return Err(CoreError::DegenerateMass(format!(
                    "upper bound not finite/nonnegative at {:?}",
                    buf.iter().map(|v| v.f64()).collect::<Vec<_>>()
                )));
            }
            if u > sup_u {
                sup_u = u;
            }
        }
        if sup_u <= F::zero() {
            return Err(CoreError::DegenerateMass(
                "upper bound vanishes on the validation lattice".into(),
            ));
        }
        let tol = F::of(BOUND_TOL) * sup_u;
        for i in 0..vgrid.len() {
            vgrid.node_into(i, &mut buf);
            let l = (lower)(&buf);
            let u = (upper)(&buf);
            if !l.is_finite() || l < F::zero() {
                return Err(CoreError::DegenerateMass(format!(
                    "lower bound not finite/nonnegative at {:?}",
                    buf.iter().map(|v| v.f64()).collect::<Vec<_>>()
                )));
            }
            if l > u + tol {
                return Err(CoreError::BoundViolation {
                    point: buf.iter().map(|v| v.f64()).collect(),
                    lower: l.f64(),
                    upper: u.f64(),
                });
            }
        }

        let igrid = quad.grid_for(&support)?;
        let lvals = igrid.tabulate(|x| (lower)(x));
        let uvals = igrid.tabulate(|x| (upper)(x));
        let mass_lower = igrid.integrate(&lvals);
        let mass_upper = igrid.integrate(&uvals);
        if !(mass_lower > F::zero()) {
            return Err(CoreError::DegenerateMass(format!(
                "lower bound mass {} is not positive",
                mass_lower.f64()
            )));
        }
        if !mass_upper.is_finite() || !(mass_upper > F::zero()) {
            return Err(CoreError::DegenerateMass(format!(
                "upper bound mass {} is not finite and positive",
                mass_upper.f64()
            )));
        }
        Ok(DensityRatioClass {
            lower,
            upper,
            support,
            mass_lower,
            mass_upper,
            quad,
        })
    }

    /// Ratio of integrated upper to lower bound mass.
    pub fn r(&self) -> F {
        self.mass_upper / self.mass_lower
    }

    pub fn support(&self) -> &Rect<F> {
        &self.support
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        self.quad
    }

    pub fn lower_mass(&self) -> F {
        self.mass_lower
    }

    pub fn upper_mass(&self) -> F {
        self.mass_upper
    }

    pub fn lower_at(&self, x: &[F]) -> F {
        (self.lower)(x)
    }

    pub fn upper_at(&self, x: &[F]) -> F {
        (self.upper)(x)
    }

    /// Normalized lower bound evaluator.
    pub fn lower_norm_at(&self, x: &[F]) -> F {
        (self.lower)(x) / self.mass_lower
    }

    /// Normalized upper bound evaluator.
    pub fn upper_norm_at(&self, x: &[F]) -> F {
        (self.upper)(x) / self.mass_upper
    }

    /// Lower and upper probability of an event: the extreme probabilities
    /// over all densities in the class. Fails if the coarse/fine quadrature
    /// residual on the event masses exceeds the configured tolerance.
    pub fn lower_upper_probability(&self, event: &ParamEvent<F>) -> Result<(F, F)> {
        let grid = self.quad.grid_for(&self.support)?;
        let lvals = grid.tabulate(|x| (self.lower)(x));
        let uvals = grid.tabulate(|x| (self.upper)(x));
        let fine = event_masses(&grid, &lvals, &uvals, event);
        // residual check against the nested half-resolution lattice
        let (cgrid, clv) = grid.values_on_coarse(&lvals);
        let (_, cuv) = grid.values_on_coarse(&uvals);
        let coarse = event_masses(&cgrid, &clv, &cuv, event);
        let probs = bound_probabilities(fine);
        let probs_c = bound_probabilities(coarse);
        let res = (probs.0 - probs_c.0)
            .abs()
            .max((probs.1 - probs_c.1).abs())
            .f64();
        if res > self.quad.residual_tol {
            return Err(CoreError::IntegrationFailure {
                residual: res,
                tol: self.quad.residual_tol,
            });
        }
        Ok(probs)
    }

    /// Posterior class: multiply both bounds by the likelihood. The
    /// returned class's `r` is the posterior mass ratio `r(y)`. The
    /// likelihood is rescaled by its lattice maximum for stability; the
    /// class is invariant under joint rescaling.
    pub fn update(&self, loglik: impl Fn(&[F]) -> F + Send + Sync + 'static) -> Result<Self> {
        let grid = self.quad.grid_for(&self.support)?;
        let mut buf = Vec::with_capacity(self.support.dim());
        let mut max_ll = F::neg_infinity();
        for i in 0..grid.len() {
            grid.node_into(i, &mut buf);
            let ll = loglik(&buf);
            if ll.is_nan() {
                return Err(CoreError::InvalidConfig(format!(
                    "log-likelihood is NaN at {:?}",
                    buf.iter().map(|v| v.f64()).collect::<Vec<_>>()
                )));
            }
            if ll > max_ll {
                max_ll = ll;
            }
        }
        if !max_ll.is_finite() {
            return Err(CoreError::DegenerateMass(
                "log-likelihood is -inf everywhere on the support lattice".into(),
            ));
        }
        let loglik = Arc::new(loglik);
        let (ll_l, ll_u) = (Arc::clone(&loglik), loglik);
        let lower = Arc::clone(&self.lower);
        let upper = Arc::clone(&self.upper);
        let new_lower: DensityFn<F> =
            Arc::new(move |x: &[F]| lower(x) * (ll_l(x) - max_ll).exp());
        let new_upper: DensityFn<F> =
            Arc::new(move |x: &[F]| upper(x) * (ll_u(x) - max_ll).exp());
        DensityRatioClass::make(new_lower, new_upper, self.support.clone(), self.quad).map_err(
            |e| match e {
                CoreError::DegenerateMass(m) => {
                    CoreError::DegenerateMass(format!("posterior update: {m}"))
                }
                other => other,
            },
        )
    }

    /// Tabulate both bounds on a lattice for the grid operations.
    pub fn to_grid(&self, shape: Vec<usize>) -> Result<GridClass<F>> {
        let grid = Grid::new(self.support.clone(), shape)?;
        let lower = grid.tabulate(|x| (self.lower)(x));
        let upper = grid.tabulate(|x| (self.upper)(x));
        GridClass::new(grid, lower, upper)
    }
}

fn event_masses<F: Scalar>(
    grid: &Grid<F>,
    lvals: &[F],
    uvals: &[F],
    event: &ParamEvent<F>,
) -> (F, F, F, F) {
    let l_in = grid.integrate_where(lvals, |x| event.contains(x));
    let u_in = grid.integrate_where(uvals, |x| event.contains(x));
    let l_out = grid.integrate_where(lvals, |x| !event.contains(x));
    let u_out = grid.integrate_where(uvals, |x| !event.contains(x));
    (l_in, u_in, l_out, u_out)
}

fn bound_probabilities<F: Scalar>((l_in, u_in, l_out, u_out): (F, F, F, F)) -> (F, F) {
    let p_lower = if l_in + u_out > F::zero() {
        l_in / (l_in + u_out)
    } else {
        F::zero()
    };
    let p_upper = if u_in + l_out > F::zero() {
        u_in / (u_in + l_out)
    } else if u_in > F::zero() {
        F::one()
    } else {
        F::zero()
    };
    (p_lower, p_upper)
}

/// Density ratio class tabulated on a lattice.
#[derive(Debug, Clone)]
pub struct GridClass<F> {
    grid: Grid<F>,
    lower: Vec<F>,
    upper: Vec<F>,
}

impl<F: Scalar> GridClass<F> {
    pub fn new(grid: Grid<F>, lower: Vec<F>, upper: Vec<F>) -> Result<Self> {
        if lower.len() != grid.len() || upper.len() != grid.len() {
            return Err(CoreError::GridMismatch(
                "bound tables must match the grid size".into(),
            ));
        }
        let sup_u = upper.iter().cloned().fold(F::zero(), F::max);
        let tol = F::of(BOUND_TOL) * sup_u;
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || *l < F::zero() || *u < F::zero() {
                return Err(CoreError::DegenerateMass(format!(
                    "non-finite or negative bound at node {i}"
                )));
            }
            if *l > *u + tol {
                return Err(CoreError::BoundViolation {
                    point: grid.node(i).iter().map(|v| v.f64()).collect(),
                    lower: l.f64(),
                    upper: u.f64(),
                });
            }
        }
        Ok(GridClass { grid, lower, upper })
    }

    pub fn grid(&self) -> &Grid<F> {
        &self.grid
    }

    pub fn lower(&self) -> &[F] {
        &self.lower
    }

    pub fn upper(&self) -> &[F] {
        &self.upper
    }

    pub fn lower_mass(&self) -> F {
        self.grid.integrate(&self.lower)
    }

    pub fn upper_mass(&self) -> F {
        self.grid.integrate(&self.upper)
    }

    pub fn r(&self) -> F {
        self.upper_mass() / self.lower_mass()
    }

    /// Marginal class on the kept axes; the mass ratio is unchanged.
    pub fn marginalize(&self, keep: &[usize]) -> Result<GridClass<F>> {
        let (g, l) = self.grid.marginalize(&self.lower, keep)?;
        let (_, u) = self.grid.marginalize(&self.upper, keep)?;
        GridClass::new(g, l, u)
    }

    /// Formula route for the event probability bounds (normalized-density
    /// form with the mass ratio `r`).
    pub fn lower_upper_probability(&self, event: &ParamEvent<F>) -> (F, F) {
        let ml = self.lower_mass();
        let mu = self.upper_mass();
        let r = mu / ml;
        let lhat_in = self.grid.integrate_where(&self.lower, |x| event.contains(x)) / ml;
        let uhat_in = self.grid.integrate_where(&self.upper, |x| event.contains(x)) / mu;
        let lhat_out = self.grid.integrate_where(&self.lower, |x| !event.contains(x)) / ml;
        let uhat_out = self.grid.integrate_where(&self.upper, |x| !event.contains(x)) / mu;
        let p_lower = if lhat_in > F::zero() || uhat_out > F::zero() {
            lhat_in / (lhat_in + r * uhat_out)
        } else {
            F::zero()
        };
        let p_upper = if uhat_in > F::zero() || lhat_out > F::zero() {
            uhat_in / (uhat_in + lhat_out / r)
        } else {
            F::zero()
        };
        (p_lower, p_upper)
    }

    /// Independent oracle: realize the extremizing densities explicitly
    /// (upper bound on the event and lower bound off it for the upper
    /// probability, and vice versa), normalize, and integrate.
    pub fn brute_force_event_bounds(&self, event: &ParamEvent<F>) -> (F, F) {
        let n = self.grid.len();
        let mut buf = Vec::with_capacity(self.grid.dim());
        let mut pi_up = vec![F::zero(); n];
        let mut pi_lo = vec![F::zero(); n];
        for i in 0..n {
            self.grid.node_into(i, &mut buf);
            if event.contains(&buf) {
                pi_up[i] = self.upper[i];
                pi_lo[i] = self.lower[i];
            } else {
                pi_up[i] = self.lower[i];
                pi_lo[i] = self.upper[i];
            }
        }
        let mass_up = self.grid.integrate(&pi_up);
        let mass_lo = self.grid.integrate(&pi_lo);
        let in_up = self.grid.integrate_where(&pi_up, |x| event.contains(x));
        let in_lo = self.grid.integrate_where(&pi_lo, |x| event.contains(x));
        let p_upper = if mass_up > F::zero() {
            in_up / mass_up
        } else {
            F::zero()
        };
        let p_lower = if mass_lo > F::zero() {
            in_lo / mass_lo
        } else {
            F::zero()
        };
        (p_lower, p_upper)
    }

    /// Membership test from the ratio characterization: a candidate grid
    /// density belongs to the class iff `c * l <= candidate <= c * u`
    /// pointwise for `c = sup(candidate / u)`. Requires `l > 0` on the
    /// grid. Returns the membership flag and `c`.
    pub fn membership(&self, candidate: &GridDensity<F>) -> Result<(bool, F)> {
        if candidate.grid() != &self.grid {
            return Err(CoreError::GridMismatch(
                "candidate density lives on a different grid".into(),
            ));
        }
        if self.lower.iter().any(|l| *l <= F::zero()) {
            return Err(CoreError::InvalidConfig(
                "membership test requires a strictly positive lower bound".into(),
            ));
        }
        let mut c = F::zero();
        for (pi, u) in candidate.values().iter().zip(&self.upper) {
            if *u <= F::zero() {
                if *pi > F::zero() {
                    return Ok((false, F::infinity()));
                }
                continue;
            }
            let ratio = *pi / *u;
            if ratio > c {
                c = ratio;
            }
        }
        if c <= F::zero() {
            // candidate vanishes everywhere; cannot dominate c * l > 0
            return Ok((false, c));
        }
        let tol = F::of(MEMBERSHIP_TOL);
        let member = candidate
            .values()
            .iter()
            .zip(&self.lower)
            .all(|(pi, l)| c * *l <= *pi * (F::one() + tol) + F::min_positive_value());
        Ok((member, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform_half_class() -> DensityRatioClass<f64> {
        // l = 0.5 * U(0,1), u = U(0,1)
        DensityRatioClass::make(
            Arc::new(|_: &[f64]| 0.5),
            Arc::new(|_: &[f64]| 1.0),
            Rect::interval(0.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap()
    }

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        crate::special::normal_pdf(x, mean, var)
    }

    #[test]
    fn mass_ratio_for_scaled_uniform() {
        let class = uniform_half_class();
        assert_relative_eq!(class.r(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn identical_bounds_have_unit_ratio() {
        let class = DensityRatioClass::make(
            Arc::new(|x: &[f64]| normal_pdf(x[0], 0.0, 1.0)),
            Arc::new(|x: &[f64]| normal_pdf(x[0], 0.0, 1.0)),
            Rect::interval(-8.0, 8.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(class.r(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lognormal_class_ratio_is_three() {
        // l = (1/3) LogNormal(0.25 + 1/16, 1/4), u = LogNormal(0.25 + 1/4, 1/2)
        let lnpdf = |x: f64, mu: f64, sig: f64| -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            let z = (x.ln() - mu) / sig;
            (-0.5 * z * z).exp() / (x * sig * (2.0 * std::f64::consts::PI).sqrt())
        };
        let class = DensityRatioClass::make(
            Arc::new(move |x: &[f64]| lnpdf(x[0], 0.25 + 1.0 / 16.0, 0.25) / 3.0),
            Arc::new(move |x: &[f64]| lnpdf(x[0], 0.25 + 0.25, 0.5)),
            Rect::interval(1e-9, 40.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(class.r(), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn bound_violation_is_rejected() {
        let res = DensityRatioClass::make(
            Arc::new(|_: &[f64]| 1.1),
            Arc::new(|_: &[f64]| 1.0),
            Rect::interval(0.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        );
        assert!(matches!(res, Err(CoreError::BoundViolation { .. })));
    }

    #[test]
    fn zero_lower_mass_is_rejected() {
        let res = DensityRatioClass::make(
            Arc::new(|_: &[f64]| 0.0),
            Arc::new(|_: &[f64]| 1.0),
            Rect::interval(0.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        );
        assert!(matches!(res, Err(CoreError::DegenerateMass(_))));
    }

    #[test]
    fn event_bounds_for_half_interval() {
        // E = [0, 0.5]: lower 1/3, upper 2/3 for the l = u/2 class
        let class = uniform_half_class();
        let event = ParamEvent::rect(Rect::interval(0.0, 0.5).unwrap(), "left half");
        let (pl, pu) = class.lower_upper_probability(&event).unwrap();
        assert_relative_eq!(pl, 1.0 / 3.0, epsilon = 1e-3);
        assert_relative_eq!(pu, 2.0 / 3.0, epsilon = 1e-3);

        // identical bounds collapse to a single probability
        let single = DensityRatioClass::make(
            Arc::new(|_: &[f64]| 1.0),
            Arc::new(|_: &[f64]| 1.0),
            Rect::interval(0.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        let (pl, pu) = single.lower_upper_probability(&event).unwrap();
        assert_relative_eq!(pl, pu, epsilon = 1e-12);

        // full support event has probability one on both sides
        let (pl, pu) = class.lower_upper_probability(&ParamEvent::full()).unwrap();
        assert_relative_eq!(pl, 1.0, epsilon = 1e-12);
        assert_relative_eq!(pu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_likelihood_update_is_identity() {
        let class = uniform_half_class();
        let updated = class.update(|_| -3.5).unwrap();
        assert_relative_eq!(updated.r(), class.r(), epsilon = 1e-10);
        let event = ParamEvent::rect(Rect::interval(0.2, 0.7).unwrap(), "mid");
        let (pl0, pu0) = class.lower_upper_probability(&event).unwrap();
        let (pl1, pu1) = updated.lower_upper_probability(&event).unwrap();
        assert_relative_eq!(pl0, pl1, epsilon = 1e-10);
        assert_relative_eq!(pu0, pu1, epsilon = 1e-10);
    }

    #[test]
    fn posterior_ratio_matches_two_route_quadrature() {
        // identical normalized bounds at different scales: r(y) must equal
        // r times the ratio of normalized-bound predictive masses
        let class = DensityRatioClass::make(
            Arc::new(|x: &[f64]| 0.5 * normal_pdf(x[0], 0.0, 1.0)),
            Arc::new(|x: &[f64]| normal_pdf(x[0], 0.0, 1.0)),
            Rect::interval(-10.0, 10.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        let y = 2.0;
        let updated = class.update(move |x| -0.5 * (y - x[0]) * (y - x[0])).unwrap();
        // independent route: two separate quadratures of likelihood against
        // the normalized bounds
        let grid = class.quadrature().grid_for(class.support()).unwrap();
        let num = grid.integrate(&grid.tabulate(|x| {
            class.upper_norm_at(x) * (-0.5f64 * (y - x[0]) * (y - x[0])).exp()
        }));
        let den = grid.integrate(&grid.tabulate(|x| {
            class.lower_norm_at(x) * (-0.5f64 * (y - x[0]) * (y - x[0])).exp()
        }));
        let expected = class.r() * num / den;
        assert_relative_eq!(updated.r(), expected, epsilon = 1e-8);
        // and with equal normalized bounds the ratio is just r
        assert_relative_eq!(updated.r(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn unit_ratio_class_stays_unit_after_update() {
        let class = DensityRatioClass::make(
            Arc::new(|x: &[f64]| normal_pdf(x[0], 0.0, 1.0)),
            Arc::new(|x: &[f64]| normal_pdf(x[0], 0.0, 1.0)),
            Rect::interval(-10.0, 10.0).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        for y in [-1.0, 0.3, 2.5] {
            let updated = class.update(move |x| -0.5 * (y - x[0]) * (y - x[0])).unwrap();
            assert_relative_eq!(updated.r(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn grid_marginal_of_product_class() {
        // l(t) = l1(t0) l2(t1), u(t) = u1(t0) l2(t1): the t0 marginal is
        // proportional to (l1, u1) and r is preserved
        let l1 = |t: f64| normal_pdf(t, 0.0, 1.0);
        let u1 = |t: f64| 2.0 * normal_pdf(t, 0.0, 1.5);
        let l2 = |t: f64| normal_pdf(t, 1.0, 0.5);
        let class = DensityRatioClass::make(
            Arc::new(move |x: &[f64]| l1(x[0]) * l2(x[1])),
            Arc::new(move |x: &[f64]| u1(x[0]) * l2(x[1])),
            Rect::new(vec![-9.0, -6.0], vec![9.0, 8.0]).unwrap(),
            QuadratureConfig::default(),
        )
        .unwrap();
        let gc = class.to_grid(vec![257, 257]).unwrap();
        let marg = gc.marginalize(&[0]).unwrap();
        assert_relative_eq!(marg.r(), gc.r(), epsilon = 1e-10);
        // proportionality of the marginal lower bound to l1
        let coords = marg.grid().axis_coords(0);
        let mid = marg.lower()[128] / l1(coords[128]);
        for i in (8..249).step_by(20) {
            assert_relative_eq!(marg.lower()[i] / l1(coords[i]), mid, max_relative = 1e-6);
        }
        let midu = marg.upper()[128] / u1(coords[128]);
        for i in (8..249).step_by(20) {
            assert_relative_eq!(marg.upper()[i] / u1(coords[i]), midu, max_relative = 1e-6);
        }
    }

    #[test]
    fn membership_accepts_bounds_and_mixtures() {
        let class = uniform_half_class();
        let gc = class.to_grid(vec![1001]).unwrap();
        let grid = gc.grid().clone();
        // normalized upper bound is a member
        let uhat = GridDensity::from_fn(grid.clone(), |_| 1.0).unwrap();
        let (ok, c) = gc.membership(&uhat).unwrap();
        assert!(ok);
        assert_relative_eq!(c, 1.0, epsilon = 1e-12);
        // renormalized geometric mean of the bounds is a member
        let geo = GridDensity::from_fn(grid.clone(), |_| (0.5f64).sqrt() / 0.7071).unwrap();
        assert!(gc.membership(&geo).unwrap().0);
        // a density with a spike above the upper bound is not
        let spike = GridDensity::from_fn(grid, |x| if x[0] < 0.001 { 10.0 } else { 1.0 }).unwrap();
        assert!(!gc.membership(&spike).unwrap().0);
    }

    #[test]
    fn unresolved_spike_fails_integration_check() {
        // a spike far narrower than the lattice step is unresolved: the
        // coarse and fine event masses disagree and the residual guard fires
        // centered on a node of the fine lattice that the coarse one skips
        let c0 = 65.0 / 128.0;
        let spike = move |x: f64| (-(x - c0) * (x - c0) / (2.0 * 1e-10)).exp() + 1e-3;
        let class = DensityRatioClass::make(
            Arc::new(move |x: &[f64]| 0.5 * spike(x[0])),
            Arc::new(move |x: &[f64]| spike(x[0])),
            Rect::interval(0.0, 1.0).unwrap(),
            QuadratureConfig {
                nodes_1d: 129,
                ..QuadratureConfig::default()
            },
        )
        .unwrap();
        let event = ParamEvent::rect(Rect::interval(0.0, 0.25).unwrap(), "left quarter");
        assert!(matches!(
            class.lower_upper_probability(&event),
            Err(CoreError::IntegrationFailure { .. })
        ));
    }

    #[test]
    fn brute_force_agrees_with_formula() {
        let class = uniform_half_class();
        let gc = class.to_grid(vec![10_001]).unwrap();
        let event = ParamEvent::rect(Rect::interval(0.0, 0.5).unwrap(), "left");
        let (bl, bu) = gc.brute_force_event_bounds(&event);
        let (fl, fu) = gc.lower_upper_probability(&event);
        assert_relative_eq!(bl, fl, epsilon = 1e-10);
        assert_relative_eq!(bu, fu, epsilon = 1e-10);
        // analytic values up to the O(h) boundary weight of the masked sums
        assert_relative_eq!(bl, 1.0 / 3.0, epsilon = 1e-4);
        assert_relative_eq!(bu, 2.0 / 3.0, epsilon = 1e-4);
        // degenerate events
        let (el, eu) = gc.brute_force_event_bounds(&ParamEvent::empty());
        assert_eq!((el, eu), (0.0, 0.0));
        let (fl2, fu2) = gc.brute_force_event_bounds(&ParamEvent::full());
        assert_relative_eq!(fl2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fu2, 1.0, epsilon = 1e-12);
    }
}
