//! Invertible condition-dependent transport maps. Each layer rescales and
//! shifts part of the state using a conditioner network fed by the
//! untransformed part and the condition vector; scalar targets use layers
//! whose conditioner sees only the condition, which keeps them exactly
//! invertible without coupling.

use drbayes_core::{Scalar, Stream};
use ndarray::{s, Array1, Array2, Axis};

use crate::error::{FlowError, Result};
use crate::net::{Mlp, MlpCache, MlpGrads};

/// Scale outputs pass through `3 tanh(.)` before exponentiation, keeping
/// every Jacobian factor in `[e^-3, e^3]`.
const SCALE_CLAMP: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    /// Coupling blocks for targets of dimension >= 2.
    pub coupling_blocks: usize,
    /// Conditioner hidden width (two hidden layers).
    pub hidden: usize,
    /// Chain length for one-dimensional targets.
    pub ar_layers: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            coupling_blocks: 6,
            hidden: 64,
            ar_layers: 4,
        }
    }
}

/// One affine layer. `mask[i] = true` marks pass-through coordinates that
/// feed the conditioner together with the condition vector; the remaining
/// coordinates are rescaled and shifted. An empty mask (no pass-through)
/// makes the conditioner a function of the condition alone.
#[derive(Debug, Clone)]
pub struct AffineLayer<F> {
    mask: Vec<bool>,
    net: Mlp<F>,
}

pub struct LayerCache<F> {
    net_cache: MlpCache<F>,
    s_clamped: Array2<F>,
    s_raw: Array2<F>,
    xb: Array2<F>,
}

impl<F: Scalar> AffineLayer<F> {
    fn new(mask: Vec<bool>, cond_dim: usize, hidden: usize, rng: &mut Stream) -> Self {
        let n_pass = mask.iter().filter(|&&m| m).count();
        let n_act = mask.len() - n_pass;
        assert!(n_act >= 1, "a layer must transform something");
        AffineLayer {
            net: Mlp::new(n_pass + cond_dim, hidden, 2 * n_act, rng),
            mask,
        }
    }

    fn split_idx(&self) -> (Vec<usize>, Vec<usize>) {
        let pass: Vec<usize> = (0..self.mask.len()).filter(|&i| self.mask[i]).collect();
        let act: Vec<usize> = (0..self.mask.len()).filter(|&i| !self.mask[i]).collect();
        (pass, act)
    }

    fn net_input(&self, x: &Array2<F>, c: &Array2<F>, pass: &[usize]) -> Array2<F> {
        let b = x.nrows();
        let mut input = Array2::zeros((b, pass.len() + c.ncols()));
        for (k, &i) in pass.iter().enumerate() {
            input.column_mut(k).assign(&x.column(i));
        }
        input
            .slice_mut(s![.., pass.len()..])
            .assign(c);
        input
    }

    /// Forward transport of a batch; returns the transformed batch, the
    /// per-row log-determinant contribution, and the cache for backward.
    fn forward(&self, x: &Array2<F>, c: &Array2<F>) -> (Array2<F>, Array1<F>, LayerCache<F>) {
        let (pass, act) = self.split_idx();
        let input = self.net_input(x, c, &pass);
        let (out, net_cache) = self.net.forward(&input);
        let clamp = F::of(SCALE_CLAMP);
        let s_raw = out.slice(s![.., ..act.len()]).to_owned();
        let t = out.slice(s![.., act.len()..]).to_owned();
        let s_clamped = s_raw.mapv(|v| clamp * v.tanh());
        let mut xb = Array2::zeros((x.nrows(), act.len()));
        for (k, &i) in act.iter().enumerate() {
            xb.column_mut(k).assign(&x.column(i));
        }
        let yb = &xb * &s_clamped.mapv(|v| v.exp()) + &t;
        let mut y = x.clone();
        for (k, &i) in act.iter().enumerate() {
            y.column_mut(i).assign(&yb.column(k));
        }
        let logdet = s_clamped.sum_axis(Axis(1));
        (
            y,
            logdet,
            LayerCache {
                net_cache,
                s_clamped,
                s_raw,
                xb,
            },
        )
    }

    /// Backward pass: gradients of the loss with respect to the layer
    /// input, given gradients with respect to the output and to the
    /// per-row log-determinant.
    fn backward(
        &self,
        cache: &LayerCache<F>,
        dy: &Array2<F>,
        dlogdet: &Array1<F>,
        grads: &mut MlpGrads<F>,
    ) -> Array2<F> {
        let (pass, act) = self.split_idx();
        let clamp = F::of(SCALE_CLAMP);
        let es = cache.s_clamped.mapv(|v| v.exp());
        let mut dyb = Array2::zeros((dy.nrows(), act.len()));
        for (k, &i) in act.iter().enumerate() {
            dyb.column_mut(k).assign(&dy.column(i));
        }
        // y_b = x_b e^s + t
        let dxb = &dyb * &es;
        let mut ds = &dyb * &es * &cache.xb;
        for (mut row, &dl) in ds.axis_iter_mut(Axis(0)).zip(dlogdet.iter()) {
            row.mapv_inplace(|v| v + dl);
        }
        let one = F::one();
        let ds_raw = &ds * &cache.s_raw.mapv(|v| {
            let t = v.tanh();
            clamp * (one - t * t)
        });
        let mut dout = Array2::zeros((dy.nrows(), 2 * act.len()));
        dout.slice_mut(s![.., ..act.len()]).assign(&ds_raw);
        dout.slice_mut(s![.., act.len()..]).assign(&dyb);
        let dinput = self.net.backward(&cache.net_cache, &dout, grads);
        let mut dx = Array2::zeros(dy.raw_dim());
        for (k, &i) in pass.iter().enumerate() {
            let dpass = &dy.column(i) + &dinput.column(k);
            dx.column_mut(i).assign(&dpass);
        }
        for (k, &i) in act.iter().enumerate() {
            dx.column_mut(i).assign(&dxb.column(k));
        }
        dx
    }

    /// Exact inverse of the forward transport.
    fn inverse(&self, y: &Array2<F>, c: &Array2<F>) -> Array2<F> {
        let (pass, act) = self.split_idx();
        // pass-through coordinates are unchanged, so the conditioner input
        // is recoverable from the output
        let input = self.net_input(y, c, &pass);
        let out = self.net.forward_only(&input);
        let clamp = F::of(SCALE_CLAMP);
        let s_clamped = out.slice(s![.., ..act.len()]).mapv(|v| clamp * v.tanh());
        let t = out.slice(s![.., act.len()..]);
        let mut x = y.clone();
        for (k, &i) in act.iter().enumerate() {
            let xb = (&y.column(i) - &t.column(k)) * s_clamped.column(k).mapv(|v| (-v).exp());
            x.column_mut(i).assign(&xb);
        }
        x
    }
}

/// Per-coordinate affine standardizer frozen from training data.
#[derive(Debug, Clone)]
pub struct Standardizer<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![F::zero(); dim],
            scale: vec![F::one(); dim],
        }
    }

    pub fn fit(data: &Array2<F>) -> Self {
        let n = data.nrows().max(1);
        let mean: Vec<F> = (0..data.ncols())
            .map(|j| data.column(j).sum() / F::of(n as f64))
            .collect();
        let scale: Vec<F> = (0..data.ncols())
            .map(|j| {
                let m = mean[j];
                let var = data
                    .column(j)
                    .iter()
                    .map(|v| (*v - m) * (*v - m))
                    .fold(F::zero(), |a, b| a + b)
                    / F::of(n as f64);
                let sd = var.sqrt();
                // constant coordinates standardize to zero with unit scale
                if sd > F::of(1e-12) * (F::one() + m.abs()) {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, data: &Array2<F>) -> Array2<F> {
        let mut out = data.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn invert(&self, data: &Array2<F>) -> Array2<F> {
        let mut out = data.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }

    pub fn log_jacobian(&self) -> F {
        self.scale
            .iter()
            .map(|s| s.ln())
            .fold(F::zero(), |a, b| a + b)
    }
}

/// Conditional normalizing flow: standardizers, a stack of affine layers,
/// and a standard normal base on the target dimension.
#[derive(Debug, Clone)]
pub struct ConditionalFlow<F> {
    target_dim: usize,
    cond_dim: usize,
    hidden: usize,
    layers: Vec<AffineLayer<F>>,
    pub x_std: Standardizer<F>,
    pub c_std: Standardizer<F>,
}

impl<F: Scalar> ConditionalFlow<F> {
    /// Fresh identity-initialized flow. Scalar targets get `ar_layers`
    /// condition-only affine layers; otherwise `coupling_blocks` coupling
    /// layers with alternating even/odd masks.
    pub fn new(target_dim: usize, cond_dim: usize, cfg: &FlowConfig, rng: &mut Stream) -> Result<Self> {
        if target_dim == 0 || cond_dim == 0 {
            return Err(FlowError::InvalidConfig(
                "target and condition dimensions must be positive".into(),
            ));
        }
        let mut layers = Vec::new();
        let layer_rng = rng.derive("layers");
        if target_dim == 1 {
            for k in 0..cfg.ar_layers {
                let mut r = layer_rng.derive_index(k as u64);
                layers.push(AffineLayer::new(vec![false], cond_dim, cfg.hidden, &mut r));
            }
        } else {
            for k in 0..cfg.coupling_blocks {
                let mask: Vec<bool> = (0..target_dim)
                    .map(|i| if k % 2 == 0 { i % 2 == 0 } else { i % 2 == 1 })
                    .collect();
                let mut r = layer_rng.derive_index(k as u64);
                layers.push(AffineLayer::new(mask, cond_dim, cfg.hidden, &mut r));
            }
        }
        Ok(ConditionalFlow {
            target_dim,
            cond_dim,
            hidden: cfg.hidden,
            layers,
            x_std: Standardizer::identity(target_dim),
            c_std: Standardizer::identity(cond_dim),
        })
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }

    pub fn fit_standardizers(&mut self, targets: &Array2<F>, conds: &Array2<F>) {
        self.x_std = Standardizer::fit(targets);
        self.c_std = Standardizer::fit(conds);
    }

    fn check_dims(&self, x_cols: usize, c_cols: usize) -> Result<()> {
        if x_cols != self.target_dim || c_cols != self.cond_dim {
            return Err(FlowError::DimensionMismatch(format!(
                "flow is ({} | {}), got ({x_cols} | {c_cols})",
                self.target_dim, self.cond_dim
            )));
        }
        Ok(())
    }

    /// Transport standardized targets to base space; returns latent values
    /// and per-row log-determinants (standardizer excluded).
    fn forward_std(&self, xs: &Array2<F>, cs: &Array2<F>) -> (Array2<F>, Array1<F>, Vec<LayerCache<F>>) {
        let mut state = xs.clone();
        let mut logdet = Array1::zeros(xs.nrows());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, ld, cache) = layer.forward(&state, cs);
            state = next;
            logdet = logdet + ld;
            caches.push(cache);
        }
        (state, logdet, caches)
    }

    /// Log-density of a batch of targets given conditions.
    pub fn log_density_batch(&self, x: &Array2<F>, c: &Array2<F>) -> Result<Array1<F>> {
        self.check_dims(x.ncols(), c.ncols())?;
        let xs = self.x_std.apply(x);
        let cs = self.c_std.apply(c);
        let (z, logdet, _) = self.forward_std(&xs, &cs);
        let half = F::of(0.5);
        let ln2pi = F::of((2.0 * std::f64::consts::PI).ln());
        let d = F::of(self.target_dim as f64);
        let mut out = Array1::zeros(x.nrows());
        for (i, v) in out.iter_mut().enumerate() {
            let zrow = z.row(i);
            let quad: F = zrow.iter().map(|u| *u * *u).fold(F::zero(), |a, b| a + b);
            *v = -half * quad - half * d * ln2pi + logdet[i] - self.x_std.log_jacobian();
        }
        for v in out.iter() {
            if !v.is_finite() {
                return Err(FlowError::NonFiniteOutput(format!(
                    "log-density {}",
                    v.f64()
                )));
            }
        }
        Ok(out)
    }

    pub fn log_density(&self, x: &[F], c: &[F]) -> Result<F> {
        let xa = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| FlowError::DimensionMismatch(e.to_string()))?;
        let ca = Array2::from_shape_vec((1, c.len()), c.to_vec())
            .map_err(|e| FlowError::DimensionMismatch(e.to_string()))?;
        Ok(self.log_density_batch(&xa, &ca)?[0])
    }

    /// Mean negative log-likelihood of the batch and its parameter
    /// gradient, accumulated into `grads` (one entry per layer).
    pub fn nll_grad_batch(
        &self,
        x: &Array2<F>,
        c: &Array2<F>,
        grads: &mut [MlpGrads<F>],
    ) -> Result<F> {
        self.check_dims(x.ncols(), c.ncols())?;
        let b = x.nrows();
        let bf = F::of(b as f64);
        let xs = self.x_std.apply(x);
        let cs = self.c_std.apply(c);
        let (z, logdet, caches) = self.forward_std(&xs, &cs);
        let half = F::of(0.5);
        let ln2pi = F::of((2.0 * std::f64::consts::PI).ln());
        let d = F::of(self.target_dim as f64);
        let mut loss = F::zero();
        for i in 0..b {
            let quad: F = z.row(i).iter().map(|u| *u * *u).fold(F::zero(), |a, b| a + b);
            loss += half * quad + half * d * ln2pi - logdet[i] + self.x_std.log_jacobian();
        }
        loss = loss / bf;
        // dL/dz = z / B ; dL/dlogdet_row = -1/B
        let mut dstate = z.mapv(|v| v / bf);
        let dlogdet = Array1::from_elem(b, -F::one() / bf);
        for i in (0..self.layers.len()).rev() {
            dstate = self.layers[i].backward(&caches[i], &dstate, &dlogdet, &mut grads[i]);
        }
        Ok(loss)
    }

    /// Draw `n` samples at a single condition value.
    pub fn sample(&self, c: &[F], n: usize, rng: &mut Stream) -> Result<Array2<F>> {
        self.check_dims(self.target_dim, c.len())?;
        let z = Array2::from_shape_fn((n, self.target_dim), |_| rng.normal::<F>());
        let ca = Array2::from_shape_vec((1, c.len()), c.to_vec())
            .map_err(|e| FlowError::DimensionMismatch(e.to_string()))?;
        let cs_row = self.c_std.apply(&ca);
        let mut cs = Array2::zeros((n, self.cond_dim));
        for mut row in cs.axis_iter_mut(Axis(0)) {
            row.assign(&cs_row.row(0));
        }
        let mut state = z;
        for layer in self.layers.iter().rev() {
            state = layer.inverse(&state, &cs);
        }
        Ok(self.x_std.invert(&state))
    }

    /// Forward transport of one (target, condition) pair, returning the
    /// latent point and total log-determinant (standardizer included).
    pub fn forward_one(&self, x: &[F], c: &[F]) -> Result<(Vec<F>, F)> {
        self.check_dims(x.len(), c.len())?;
        let xa = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let ca = Array2::from_shape_vec((1, c.len()), c.to_vec()).unwrap();
        let xs = self.x_std.apply(&xa);
        let cs = self.c_std.apply(&ca);
        let (z, logdet, _) = self.forward_std(&xs, &cs);
        Ok((
            z.row(0).to_vec(),
            logdet[0] - self.x_std.log_jacobian(),
        ))
    }

    /// Inverse transport of one latent point.
    pub fn inverse_one(&self, z: &[F], c: &[F]) -> Result<Vec<F>> {
        self.check_dims(z.len(), c.len())?;
        let za = Array2::from_shape_vec((1, z.len()), z.to_vec()).unwrap();
        let ca = Array2::from_shape_vec((1, c.len()), c.to_vec()).unwrap();
        let cs = self.c_std.apply(&ca);
        let mut state = za;
        for layer in self.layers.iter().rev() {
            state = layer.inverse(&state, &cs);
        }
        Ok(self.x_std.invert(&state).row(0).to_vec())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_grads(&self) -> Vec<MlpGrads<F>> {
        self.layers.iter().map(|l| l.net.zero_grads()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.net.param_count()).sum()
    }

    pub fn get_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.net.push_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(FlowError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.net.load_params(&mut it);
        }
        Ok(())
    }

    pub fn flatten_grads(&self, grads: &[MlpGrads<F>]) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for g in grads {
            g.push_flat(&mut out);
        }
        out
    }

    pub(crate) fn layer_weights_shapes(&self) -> Vec<(usize, usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.net.in_dim(), l.net.hidden(), l.net.out_dim()))
            .collect()
    }

    pub(crate) fn rebuild(
        target_dim: usize,
        cond_dim: usize,
        hidden: usize,
        masks: Vec<Vec<bool>>,
        x_std: Standardizer<F>,
        c_std: Standardizer<F>,
        params: &[F],
    ) -> Result<Self> {
        let mut rng = Stream::new(0);
        let layers: Vec<AffineLayer<F>> = masks
            .into_iter()
            .map(|mask| AffineLayer::new(mask, cond_dim, hidden, &mut rng))
            .collect();
        let mut flow = ConditionalFlow {
            target_dim,
            cond_dim,
            hidden,
            layers,
            x_std,
            c_std,
        };
        flow.set_params(params)?;
        Ok(flow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fresh(target: usize, cond: usize, seed: u64) -> ConditionalFlow<f64> {
        let mut rng = Stream::new(seed);
        ConditionalFlow::new(target, cond, &FlowConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn identity_initialized_flow_is_standard_normal() {
        let flow = fresh(2, 3, 1);
        let x = [0.3, -1.2];
        let c = [0.0, 0.5, 2.0];
        let ld = flow.log_density(&x, &c).unwrap();
        let expected: f64 = x
            .iter()
            .map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln())
            .sum();
        assert_relative_eq!(ld, expected, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_inverse_forward() {
        for (t, cdim, seed) in [(1usize, 2usize, 3u64), (2, 1, 4), (3, 13, 5), (13, 3, 6)] {
            let mut flow = fresh(t, cdim, seed);
            // random-ish parameters so the transport is nontrivial
            let mut rng = Stream::new(seed).derive("params");
            let params: Vec<f64> = (0..flow.param_count())
                .map(|_| (rng.u01() - 0.5) * 0.8)
                .collect();
            flow.set_params(&params).unwrap();
            let mut xr = Stream::new(seed).derive("x");
            for _ in 0..20 {
                let x: Vec<f64> = (0..t).map(|_| xr.normal::<f64>() * 2.0).collect();
                let c: Vec<f64> = (0..cdim).map(|_| xr.normal::<f64>()).collect();
                let (z, _) = flow.forward_one(&x, &c).unwrap();
                let back = flow.inverse_one(&z, &c).unwrap();
                for (a, b) in x.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn samples_from_identity_flow_are_standard_normal() {
        let flow = fresh(1, 1, 7);
        let mut rng = Stream::new(70).derive("draws");
        let n = 10_000;
        let draws = flow.sample(&[0.0], n, &mut rng).unwrap();
        let mut xs: Vec<f64> = draws.column(0).to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // KS against the standard normal CDF at the 1% level
        let cdf = |x: f64| -> f64 {
            let z = x / 2.0f64.sqrt();
            if z >= 0.0 {
                1.0 - 0.5 * drbayes_core::special::gamma_q(0.5, z * z)
            } else {
                0.5 * drbayes_core::special::gamma_q(0.5, z * z)
            }
        };
        let mut ks: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let f = cdf(*x);
            ks = ks
                .max((i as f64 + 1.0) / n as f64 - f)
                .max(f - i as f64 / n as f64);
        }
        assert!(ks < 1.6276 / (n as f64).sqrt(), "ks {ks}");
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let flow = fresh(2, 2, 8);
        let a = flow
            .sample(&[0.1, 0.2], 5, &mut Stream::new(9).derive("s"))
            .unwrap();
        let b = flow
            .sample(&[0.1, 0.2], 5, &mut Stream::new(9).derive("s"))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standardizer_round_trip() {
        let data = Array2::from_shape_fn((50, 3), |(i, j)| (i as f64 * 0.7 + j as f64).sin() * 3.0 + j as f64);
        let std = Standardizer::fit(&data);
        let fwd = std.apply(&data);
        let back = std.invert(&fwd);
        for (a, b) in data.iter().zip(back.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let flow = fresh(2, 2, 10);
        assert!(matches!(
            flow.log_density(&[1.0], &[0.0, 0.0]),
            Err(FlowError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn log_density_positive_and_finite_on_random_inputs() {
        let mut flow = fresh(2, 2, 11);
        let mut rng = Stream::new(12).derive("p");
        let params: Vec<f64> = (0..flow.param_count())
            .map(|_| (rng.u01() - 0.5) * 0.6)
            .collect();
        flow.set_params(&params).unwrap();
        let mut xr = Stream::new(13);
        for _ in 0..2000 {
            let x = [xr.normal::<f64>() * 3.0, xr.normal::<f64>() * 3.0];
            let c = [xr.normal::<f64>(), xr.normal::<f64>()];
            let ld = flow.log_density(&x, &c).unwrap();
            assert!(ld.is_finite());
            assert!(ld.exp() > 0.0 || ld < -700.0);
        }
    }
}
