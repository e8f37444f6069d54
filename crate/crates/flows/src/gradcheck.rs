//! Finite-difference validation of the analytic gradients.

use drbayes_core::Scalar;
use ndarray::Array2;

use crate::error::Result;
use crate::flow::ConditionalFlow;

/// Compare the analytic gradient of the batch negative log-likelihood with
/// central finite differences over every parameter; returns the largest
/// relative error. The denominator is floored so that near-zero gradient
/// pairs compare absolutely.
pub fn gradient_check<F: Scalar>(
    flow: &mut ConditionalFlow<F>,
    targets: &Array2<F>,
    conds: &Array2<F>,
    step: f64,
) -> Result<f64> {
    let mut grads = flow.zero_grads();
    flow.nll_grad_batch(targets, conds, &mut grads)?;
    let analytic = flow.flatten_grads(&grads);
    let base = flow.get_params();
    let h = F::of(step);
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = plus[i] + h;
        flow.set_params(&plus)?;
        let mut sink = flow.zero_grads();
        let lp = flow.nll_grad_batch(targets, conds, &mut sink)?.f64();
        let mut minus = base.clone();
        minus[i] = minus[i] - h;
        flow.set_params(&minus)?;
        let lm = flow.nll_grad_batch(targets, conds, &mut sink)?.f64();
        let fd = (lp - lm) / (2.0 * step);
        let a = analytic[i].f64();
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        if rel > worst {
            worst = rel;
        }
    }
    flow.set_params(&base)?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use drbayes_core::Stream;

    fn batch(t: usize, c: usize, rows: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = Stream::new(seed);
        (
            Array2::from_shape_fn((rows, t), |_| rng.normal::<f64>()),
            Array2::from_shape_fn((rows, c), |_| rng.normal::<f64>()),
        )
    }

    #[test]
    fn fresh_flow_gradients_match_finite_differences() {
        for (t, c, seed) in [(1usize, 1usize, 40u64), (2, 1, 41), (3, 2, 42)] {
            let mut rng = Stream::new(seed);
            let mut flow = ConditionalFlow::new(
                t,
                c,
                &FlowConfig {
                    hidden: 12,
                    ..FlowConfig::default()
                },
                &mut rng,
            )
            .unwrap();
            let (x, cc) = batch(t, c, 6, seed + 100);
            let err = gradient_check(&mut flow, &x, &cc, 1e-5).unwrap();
            assert!(err < 1e-4, "({t},{c}): rel err {err}");
        }
    }

    #[test]
    fn zeroed_conditioner_shift_bias_gradient_is_near_linear() {
        // with all weights zero, the loss is exactly quadratic in the
        // output-layer shift biases: analytic and central differences agree
        // to high accuracy
        let mut rng = Stream::new(50);
        let mut flow = ConditionalFlow::new(
            1,
            1,
            &FlowConfig {
                hidden: 8,
                ar_layers: 2,
                ..FlowConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let zeros = vec![0.0; flow.param_count()];
        flow.set_params(&zeros).unwrap();
        let (x, c) = batch(1, 1, 4, 51);
        let err = gradient_check(&mut flow, &x, &c, 1e-5).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn perturbed_flow_gradients_still_match() {
        let mut rng = Stream::new(60);
        let mut flow = ConditionalFlow::new(
            2,
            2,
            &FlowConfig {
                hidden: 10,
                coupling_blocks: 4,
                ..FlowConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let mut pr = Stream::new(61).derive("p");
        let params: Vec<f64> = (0..flow.param_count())
            .map(|_| (pr.u01() - 0.5) * 0.8)
            .collect();
        flow.set_params(&params).unwrap();
        let (x, c) = batch(2, 2, 8, 62);
        let err = gradient_check(&mut flow, &x, &c, 1e-5).unwrap();
        assert!(err < 1e-3, "rel err {err}");
    }
}
