//! Two-hidden-layer tanh perceptron with explicit forward caches and
//! analytic backward passes, operating on row-major batches.

use drbayes_core::{Scalar, Stream};
use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone)]
pub struct Mlp<F> {
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
    pub w3: Array2<F>,
    pub b3: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    input: Array2<F>,
    h1: Array2<F>,
    h2: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads<F> {
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
    pub w3: Array2<F>,
    pub b3: Array1<F>,
}

fn xavier<F: Scalar>(rows: usize, cols: usize, rng: &mut Stream) -> Array2<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| F::of((rng.u01() * 2.0 - 1.0) * a))
}

impl<F: Scalar> Mlp<F> {
    /// Hidden layers get Xavier initialization; the output layer starts at
    /// zero so a fresh flow is the identity transport.
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut Stream) -> Self {
        Mlp {
            w1: xavier(in_dim, hidden, rng),
            b1: Array1::zeros(hidden),
            w2: xavier(hidden, hidden, rng),
            b2: Array1::zeros(hidden),
            w3: Array2::zeros((hidden, out_dim)),
            b3: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w3.ncols()
    }

    pub fn forward(&self, input: &Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let h1 = (input.dot(&self.w1) + &self.b1).mapv(|v| v.tanh());
        let h2 = (h1.dot(&self.w2) + &self.b2).mapv(|v| v.tanh());
        let out = h2.dot(&self.w3) + &self.b3;
        (
            out,
            MlpCache {
                input: input.clone(),
                h1,
                h2,
            },
        )
    }

    /// Forward pass without retaining activations.
    pub fn forward_only(&self, input: &Array2<F>) -> Array2<F> {
        let h1 = (input.dot(&self.w1) + &self.b1).mapv(|v| v.tanh());
        let h2 = (h1.dot(&self.w2) + &self.b2).mapv(|v| v.tanh());
        h2.dot(&self.w3) + &self.b3
    }

    /// Accumulate parameter gradients for the batch and return the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache<F>, dout: &Array2<F>, grads: &mut MlpGrads<F>) -> Array2<F> {
        let one = F::one();
        grads.w3 = &grads.w3 + &cache.h2.t().dot(dout);
        grads.b3 = &grads.b3 + &dout.sum_axis(Axis(0));
        let dh2 = dout.dot(&self.w3.t());
        let da2 = &dh2 * &cache.h2.mapv(|h| one - h * h);
        grads.w2 = &grads.w2 + &cache.h1.t().dot(&da2);
        grads.b2 = &grads.b2 + &da2.sum_axis(Axis(0));
        let dh1 = da2.dot(&self.w2.t());
        let da1 = &dh1 * &cache.h1.mapv(|h| one - h * h);
        grads.w1 = &grads.w1 + &cache.input.t().dot(&da1);
        grads.b1 = &grads.b1 + &da1.sum_axis(Axis(0));
        da1.dot(&self.w1.t())
    }

    pub fn zero_grads(&self) -> MlpGrads<F> {
        MlpGrads {
            w1: Array2::zeros(self.w1.dim()),
            b1: Array1::zeros(self.b1.dim()),
            w2: Array2::zeros(self.w2.dim()),
            b2: Array1::zeros(self.b2.dim()),
            w3: Array2::zeros(self.w3.dim()),
            b3: Array1::zeros(self.b3.dim()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    pub fn push_params(&self, out: &mut Vec<F>) {
        out.extend(self.w1.iter().cloned());
        out.extend(self.b1.iter().cloned());
        out.extend(self.w2.iter().cloned());
        out.extend(self.b2.iter().cloned());
        out.extend(self.w3.iter().cloned());
        out.extend(self.b3.iter().cloned());
    }

    pub fn load_params(&mut self, src: &mut std::slice::Iter<'_, F>) {
        for v in self.w1.iter_mut() {
            *v = *src.next().expect("param length");
        }
        for v in self.b1.iter_mut() {
            *v = *src.next().expect("param length");
        }
        for v in self.w2.iter_mut() {
            *v = *src.next().expect("param length");
        }
        for v in self.b2.iter_mut() {
            *v = *src.next().expect("param length");
        }
        for v in self.w3.iter_mut() {
            *v = *src.next().expect("param length");
        }
        for v in self.b3.iter_mut() {
            *v = *src.next().expect("param length");
        }
    }
}

impl<F: Scalar> MlpGrads<F> {
    pub fn push_flat(&self, out: &mut Vec<F>) {
        out.extend(self.w1.iter().cloned());
        out.extend(self.b1.iter().cloned());
        out.extend(self.w2.iter().cloned());
        out.extend(self.b2.iter().cloned());
        out.extend(self.w3.iter().cloned());
        out.extend(self.b3.iter().cloned());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layer_gives_zero_output() {
        let mut rng = Stream::new(1);
        let net: Mlp<f64> = Mlp::new(3, 16, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let (out, _) = net.forward(&x);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn param_roundtrip() {
        let mut rng = Stream::new(2);
        let mut net: Mlp<f64> = Mlp::new(2, 8, 4, &mut rng);
        let mut flat = Vec::new();
        net.push_params(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let copy = flat.clone();
        net.load_params(&mut copy.iter());
        let mut flat2 = Vec::new();
        net.push_params(&mut flat2);
        assert_eq!(flat, flat2);
    }
}
