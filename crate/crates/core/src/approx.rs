//! Fully connected ReLU network with hand-derived gradients.
//!
//! Parameters live in one flat vector. Layer `l` with fan-in `n` and fan-out
//! `m` occupies `m * n` weights (row-major, one row per output unit)
//! followed by `m` biases. Hidden layers use ReLU, the output layer is
//! linear.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Number of parameters of a network with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `layers[0]` is the input, the last entry the output.
    layers: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().expect("trace has an output layer")
    }
}

/// Regression sample for the TD loss: push `Q(x, option)` towards `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub x: &'a [T],
    pub option: usize,
    pub target: T,
}

/// Dot product with four independent accumulators.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (a4.remainder(), b4.remainder());
    for (x, y) in a4.zip(b4) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let tail = ra.iter().zip(rb).fold(T::zero(), |s, (x, y)| s + *x * *y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Fan-in scaled uniform initialization: every weight and bias of a
    /// layer with fan-in `n` is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * w[0] + w[1] {
                params.push(T::lit(rng.gen_range(-bound..bound)));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Self> {
        check_sizes(sizes)?;
        if params.len() != param_count(sizes) {
            return Err(Error::DimensionMismatch {
                expected: param_count(sizes),
                actual: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    /// `(weights, biases)` offsets of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start = param_count(&self.sizes[..=l]);
        (start, start + self.sizes[l + 1] * self.sizes[l])
    }

    /// Sets every bias to zero.
    pub fn zero_biases(&mut self) {
        for l in 0..self.sizes.len() - 1 {
            let (_, bias) = self.layer_offsets(l);
            let n = self.sizes[l + 1];
            self.params[bias..bias + n].iter_mut().for_each(|p| *p = T::zero());
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<Trace<T>> {
        self.check_input(x)?;
        let depth = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(x.to_vec());
        let mut nonzero = Vec::with_capacity(*self.sizes.iter().max().unwrap_or(&0));
        for l in 0..depth {
            let (w, b) = self.layer_offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &layers[l];
            // One-hot observations are almost all zeros.
            nonzero.clear();
            nonzero.extend((0..n_in).filter(|&i| input[i] != T::zero()));
            let sparse = nonzero.len() * 8 < n_in;
            let mut out = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &self.params[w + j * n_in..w + (j + 1) * n_in];
                let z = self.params[b + j]
                    + if sparse {
                        nonzero.iter().fold(T::zero(), |acc, &i| acc + row[i] * input[i])
                    } else {
                        dot(row, input)
                    };
                out.push(if l + 1 < depth { z.max(T::zero()) } else { z });
            }
            layers.push(out);
        }
        Ok(Trace { layers })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(x)?.layers.pop().expect("output layer"))
    }

    /// Adds `d(output . d_out)/d(theta)` to `grad`.
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grad: &mut [T]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_out.len(), self.output_dim());
        let depth = self.sizes.len() - 1;
        let mut delta = d_out.to_vec();
        let mut nonzero = Vec::new();
        for l in (0..depth).rev() {
            let (w, b) = self.layer_offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.layers[l];
            nonzero.clear();
            nonzero.extend((0..n_in).filter(|&i| input[i] != T::zero()));
            let sparse = nonzero.len() * 8 < n_in;
            for j in 0..n_out {
                let dj = delta[j];
                if dj == T::zero() {
                    continue;
                }
                grad[b + j] = grad[b + j] + dj;
                let g = &mut grad[w + j * n_in..w + (j + 1) * n_in];
                if sparse {
                    for &i in &nonzero {
                        g[i] = g[i] + dj * input[i];
                    }
                } else {
                    for (gi, xi) in g.iter_mut().zip(input) {
                        *gi = *gi + dj * *xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through the weights, then the ReLU of layer l's input.
            let mut prev = vec![T::zero(); n_in];
            for j in 0..n_out {
                let dj = delta[j];
                if dj == T::zero() {
                    continue;
                }
                let row = &self.params[w + j * n_in..w + (j + 1) * n_in];
                for (p, r) in prev.iter_mut().zip(row) {
                    *p = *p + *r * dj;
                }
            }
            for i in 0..n_in {
                if input[i] <= T::zero() {
                    prev[i] = T::zero();
                }
            }
            delta = prev;
        }
    }

    /// Sum of squared TD errors and its gradient. Targets are constants: no
    /// gradient flows through them.
    pub fn loss_and_gradient(&self, batch: &[Sample<'_, T>]) -> Result<(T, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        let mut d_out = vec![T::zero(); self.output_dim()];
        for s in batch {
            if !s.target.is_finite() {
                return Err(Error::NonFinite("target"));
            }
            if s.option >= self.output_dim() {
                return Err(Error::UnknownOption(s.option));
            }
            let trace = self.forward_trace(s.x)?;
            let err = s.target - trace.output()[s.option];
            loss = loss + err * err;
            d_out.iter_mut().for_each(|d| *d = T::zero());
            d_out[s.option] = -(err + err);
            self.backward(&trace, &d_out, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Sum of squared TD errors from forward passes alone.
    pub fn loss(&self, batch: &[Sample<'_, T>]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let mut loss = T::zero();
        for s in batch {
            let err = s.target - self.forward(s.x)?[s.option];
            loss = loss + err * err;
        }
        Ok(loss)
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    first: Vec<T>,
    second: Vec<T>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    /// Standard moment decays (0.9, 0.999) and epsilon 1e-8.
    pub fn new(num_params: usize, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            first: vec![T::zero(); num_params],
            second: vec![T::zero(); num_params],
            steps: 0,
        }
    }

    pub fn for_net(net: &Mlp<T>, learning_rate: T) -> Self {
        Self::new(net.params().len(), learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grad: &[T]) -> Result<()> {
        if grad.len() != net.params.len() || self.first.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                actual: grad.len(),
            });
        }
        self.steps += 1;
        let t = self.steps.min(i32::MAX as u64) as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for (((p, g), m), v) in net
            .params
            .iter_mut()
            .zip(grad)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncMode<T> {
    Lump,
    Polyak(T),
}

/// Moves `target` towards `main`: a full copy, or `kappa * main + (1 - kappa) * target`.
pub fn sync_target<T: Scalar>(main: &Mlp<T>, target: &mut Mlp<T>, mode: SyncMode<T>) -> Result<()> {
    if main.sizes != target.sizes {
        return Err(Error::ArchitectureMismatch(
            main.sizes.clone(),
            target.sizes.clone(),
        ));
    }
    match mode {
        SyncMode::Lump => target.params.copy_from_slice(&main.params),
        SyncMode::Polyak(kappa) => {
            let keep = T::one() - kappa;
            for (t, m) in target.params.iter_mut().zip(&main.params) {
                *t = kappa * *m + keep * *t;
            }
        }
    }
    Ok(())
}

/// Central finite-difference gradient of [`Mlp::loss`], built from forward
/// passes only.
pub fn finite_difference_gradient<T: Scalar>(
    net: &Mlp<T>,
    batch: &[Sample<'_, T>],
    h: T,
) -> Result<Vec<T>> {
    let mut probe = net.clone();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(net.params.len());
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss(batch)?;
        probe.params[i] = orig - h;
        let down = probe.loss(batch)?;
        probe.params[i] = orig;
        grad.push((up - down) / two_h);
    }
    Ok(grad)
}

/// Largest per-coordinate relative error `|a - n| / max(|a| + |n|, floor)`.
pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T], floor: T) -> T {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (*a - *n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_input(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn parameter_count_matches_architecture() {
        assert_eq!(param_count(&[108, 128, 64, 3]), 108 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
        let net = Mlp::<f64>::new(&[108, 128, 64, 3], &mut rng(0)).unwrap();
        assert_eq!(net.params().len(), param_count(net.sizes()));
        assert!(Mlp::<f64>::from_params(&[2, 2], vec![0.0; 5]).is_err());
        assert!(Mlp::<f64>::zeros(&[3]).is_err());
    }

    #[test]
    fn zero_net_gives_zero() {
        let net = Mlp::<f64>::zeros(&[5, 4, 2]).unwrap();
        assert_eq!(net.forward(&[0.0; 5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let n = 4;
        let mut params = vec![0.0; n * n + n];
        for i in 0..n {
            params[i * n + i] = 1.0;
        }
        let net = Mlp::from_params(&[n, n], params).unwrap();
        let x = [0.5, -2.0, 3.0, 0.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::<f64>::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    /// Straight-line re-implementation used as an independent oracle.
    fn reference_forward(sizes: &[usize], p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n, m) = (sizes[l], sizes[l + 1]);
            let weights = &p[off..off + n * m];
            let biases = &p[off + n * m..off + n * m + m];
            off += n * m + m;
            let mut z: Vec<f64> = (0..m)
                .map(|j| biases[j] + (0..n).map(|i| weights[j * n + i] * a[i]).sum::<f64>())
                .collect();
            if l + 2 < sizes.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_matches_reference() {
        for seed in 0..10 {
            let mut r = rng(seed);
            let sizes = [7, 9, 5, 3];
            let net = Mlp::<f64>::new(&sizes, &mut r).unwrap();
            let x = random_input(&mut r, 7);
            let got = net.forward(&x).unwrap();
            let want = reference_forward(&sizes, net.params(), &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_targets_give_zero_loss_and_gradient() {
        let mut r = rng(3);
        let net = Mlp::<f64>::new(&[4, 6, 3], &mut r).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|_| random_input(&mut r, 4)).collect();
        let batch: Vec<Sample<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Sample {
                x,
                option: i % 3,
                target: net.forward(x).unwrap()[i % 3],
            })
            .collect();
        let (loss, grad) = net.loss_and_gradient(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_net_gradient_is_least_squares() {
        // Q(x, o) = w_o . x + b_o; d/dw_o (y - Q)^2 = -2 (y - Q) x
        let params: Vec<f64> = vec![0.5, -1.0, 2.0, 0.25, 0.1, -0.2];
        let net = Mlp::from_params(&[2, 2], params).unwrap();
        let x = [3.0, -1.0];
        let q1: f64 = 2.0 * 3.0 + 0.25 * -1.0 - 0.2;
        let y = 1.0;
        let (loss, grad) = net
            .loss_and_gradient(&[Sample { x: &x, option: 1, target: y }])
            .unwrap();
        let e = y - q1;
        assert!((loss - e * e).abs() < 1e-12);
        let want = [0.0, 0.0, -2.0 * e * 3.0, -2.0 * e * -1.0, 0.0, -2.0 * e];
        for (g, w) in grad.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert_eq!(net.loss_and_gradient(&[]).unwrap_err(), Error::EmptyMinibatch);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut r = rng(100 + seed);
            let net = Mlp::<f64>::new(&[6, 8, 5, 3], &mut r).unwrap();
            let xs: Vec<Vec<f64>> = (0..4).map(|_| random_input(&mut r, 6)).collect();
            let batch: Vec<Sample<f64>> = xs
                .iter()
                .map(|x| Sample {
                    x,
                    option: r.gen_range(0..3),
                    target: r.gen_range(-2.0..2.0),
                })
                .collect();
            let (_, analytic) = net.loss_and_gradient(&batch).unwrap();
            let numeric = finite_difference_gradient(&net, &batch, 1e-5).unwrap();
            assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-4);
        }
    }

    #[test]
    fn no_bias_net_is_positively_homogeneous() {
        let mut r = rng(9);
        let mut net = Mlp::<f64>::new(&[5, 7, 4, 2], &mut r).unwrap();
        net.zero_biases();
        let x = random_input(&mut r, 5);
        let scaled: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&scaled).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((2.5 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Mlp::<f64>::new(&[10, 4, 2], &mut rng(5)).unwrap();
        let b = Mlp::<f64>::new(&[10, 4, 2], &mut rng(5)).unwrap();
        let c = Mlp::<f64>::new(&[10, 4, 2], &mut rng(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn adam_zero_gradient_from_fresh_state_is_noop() {
        let mut net = Mlp::<f64>::new(&[3, 2], &mut rng(1)).unwrap();
        let before = net.clone();
        let mut opt = Adam::for_net(&net, 0.01);
        opt.step(&mut net, &vec![0.0; before.params().len()]).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let net = Mlp::<f64>::new(&[3, 4, 2], &mut rng(2)).unwrap();
        let grad: Vec<f64> = (0..net.params().len()).map(|i| (i as f64).sin()).collect();
        let (mut a, mut b) = (net.clone(), net.clone());
        let (mut oa, mut ob) = (Adam::for_net(&net, 0.01), Adam::for_net(&net, 0.01));
        oa.step(&mut a, &grad).unwrap();
        ob.step(&mut b, &grad).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn adam_decreases_regression_loss() {
        let mut r = rng(11);
        let mut net = Mlp::<f64>::new(&[3, 8, 2], &mut r).unwrap();
        let xs: Vec<Vec<f64>> = (0..8).map(|_| random_input(&mut r, 3)).collect();
        let batch: Vec<Sample<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Sample {
                x,
                option: i % 2,
                target: x[0] - 0.5 * x[1],
            })
            .collect();
        let mut opt = Adam::for_net(&net, 0.01);
        let mut last = net.loss(&batch).unwrap();
        for _ in 0..10 {
            let (_, g) = net.loss_and_gradient(&batch).unwrap();
            opt.step(&mut net, &g).unwrap();
            let now = net.loss(&batch).unwrap();
            assert!(now < last, "loss went from {last} to {now}");
            last = now;
        }
    }

    #[test]
    fn sync_modes() {
        let main = Mlp::from_params(&[1, 1], vec![2.0, 2.0]).unwrap();
        let mut target = Mlp::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
        sync_target(&main, &mut target, SyncMode::Polyak(0.5)).unwrap();
        assert_eq!(target.params(), &[1.0, 1.0]);
        sync_target(&main, &mut target, SyncMode::Polyak(1.0)).unwrap();
        assert_eq!(target, main);
        let mut t2 = Mlp::<f64>::zeros(&[1, 1]).unwrap();
        sync_target(&main, &mut t2, SyncMode::Lump).unwrap();
        assert_eq!(t2.params(), main.params());
        let mut other = Mlp::<f64>::zeros(&[2, 1]).unwrap();
        assert!(matches!(
            sync_target(&main, &mut other, SyncMode::Lump),
            Err(Error::ArchitectureMismatch(..))
        ));
    }

    #[test]
    fn lump_sync_makes_forward_identical() {
        let mut r = rng(4);
        let main = Mlp::<f64>::new(&[6, 5, 3], &mut r).unwrap();
        let mut target = Mlp::<f64>::new(&[6, 5, 3], &mut r).unwrap();
        sync_target(&main, &mut target, SyncMode::Lump).unwrap();
        for _ in 0..20 {
            let x = random_input(&mut r, 6);
            assert_eq!(main.forward(&x).unwrap(), target.forward(&x).unwrap());
        }
    }

    #[test]
    fn single_precision_forward() {
        let net = Mlp::<f32>::new(&[4, 3, 2], &mut rng(0)).unwrap();
        let out = net.forward(&[1.0, 0.0, -1.0, 0.5]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
