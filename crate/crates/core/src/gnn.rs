//! Two-layer graph convolution channel with an explicit reverse pass.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Which view an embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelTag {
    Feature,
    Semantic,
    Topology,
    Aggregate,
}

impl ChannelTag {
    pub fn name(self) -> &'static str {
        match self {
            ChannelTag::Feature => "fea",
            ChannelTag::Semantic => "sem",
            ChannelTag::Topology => "ori",
            ChannelTag::Aggregate => "agg",
        }
    }
}

/// Uniform Glorot initialisation in `±√(6/(rows+cols))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..=limit))
}

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what.to_string()))
    }
}

/// Weights and settings of one channel. The propagation matrix is supplied per call.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnChannel {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub dropout: f64,
    /// Apply ReLU to the second layer as well.
    pub activate_output: bool,
}

/// Intermediates kept by a forward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    x_dropped: CsrMatrix,
    x_scale: Option<Vec<f64>>,
    u1: Array2<f64>,
    p1: Array2<f64>,
    h_dropped: Array2<f64>,
    h_scale: Option<Array2<f64>>,
    u2: Array2<f64>,
    p2: Array2<f64>,
}

impl GcnCache {
    /// Layer-1 pre-activations, used to detect points near the ReLU kink.
    pub fn hidden_preactivation(&self) -> &Array2<f64> {
        &self.p1
    }

    /// Layer-2 output before the optional rectifier.
    pub fn output_preactivation(&self) -> &Array2<f64> {
        &self.p2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    /// Gradient with respect to the dense input features, when requested.
    pub x: Option<Array2<f64>>,
    /// Gradient with respect to the stored entries of the propagation matrix, when requested.
    pub m: Option<Vec<f64>>,
}

impl GcnChannel {
    pub fn new<R: Rng + ?Sized>(d: usize, nhid1: usize, nhid2: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        let w1 = glorot_uniform(d, nhid1, rng);
        let w2 = glorot_uniform(nhid1, nhid2, rng);
        Self::from_weights(w1, w2, dropout, false)
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>, dropout: f64, activate_output: bool) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(Error::Dimension(format!(
                "layer weights do not chain: {:?} then {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Domain(format!("dropout must be in [0, 1), got {dropout}")));
        }
        Ok(Self {
            w1,
            w2,
            dropout,
            activate_output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Runs both layers. Passing an RNG enables inverted dropout on each layer's input;
    /// `None` is evaluation mode.
    ///
    /// Dropout on `x` acts on its stored entries; structural zeros stay zero either way.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        m: &CsrMatrix,
        x: &CsrMatrix,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Array2<f64>, GcnCache)> {
        let n = m.rows();
        if m.cols() != n || x.rows() != n {
            return Err(Error::Dimension(format!(
                "propagation {}x{} with features {}x{}",
                m.rows(),
                m.cols(),
                x.rows(),
                x.cols()
            )));
        }
        if x.cols() != self.w1.nrows() {
            return Err(Error::Dimension(format!(
                "features have {} columns but layer 1 expects {}",
                x.cols(),
                self.w1.nrows()
            )));
        }
        let keep = 1.0 - self.dropout;
        let active = self.dropout > 0.0;

        let (x_dropped, x_scale) = match dropout_rng.as_deref_mut() {
            Some(rng) if active => {
                let scale: Vec<f64> = (0..x.nnz())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let values = x.values().iter().zip(&scale).map(|(v, s)| v * s).collect();
                (x.with_values(values), Some(scale))
            }
            _ => (x.clone(), None),
        };
        let u1 = x_dropped.mul_dense(&self.w1)?;
        let p1 = m.mul_dense(&u1)?;
        check_finite(&p1, "gcn layer 1")?;
        let h = p1.mapv(|v| v.max(0.0));

        let (h_dropped, h_scale) = match dropout_rng {
            Some(rng) if active => {
                let scale = Array2::from_shape_simple_fn(h.dim(), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                (&h * &scale, Some(scale))
            }
            _ => (h, None),
        };
        let u2 = h_dropped.dot(&self.w2);
        let mut z = m.mul_dense(&u2)?;
        check_finite(&z, "gcn layer 2")?;
        let p2 = z.clone();
        if self.activate_output {
            z.mapv_inplace(|v| v.max(0.0));
        }
        let cache = GcnCache {
            x_dropped,
            x_scale,
            u1,
            p1,
            h_dropped,
            h_scale,
            u2,
            p2,
        };
        Ok((z, cache))
    }

    /// Reverse pass for an upstream gradient `grad` on the channel output.
    pub fn backward(
        &self,
        m: &CsrMatrix,
        cache: &GcnCache,
        grad: &Array2<f64>,
        want_x: bool,
        want_m: bool,
    ) -> Result<GcnGrads> {
        if grad.dim() != cache.p2.dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output {:?}",
                grad.dim(),
                cache.p2.dim()
            )));
        }
        let mut g = grad.clone();
        if self.activate_output {
            Zip::from(&mut g).and(&cache.p2).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        let du2 = m.transpose_mul_dense(&g)?;
        let w2 = cache.h_dropped.t().dot(&du2);
        let mut dh = du2.dot(&self.w2.t());
        if let Some(scale) = &cache.h_scale {
            dh *= scale;
        }
        Zip::from(&mut dh).and(&cache.p1).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let dp1 = dh;
        let du1 = m.transpose_mul_dense(&dp1)?;
        let w1 = cache.x_dropped.transpose_mul_dense(&du1)?;

        let x = want_x.then(|| {
            let mut dx = du1.dot(&self.w1.t());
            if let Some(scale) = &cache.x_scale {
                for (k, (i, j, _)) in cache.x_dropped.triplets().enumerate() {
                    dx[[i, j]] *= scale[k];
                }
            }
            dx
        });
        let m_grad = want_m.then(|| {
            m.triplets()
                .map(|(i, j, _)| {
                    let a = g.row(i).dot(&cache.u2.row(j));
                    let b = dp1.row(i).dot(&cache.u1.row(j));
                    a + b
                })
                .collect()
        });
        Ok(GcnGrads {
            w1,
            w2,
            x,
            m: m_grad,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EVAL: Option<&mut ChaCha8Rng> = None;

    fn csr(a: Array2<f64>) -> CsrMatrix {
        CsrMatrix::from_dense(a.view())
    }

    #[test]
    fn identity_channel_passes_nonnegative_input() {
        let x = array![[1.0, 0.0, 2.5], [0.0, 3.0, 0.5], [4.0, 1.0, 0.0]];
        let ch = GcnChannel::from_weights(Array2::eye(3), Array2::eye(3), 0.0, false).unwrap();
        let (z, _) = ch.forward(&CsrMatrix::identity(3), &csr(x.clone()), EVAL).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn relu_zeroes_negative_hidden_units() {
        let x = array![[1.0, -2.0], [-3.0, 4.0]];
        let ch = GcnChannel::from_weights(Array2::eye(2), Array2::eye(2), 0.0, false).unwrap();
        let (z, cache) = ch.forward(&CsrMatrix::identity(2), &csr(x), EVAL).unwrap();
        assert_eq!(z, array![[1.0, 0.0], [0.0, 4.0]]);
        assert_eq!(cache.hidden_preactivation(), &array![[1.0, -2.0], [-3.0, 4.0]]);
    }

    #[test]
    fn averaging_propagation_example() {
        let m = csr(array![[0.5, 0.5], [0.5, 0.5]]);
        let ch = GcnChannel::from_weights(array![[1.0]], array![[1.0]], 0.0, false).unwrap();
        let (z, cache) = ch.forward(&m, &csr(array![[2.0], [0.0]]), EVAL).unwrap();
        assert_eq!(cache.hidden_preactivation(), &array![[1.0], [1.0]]);
        assert_eq!(z, array![[1.0], [1.0]]);
    }

    #[test]
    fn shape_errors() {
        let ch = GcnChannel::from_weights(Array2::eye(2), Array2::eye(2), 0.0, false).unwrap();
        assert!(matches!(
            ch.forward(&CsrMatrix::identity(3), &csr(Array2::ones((2, 2))), EVAL),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            ch.forward(&CsrMatrix::identity(2), &csr(Array2::ones((2, 3))), EVAL),
            Err(Error::Dimension(_))
        ));
        assert!(GcnChannel::from_weights(Array2::eye(2), Array2::eye(3), 0.0, false).is_err());
        assert!(GcnChannel::from_weights(Array2::eye(2), Array2::eye(2), 1.0, false).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = GcnChannel::new(4, 5, 3, 0.0, &mut rng).unwrap();
        let x = csr(Array2::from_shape_fn((6, 4), |(i, j)| (i + 2 * j) as f64 * 0.1));
        let m = CsrMatrix::identity(6);
        let (_, cache) = ch.forward(&m, &x, EVAL).unwrap();
        let g = ch.backward(&m, &cache, &Array2::zeros((6, 3)), true, true).unwrap();
        assert!(g.w1.iter().chain(g.w2.iter()).all(|v| *v == 0.0));
        assert!(g.m.unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_weight_gradient_is_xt_g() {
        // With H > 0 everywhere and W² = I, layer 2 is the identity; dW² = Hᵀ G.
        let x = array![[1.0, 2.0], [3.0, 0.5], [0.25, 1.0]];
        let ch = GcnChannel::from_weights(Array2::eye(2), Array2::eye(2), 0.0, false).unwrap();
        let m = CsrMatrix::identity(3);
        let (_, cache) = ch.forward(&m, &csr(x.clone()), EVAL).unwrap();
        let g = array![[0.3, -1.0], [2.0, 0.25], [-0.5, 0.75]];
        let grads = ch.backward(&m, &cache, &g, false, false).unwrap();
        assert_eq!(grads.w2, x.t().dot(&g));
        assert_eq!(grads.w1, x.t().dot(&g));
    }

    #[test]
    fn dropout_only_in_training_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = GcnChannel::from_weights(Array2::eye(4), Array2::eye(4), 0.5, false).unwrap();
        let x = csr(Array2::ones((50, 4)));
        let m = CsrMatrix::identity(50);
        let (eval, _) = ch.forward(&m, &x, EVAL).unwrap();
        assert!(eval.iter().all(|v| *v == 1.0));
        let (train, _) = ch.forward(&m, &x, Some(&mut rng)).unwrap();
        assert!(train.iter().all(|v| [0.0, 2.0, 4.0].contains(v)));
        assert!(train.iter().any(|v| *v == 0.0));
    }

    /// Scalar objective ⟨Z, G⟩ for finite differences.
    fn objective(ch: &GcnChannel, m: &CsrMatrix, x: &CsrMatrix, g: &Array2<f64>) -> f64 {
        let (z, _) = ch.forward(m, x, EVAL).unwrap();
        (&z * g).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn random_instance(seed: u64) -> (GcnChannel, CsrMatrix, CsrMatrix, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let n = rng.gen_range(3..=10);
            let d = rng.gen_range(1..=8);
            let mut ch = GcnChannel::new(d, rng.gen_range(2..6), rng.gen_range(1..4), 0.0, &mut rng).unwrap();
            ch.activate_output = rng.gen_bool(0.3);
            let x = Array2::from_shape_simple_fn((n, d), || rng.gen_range(-1.0..1.0));
            let mut a = Array2::from_shape_simple_fn((n, n), || if rng.gen_bool(0.4) { rng.gen_range(0.1..1.0) } else { 0.0 });
            a = &a + &a.t();
            let m = csr(a + Array2::<f64>::eye(n));
            let g = Array2::from_shape_simple_fn((n, ch.output_dim()), || rng.gen_range(-1.0..1.0));
            let x = csr(x);
            let (_, cache) = ch.forward(&m, &x, EVAL).unwrap();
            let smooth = cache.hidden_preactivation().iter().chain(cache.output_preactivation().iter()).all(|v| v.abs() > 1e-3);
            if smooth {
                return (ch, m, x, g);
            }
        }
    }

    fn finite_difference_check(seed: u64) -> f64 {
        let (ch, m, x, g) = random_instance(seed);
        let h = 1e-5;
        let (_, cache) = ch.forward(&m, &x, EVAL).unwrap();
        let grads = ch.backward(&m, &cache, &g, true, true).unwrap();
        let mut worst = 0.0f64;
        for which in 0..2 {
            let shape = if which == 0 { ch.w1.dim() } else { ch.w2.dim() };
            for idx in ndarray::indices(shape) {
                let idx = [idx.0, idx.1];
                let mut plus = ch.clone();
                let mut minus = ch.clone();
                if which == 0 {
                    plus.w1[idx] += h;
                    minus.w1[idx] -= h;
                } else {
                    plus.w2[idx] += h;
                    minus.w2[idx] -= h;
                }
                let numeric = (objective(&plus, &m, &x, &g) - objective(&minus, &m, &x, &g)) / (2.0 * h);
                let analytic = if which == 0 { grads.w1[idx] } else { grads.w2[idx] };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
        let dense_x = x.to_dense();
        let dx = grads.x.unwrap();
        for ((i, j), _) in dense_x.indexed_iter() {
            let mut p = dense_x.clone();
            let mut q = dense_x.clone();
            p[[i, j]] += h;
            q[[i, j]] -= h;
            let numeric = (objective(&ch, &m, &csr(p), &g) - objective(&ch, &m, &csr(q), &g)) / (2.0 * h);
            worst = worst.max(rel_err(dx[[i, j]], numeric));
        }
        let dm = grads.m.unwrap();
        for (k, _) in m.values().iter().enumerate() {
            let mut pv = m.values().to_vec();
            let mut qv = m.values().to_vec();
            pv[k] += h;
            qv[k] -= h;
            let numeric = (objective(&ch, &m.with_values(pv), &x, &g) - objective(&ch, &m.with_values(qv), &x, &g)) / (2.0 * h);
            worst = worst.max(rel_err(dm[k], numeric));
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences_on_random_instances() {
        for seed in 0..20 {
            let err = finite_difference_check(seed);
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn permutation_equivariance_is_exact() {
        // Dyadic values keep every sum exact, so reordering cannot change bits.
        let a = array![[0.5, 0.25, 0.0, 0.25], [0.25, 0.5, 0.25, 0.0], [0.0, 0.25, 0.5, 0.25], [0.25, 0.0, 0.25, 0.5]];
        let x = array![[1.0, -2.0, 0.5], [0.0, 1.5, 2.0], [-1.0, 0.25, 1.0], [2.0, 0.0, -0.5]];
        let ch = GcnChannel::from_weights(
            array![[0.5, -1.0], [1.0, 0.25], [-0.5, 0.75]],
            array![[1.0, 0.5], [-0.25, 2.0]],
            0.0,
            false,
        )
        .unwrap();
        let perm = [2usize, 0, 3, 1];
        let pa = Array2::from_shape_fn((4, 4), |(i, j)| a[[perm[i], perm[j]]]);
        let px = Array2::from_shape_fn((4, 3), |(i, j)| x[[perm[i], j]]);
        let (z, _) = ch.forward(&csr(a), &csr(x), EVAL).unwrap();
        let (pz, _) = ch.forward(&csr(pa), &csr(px), EVAL).unwrap();
        for i in 0..4 {
            assert_eq!(pz.row(i), z.row(perm[i]));
        }
    }

    #[test]
    fn evaluation_forward_is_repeatable() {
        let (ch, m, x, _) = random_instance(99);
        let (a, _) = ch.forward(&m, &x, EVAL).unwrap();
        let (b, _) = ch.forward(&m, &x, EVAL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = glorot_uniform(10, 14, &mut rng);
        let limit = 0.5;
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert_abs_diff_eq!(w.mean().unwrap(), 0.0, epsilon = 0.1);
    }
}
