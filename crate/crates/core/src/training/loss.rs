use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Objective components for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub l0: f64,
    pub la: f64,
    pub lb: f64,
    pub total: f64,
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())))
    }
}

/// `Σ_i √(‖a_i − b_i‖² + ε) − n√ε`; `ε = 0` is the plain l2,1 norm of the difference.
pub fn l21_distance(a: &Array2<f64>, b: &Array2<f64>, epsilon: f64) -> Result<f64> {
    same_shape(a, b)?;
    let total: f64 = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| {
            let sq: f64 = x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
            (sq + epsilon).sqrt()
        })
        .sum();
    Ok(total - a.nrows() as f64 * epsilon.sqrt())
}

/// Gradient of [`l21_distance`] with respect to `a` (the gradient for `b` is its negation).
pub fn l21_distance_grad(a: &Array2<f64>, b: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>> {
    same_shape(a, b)?;
    let mut out = a - b;
    for mut row in out.rows_mut() {
        let norm = (row.dot(&row) + epsilon).sqrt();
        if norm > 0.0 {
            row /= norm;
        } else {
            row.fill(0.0);
        }
    }
    Ok(out)
}

/// Mean of `−ln p(true class)` over the given rows, with probabilities clipped at 1e-12.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Domain("cross-entropy over an empty training set".into()));
    }
    if labels.len() != probs.nrows() {
        return Err(Error::Dimension(format!(
            "{} label(s) for {} prediction row(s)",
            labels.len(),
            probs.nrows()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::Label(format!("class {y} outside {} classes", row.len())));
        }
        let s = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("prediction row sums to {s}")));
        }
        total -= row[y].max(1e-12).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Fraction of `nodes` whose argmax score (lowest class on ties) equals the label.
/// Unlabelled nodes count as misses.
pub fn evaluate_accuracy(scores: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes
        .iter()
        .filter(|&&i| {
            let row = scores.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            labels[i] == Some(best)
        })
        .count();
    hits as f64 / nodes.len() as f64
}

/// Adds `scale · ∇` of the smoothed l2,1 distance to the two gradient buffers.
pub(crate) fn accumulate_l21(
    a: &Array2<f64>,
    b: &Array2<f64>,
    epsilon: f64,
    scale: f64,
    grad_a: &mut Array2<f64>,
    grad_b: &mut Array2<f64>,
) -> Result<()> {
    let g = l21_distance_grad(a, b, epsilon)?;
    Zip::from(grad_a).and(&g).for_each(|o, &v| *o += scale * v);
    Zip::from(grad_b).and(&g).for_each(|o, &v| *o -= scale * v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l21_examples() {
        let z = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(l21_distance(&z, &z, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(l21_distance(&z, &z, 1e-8).unwrap(), 0.0, epsilon = 1e-15);
        let a = array![[3.0, 4.0], [0.0, 0.0]];
        assert_eq!(l21_distance(&a, &Array2::zeros((2, 2)), 0.0).unwrap(), 5.0);
        assert!(l21_distance(&a, &Array2::zeros((3, 2)), 0.0).is_err());
    }

    #[test]
    fn l21_matches_row_norm_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::<f64>::from_shape_simple_fn((5, 3), || rng.gen_range(-2.0..2.0));
        let b = Array2::<f64>::from_shape_simple_fn((5, 3), || rng.gen_range(-2.0..2.0));
        let mut oracle = 0.0_f64;
        for i in 0..5 {
            let mut sq = 0.0_f64;
            for j in 0..3 {
                sq += (a[[i, j]] - b[[i, j]]).powi(2);
            }
            oracle += sq.sqrt();
        }
        assert_abs_diff_eq!(l21_distance(&a, &b, 0.0).unwrap(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn l21_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0));
        let g = l21_distance_grad(&a, &b, 1e-8).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let (mut p, mut q) = (a.clone(), a.clone());
                p[[i, j]] += h;
                q[[i, j]] -= h;
                let num = (l21_distance(&p, &b, 1e-8).unwrap() - l21_distance(&q, &b, 1e-8).unwrap()) / (2.0 * h);
                assert_abs_diff_eq!(g[[i, j]], num, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let certain = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(cross_entropy(&certain, &[0, 1]).unwrap(), 0.0);
        let uniform = Array2::from_elem((3, 4), 0.25);
        assert_abs_diff_eq!(cross_entropy(&uniform, &[0, 1, 3]).unwrap(), 4f64.ln(), epsilon = 1e-15);
        let mixed = array![[0.5, 0.5], [0.75, 0.25]];
        let expected = (2f64.ln() + 4f64.ln()) / 2.0;
        assert_abs_diff_eq!(cross_entropy(&mixed, &[0, 1]).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 1.03972, epsilon = 1e-5);
        assert!(cross_entropy(&Array2::zeros((0, 2)), &[]).is_err());
        let wrong = array![[0.0, 1.0]];
        assert_abs_diff_eq!(cross_entropy(&wrong, &[0]).unwrap(), -(1e-12f64).ln(), epsilon = 1e-9);
    }

    #[test]
    fn accuracy_examples() {
        let scores = array![[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.5, 0.5]];
        let labels = vec![Some(0), Some(1), Some(1), Some(0)];
        assert_eq!(evaluate_accuracy(&scores, &labels, &[0, 1]), 1.0);
        assert_eq!(evaluate_accuracy(&scores, &labels, &[2]), 0.0);
        assert_eq!(evaluate_accuracy(&scores, &labels, &[0, 1, 2, 3]), 0.75);
    }

    #[test]
    fn accuracy_invariant_under_monotone_row_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let scores = Array2::from_shape_simple_fn((30, 4), || rng.gen_range(-3.0..3.0));
        let labels: Vec<Option<usize>> = (0..30).map(|_| Some(rng.gen_range(0..4))).collect();
        let nodes: Vec<usize> = (0..30).collect();
        let base = evaluate_accuracy(&scores, &labels, &nodes);
        let mut mapped = scores.clone();
        for (i, mut row) in mapped.rows_mut().into_iter().enumerate() {
            let (s, c) = (0.5 + i as f64, i as f64 - 7.0);
            row.mapv_inplace(|v| (s * v + c).exp() + (v * 0.1).tanh());
        }
        assert_eq!(evaluate_accuracy(&mapped, &labels, &nodes), base);
    }
}
