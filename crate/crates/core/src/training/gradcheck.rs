use super::config::TrainConfig;
use super::model::{ModelParams, TrainingData, BLOCK_NAMES};
use super::objective::{backward_full, forward_full};
use crate::error::Result;

/// Worst scalar of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Per-block results, worst first.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub blocks: Vec<BlockError>,
}

impl GradientReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.first().map_or(0.0, |b| b.max_rel_error)
    }

    pub fn block(&self, name: &str) -> Option<&BlockError> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central-difference check of `analytic` against `objective` around `point`.
/// `nudge(p, block, index, delta)` adds `delta` to one scalar.
pub fn check_blocks<P: Clone>(
    point: &P,
    analytic: &[(String, Vec<f64>)],
    nudge: impl Fn(&mut P, usize, usize, f64),
    mut objective: impl FnMut(&P) -> Result<f64>,
    step: f64,
) -> Result<GradientReport> {
    let mut blocks = Vec::with_capacity(analytic.len());
    for (b, (name, grads)) in analytic.iter().enumerate() {
        let mut worst = BlockError {
            name: name.clone(),
            max_rel_error: 0.0,
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (k, &a) in grads.iter().enumerate() {
            let mut plus = point.clone();
            nudge(&mut plus, b, k, step);
            let mut minus = point.clone();
            nudge(&mut minus, b, k, -step);
            let numeric = (objective(&plus)? - objective(&minus)?) / (2.0 * step);
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || k == 0 {
                worst = BlockError {
                    name: name.clone(),
                    max_rel_error: err,
                    index: k,
                    analytic: a,
                    numeric,
                };
            }
        }
        blocks.push(worst);
    }
    blocks.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
    Ok(GradientReport { blocks })
}

/// True when every rectified input sits farther than `threshold` from zero.
pub fn is_smooth_point(params: &ModelParams, data: &TrainingData, cfg: &TrainConfig, threshold: f64) -> Result<bool> {
    let pass = forward_full(params, data, cfg, None)?;
    let mut inputs = pass.relu_inputs();
    if cfg.activate_output {
        inputs.extend(pass.channel_outputs());
    }
    Ok(inputs.iter().all(|m| m.iter().all(|v| v.abs() > threshold)))
}

/// Checks `backward_full` against central differences of the smoothed objective
/// (plus `½ϖ‖θ‖²` over weights) with dropout off.
pub fn gradient_check(params: &ModelParams, data: &TrainingData, cfg: &TrainConfig, step: f64) -> Result<GradientReport> {
    let objective = |p: &ModelParams| -> Result<f64> {
        let pass = forward_full(p, data, cfg, None)?;
        let decay = if cfg.weight_decay > 0.0 { cfg.weight_decay * p.weight_norm_sq_half() } else { 0.0 };
        Ok(pass.smoothed_total + decay)
    };
    let pass = forward_full(params, data, cfg, None)?;
    let grads = backward_full(params, data, cfg, &pass)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .blocks()
        .into_iter()
        .map(|(name, g)| (name.to_string(), g.to_vec()))
        .collect();
    debug_assert_eq!(analytic.len(), BLOCK_NAMES.len());
    check_blocks(
        params,
        &analytic,
        |p: &mut ModelParams, b, k, delta| p.blocks_mut()[b].1[k] += delta,
        objective,
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Clone)]
    struct Linear {
        w: Array2<f64>,
    }

    fn least_squares() -> (Linear, Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((6, 2), || rng.gen_range(-1.0..1.0));
        let w = Array2::from_shape_simple_fn((3, 2), || rng.gen_range(-1.0..1.0));
        (Linear { w }, x, y)
    }

    fn run(corrupt: f64) -> GradientReport {
        let (point, x, y) = least_squares();
        let residual = x.dot(&point.w) - &y;
        let mut g = x.t().dot(&residual);
        g[[1, 0]] += corrupt;
        let analytic = vec![("w".to_string(), g.iter().copied().collect())];
        check_blocks(
            &point,
            &analytic,
            |p: &mut Linear, _, k, d| p.w.as_slice_mut().unwrap()[k] += d,
            |p| {
                let r = x.dot(&p.w) - &y;
                Ok(0.5 * r.mapv(|v| v * v).sum())
            },
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_objective_is_exact_to_roundoff() {
        assert!(run(0.0).max_error() < 1e-8, "{:?}", run(0.0));
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let report = run(0.05);
        assert!(report.max_error() > 1e-3);
        assert_eq!(report.blocks[0].index, 2);
    }
}
