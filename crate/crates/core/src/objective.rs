//! The training objective: a projection (mean-squared-error) term plus a
//! λ-weighted InfoNCE term with temperature τ.
//!
//! The contrastive direction is one-sided: predicted-image rows against
//! pooled-caption columns, softmax over the caption axis. Inner products are
//! taken on L2-normalized vectors by default; `normalize_before_dot: false`
//! restores the raw inner product. Targets are constants — gradients flow
//! to the predictions only.
//!
//! [`total_loss_graph`] is the differentiable route used in training;
//! [`projection_loss`], [`contrastive_loss`] and [`total_loss`] are direct
//! evaluations, kept independent so the two routes check each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::{NodeId, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Contrastive weight λ ≥ 0.
    pub lambda: f64,
    /// Softmax temperature τ > 0.
    pub tau: f64,
    /// Normalize both sides before the inner product.
    pub normalize_before_dot: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.2, tau: 0.07, normalize_before_dot: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Decomposed loss value. `total` is always the exact sum of the two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub projection: f64,
    pub contrastive: f64,
    pub total: f64,
    pub batch_n: usize,
}

fn check_batch(kernel: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            kernel,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

/// Mean over the batch of the squared L2 distance per sample.
pub fn projection_loss(z_hat: &Tensor, z_x: &Tensor) -> Result<f64> {
    check_batch("projection_loss", z_hat, z_x)?;
    let sum: f64 = z_hat
        .data()
        .iter()
        .zip(z_x.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / z_hat.rows() as f64)
}

fn normalized_rows(t: &Tensor, what: &str) -> Result<Vec<Vec<f64>>> {
    (0..t.rows())
        .map(|i| {
            let row = t.row_slice(i);
            let n = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
            if n < 1e-30 {
                return Err(Error::Embedding(format!("zero-norm {what} row {i}")));
            }
            Ok(row.iter().map(|&v| v / n).collect())
        })
        .collect()
}

/// InfoNCE over pairwise similarities: −(λ/N)·Σᵢ log softmax(sᵢ·)ᵢ with
/// sᵢⱼ = ⟨ẑᵢ, zⱼ⟩/τ. Non-negative; exactly zero for N = 1 or λ = 0.
pub fn contrastive_loss(z_hat: &Tensor, z_y_pooled: &Tensor, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    check_batch("contrastive_loss", z_hat, z_y_pooled)?;
    if config.lambda == 0.0 {
        return Ok(0.0);
    }
    let n = z_hat.rows();
    let (preds, targets): (Vec<Vec<f64>>, Vec<Vec<f64>>) = if config.normalize_before_dot {
        (normalized_rows(z_hat, "prediction")?, normalized_rows(z_y_pooled, "target")?)
    } else {
        (
            (0..n).map(|i| z_hat.row_slice(i).to_vec()).collect(),
            (0..n).map(|i| z_y_pooled.row_slice(i).to_vec()).collect(),
        )
    };
    let mut nll_sum = 0.0;
    for i in 0..n {
        let sims: Vec<f64> = (0..n)
            .map(|j| {
                preds[i].iter().zip(&targets[j]).map(|(&a, &b)| a * b).sum::<f64>() / config.tau
            })
            .collect();
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + sims.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        nll_sum += lse - sims[i];
    }
    Ok(config.lambda * nll_sum / n as f64)
}

/// Direct (non-differentiable) evaluation of the full objective.
pub fn total_loss(z_hat: &Tensor, z_x: &Tensor, z_y_pooled: &Tensor, config: &LossConfig) -> Result<LossBreakdown> {
    let projection = projection_loss(z_hat, z_x)?;
    let contrastive = contrastive_loss(z_hat, z_y_pooled, config)?;
    Ok(LossBreakdown {
        projection,
        contrastive,
        total: projection + contrastive,
        batch_n: z_hat.rows(),
    })
}

/// Builds the differentiable objective on `tape` over an existing
/// prediction node (N×io). Targets enter as constant leaves; the returned
/// root is the scalar total.
pub fn total_loss_graph(
    tape: &mut Tape,
    z_hat: NodeId,
    z_x: &Tensor,
    z_y_pooled: &Tensor,
    config: &LossConfig,
) -> Result<(NodeId, LossBreakdown)> {
    config.validate()?;
    let pred_shape = tape.value(z_hat).shape();
    check_batch("total_loss", tape.value(z_hat), z_x)?;
    check_batch("total_loss", tape.value(z_hat), z_y_pooled)?;
    let n = pred_shape[0];

    let z_x_leaf = tape.leaf(z_x.clone())?;
    let proj = tape.mse(z_hat, z_x_leaf)?;

    let (root, contrastive_value) = if config.lambda == 0.0 {
        (proj, 0.0)
    } else {
        let pred_side = if config.normalize_before_dot {
            tape.l2_normalize_rows(z_hat)?
        } else {
            z_hat
        };
        // Targets are constant: transpose outside the graph.
        let target_rows: Vec<Vec<f64>> = if config.normalize_before_dot {
            normalized_rows(z_y_pooled, "target")?
        } else {
            (0..n).map(|i| z_y_pooled.row_slice(i).to_vec()).collect()
        };
        let dim = z_y_pooled.cols();
        let mut transposed = vec![0.0; dim * n];
        for (j, row) in target_rows.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                transposed[d * n + j] = v;
            }
        }
        let targets_t = tape.leaf(Tensor::new(dim, n, transposed)?)?;
        let sims = tape.matmul(pred_side, targets_t)?;
        let scaled = tape.scale(sims, 1.0 / config.tau)?;
        let log_probs = tape.log_softmax_rows(scaled)?;
        let nll = tape.diag_neg_mean(log_probs)?;
        let contrastive = tape.scale(nll, config.lambda)?;
        let total = tape.add(proj, contrastive)?;
        (total, tape.value(contrastive).scalar_value()?)
    };

    let projection_value = tape.value(proj).scalar_value()?;
    Ok((
        root,
        LossBreakdown {
            projection: projection_value,
            contrastive: contrastive_value,
            total: projection_value + contrastive_value,
            batch_n: n,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::FloatMode;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_batch(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn orthonormal_rows(n: usize, d: usize) -> Tensor {
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            data[i * d + i] = 1.0;
        }
        Tensor::new(n, d, data).unwrap()
    }

    #[test]
    fn projection_zero_on_identity_and_one_on_unit_offset() {
        let z = rand_batch(1, 4, 8);
        assert_eq!(projection_loss(&z, &z).unwrap(), 0.0);
        let mut shifted = z.clone();
        for i in 0..4 {
            shifted.data_mut()[i * 8] += 1.0;
        }
        assert!((projection_loss(&shifted, &z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_matches_brute_force_double_loop() {
        let z_hat = rand_batch(2, 4, 8);
        let z_x = rand_batch(3, 4, 8);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..8 {
                let d = z_hat.at(i, j) - z_x.at(i, j);
                acc += d * d;
            }
        }
        let brute = acc / 4.0;
        assert!((projection_loss(&z_hat, &z_x).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn contrastive_zero_for_single_sample() {
        let z = rand_batch(4, 1, 8);
        let y = rand_batch(5, 1, 8);
        assert_eq!(contrastive_loss(&z, &y, &LossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn contrastive_uniform_similarities_give_lambda_ln_n() {
        // Identical prediction rows and identical target rows: every
        // similarity equals the same constant.
        let n = 5;
        let row: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let trow: Vec<f64> = (0..8).map(|i| (i as f64 * 0.73).cos()).collect();
        let z = Tensor::from_rows(&vec![row; n]).unwrap();
        let y = Tensor::from_rows(&vec![trow; n]).unwrap();
        let cfg = LossConfig::default();
        let got = contrastive_loss(&z, &y, &cfg).unwrap();
        let want = cfg.lambda * (n as f64).ln();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn contrastive_diagonal_dominant_matches_closed_form() {
        // Orthonormal rows on both sides: s_ii = 1/tau, s_ij = 0.
        let cfg = LossConfig { lambda: 0.2, tau: 0.07, normalize_before_dot: true };
        let z = orthonormal_rows(4, 8);
        let got = contrastive_loss(&z, &z, &cfg).unwrap();
        let want = cfg.lambda * (1.0 + 3.0 * (-1.0 / cfg.tau).exp()).ln();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn lambda_zero_total_is_projection_exactly() {
        let z_hat = rand_batch(6, 4, 8);
        let z_x = rand_batch(7, 4, 8);
        let z_y = rand_batch(8, 4, 8);
        let cfg = LossConfig { lambda: 0.0, ..LossConfig::default() };
        let breakdown = total_loss(&z_hat, &z_x, &z_y, &cfg).unwrap();
        assert_eq!(breakdown.contrastive, 0.0);
        assert_eq!(breakdown.total, breakdown.projection);
    }

    #[test]
    fn perfect_prediction_with_cold_temperature_vanishes() {
        let z = orthonormal_rows(4, 8);
        let cfg = LossConfig { lambda: 0.2, tau: 0.01, normalize_before_dot: true };
        let breakdown = total_loss(&z, &z, &z, &cfg).unwrap();
        assert_eq!(breakdown.projection, 0.0);
        assert!(breakdown.total < 1e-12 && breakdown.total >= 0.0);
    }

    #[test]
    fn graph_route_and_direct_route_agree() {
        let z_hat = rand_batch(9, 4, 8);
        let z_x = rand_batch(10, 4, 8);
        let z_y = rand_batch(11, 4, 8);
        for cfg in [
            LossConfig::default(),
            LossConfig { lambda: 0.5, tau: 0.2, normalize_before_dot: true },
            LossConfig { lambda: 0.3, tau: 0.07, normalize_before_dot: false },
        ] {
            let direct = total_loss(&z_hat, &z_x, &z_y, &cfg).unwrap();
            let mut tape = Tape::new(FloatMode::F64);
            let pred = tape.leaf(z_hat.clone()).unwrap();
            let (root, graph) = total_loss_graph(&mut tape, pred, &z_x, &z_y, &cfg).unwrap();
            let root_value = tape.value(root).scalar_value().unwrap();
            assert!((direct.total - graph.total).abs() < 1e-12);
            assert!((root_value - direct.total).abs() < 1e-12);
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        use crate::tensorcore::finite_diff_check;
        let z_hat = rand_batch(12, 4, 8);
        let z_x = rand_batch(13, 4, 8);
        let z_y = rand_batch(14, 4, 8);
        let cfg = LossConfig::default();

        let eval = |ps: &[Tensor]| {
            let mut tape = Tape::new(FloatMode::F64);
            let pred = tape.leaf(ps[0].clone())?;
            let (root, _) = total_loss_graph(&mut tape, pred, &z_x, &z_y, &cfg)?;
            tape.value(root).scalar_value()
        };
        let mut tape = Tape::new(FloatMode::F64);
        let pred = tape.leaf(z_hat.clone()).unwrap();
        let (root, _) = total_loss_graph(&mut tape, pred, &z_x, &z_y, &cfg).unwrap();
        let mut grads = tape.backward(root).unwrap();
        let analytic = grads.take(pred).unwrap();
        let report = finite_diff_check(eval, &[z_hat], &[analytic], 1e-5).unwrap();
        assert!(report.max_rel_err <= 1e-6, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn batch_permutation_leaves_breakdown_unchanged() {
        let z_hat = rand_batch(15, 5, 6);
        let z_x = rand_batch(16, 5, 6);
        let z_y = rand_batch(17, 5, 6);
        let cfg = LossConfig::default();
        let base = total_loss(&z_hat, &z_x, &z_y, &cfg).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let apply = |t: &Tensor| {
            Tensor::from_rows(&perm.iter().map(|&i| t.row_slice(i).to_vec()).collect::<Vec<_>>())
                .unwrap()
        };
        let permuted =
            total_loss(&apply(&z_hat), &apply(&z_x), &apply(&z_y), &cfg).unwrap();
        assert!((base.projection - permuted.projection).abs() < 1e-12);
        assert!((base.contrastive - permuted.contrastive).abs() < 1e-12);
        assert!((base.total - permuted.total).abs() < 1e-12);
    }

    #[test]
    fn raising_an_off_diagonal_similarity_never_lowers_the_term() {
        // With normalization off and basis targets, s_ij is literally
        // z_hat[i][j]; bump one off-diagonal entry and watch the loss.
        let cfg = LossConfig { lambda: 0.2, tau: 0.07, normalize_before_dot: false };
        let targets = orthonormal_rows(4, 4);
        let mut z_hat = rand_batch(18, 4, 4);
        let base = contrastive_loss(&z_hat, &targets, &cfg).unwrap();
        for bump in [0.1, 0.5, 2.0] {
            let mut bumped = z_hat.clone();
            bumped.data_mut()[2] += bump; // s_02
            let loss = contrastive_loss(&bumped, &targets, &cfg).unwrap();
            assert!(loss >= base - 1e-15, "bump {bump}: {loss} < {base}");
        }
        // and it is strictly monotone along a chain of bumps
        let mut prev = base;
        for _ in 0..3 {
            z_hat.data_mut()[2] += 0.25;
            let loss = contrastive_loss(&z_hat, &targets, &cfg).unwrap();
            assert!(loss >= prev - 1e-15);
            prev = loss;
        }
    }

    #[test]
    fn lambda_scales_the_contrastive_field_linearly() {
        let z_hat = rand_batch(19, 4, 8);
        let z_y = rand_batch(20, 4, 8);
        let base_cfg = LossConfig { lambda: 0.2, ..LossConfig::default() };
        let scaled_cfg = LossConfig { lambda: 0.6, ..LossConfig::default() };
        let base = contrastive_loss(&z_hat, &z_y, &base_cfg).unwrap();
        let scaled = contrastive_loss(&z_hat, &z_y, &scaled_cfg).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn contrastive_is_nonnegative() {
        for seed in 0..8 {
            let z_hat = rand_batch(100 + seed, 6, 5);
            let z_y = rand_batch(200 + seed, 6, 5);
            let loss = contrastive_loss(&z_hat, &z_y, &LossConfig::default()).unwrap();
            assert!(loss >= 0.0);
        }
    }
}
