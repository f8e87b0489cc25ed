//! Robustness evaluation: PGD-K attacks against trained models, worst-case
//! over restarts, with deterministic per-chunk seeding.

use rayon::prelude::*;

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::inner_max::{pgd_perturb, AdvBatch, PgdInit};
use crate::models::{self, Params};
use crate::scalar::Real;

/// Examples per evaluation chunk. Chunking never changes results: rows are
/// independent through the network, so per-example sign gradients match the
/// single-example ones.
const CHUNK: usize = 256;

/// An evaluation attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec<T = f64> {
    pub eps: T,
    pub alpha: T,
    pub k_steps: usize,
    pub init: AttackInit,
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackInit {
    Clean,
    UniformRandom,
}

impl<T: Real> AttackSpec<T> {
    pub fn new(
        eps: T,
        alpha: T,
        k_steps: usize,
        init: AttackInit,
        restarts: usize,
        seed: u64,
    ) -> Result<Self> {
        if restarts == 0 {
            return Err(Error::contract("restarts must be >= 1"));
        }
        if !(eps >= T::zero() && eps.is_finite()) {
            return Err(Error::contract(format!("eps must be finite and >= 0, got {eps}")));
        }
        if !(alpha >= T::zero() && alpha.is_finite()) {
            return Err(Error::contract(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(AttackSpec {
            eps,
            alpha,
            k_steps,
            init,
            restarts,
            seed,
        })
    }

    /// The standard strong evaluation attack for `[0,1]` image data:
    /// PGD-40 at eps 0.3, step 0.01, clean init, one restart.
    pub fn pgd40(seed: u64) -> Self {
        AttackSpec {
            eps: T::of(0.3),
            alpha: T::of(0.01),
            k_steps: 40,
            init: AttackInit::Clean,
            restarts: 1,
            seed,
        }
    }
}

/// Accuracy and loss summary of an attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustReport {
    pub clean_acc: f64,
    pub robust_acc: f64,
    pub mean_clean_loss: f64,
    /// Mean over examples of the worst (max) adversarial loss across restarts.
    pub mean_adv_loss: f64,
}

/// Attacks every example and reports the worst case over restarts: an example
/// counts as robust only if it is classified correctly after every restart.
/// Deterministic given the spec seed; chunks evaluate in parallel and merge
/// in index order.
pub fn evaluate_robust<T: Real>(
    params: &Params<T>,
    data: &Dataset<T>,
    spec: &AttackSpec<T>,
) -> Result<RobustReport> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    if data.dim() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "attack dataset",
            lhs: vec![data.len(), data.dim()],
            rhs: vec![data.len(), params.input_dim()],
        });
    }

    let chunk_ranges: Vec<(usize, usize)> = (0..data.len())
        .step_by(CHUNK)
        .map(|start| (start, (start + CHUNK).min(data.len())))
        .collect();

    let per_chunk: Vec<Result<ChunkStats>> = chunk_ranges
        .par_iter()
        .enumerate()
        .map(|(chunk_idx, &(start, end))| {
            let indices: Vec<usize> = (start..end).collect();
            let x0 = data.inputs.gather_rows(&indices)?;
            let y: Vec<usize> = data.labels[start..end].to_vec();
            attack_chunk(params, x0, y, spec, chunk_idx as u64)
        })
        .collect();

    let mut clean_correct = 0usize;
    let mut robust_correct = 0usize;
    let mut clean_loss_sum = 0.0f64;
    let mut adv_loss_sum = 0.0f64;
    for stats in per_chunk {
        let stats = stats?;
        clean_correct += stats.clean_correct;
        robust_correct += stats.robust_correct;
        clean_loss_sum += stats.clean_loss_sum;
        adv_loss_sum += stats.adv_loss_sum;
    }
    let n = data.len() as f64;
    Ok(RobustReport {
        clean_acc: clean_correct as f64 / n,
        robust_acc: robust_correct as f64 / n,
        mean_clean_loss: clean_loss_sum / n,
        mean_adv_loss: adv_loss_sum / n,
    })
}

struct ChunkStats {
    clean_correct: usize,
    robust_correct: usize,
    clean_loss_sum: f64,
    adv_loss_sum: f64,
}

fn attack_chunk<T: Real>(
    params: &Params<T>,
    x0: crate::tensor::Tensor<T>,
    y: Vec<usize>,
    spec: &AttackSpec<T>,
    chunk_idx: u64,
) -> Result<ChunkStats> {
    let n = y.len();
    let clean_preds = models::predict(params, &x0)?;
    let clean_losses = models::per_example_losses(params, &x0, &y)?;
    let clean_correct = clean_preds.iter().zip(&y).filter(|(p, l)| p == l).count();
    let clean_loss_sum: f64 = clean_losses.iter().map(|l| l.to_f64().unwrap_or(f64::NAN)).sum();

    let batch = AdvBatch::new(x0, y.clone(), spec.eps)?;
    let mut robust = vec![true; n];
    let mut worst_loss = vec![f64::NEG_INFINITY; n];
    for restart in 0..spec.restarts {
        // Restart 0 honors the configured init; extra restarts randomize.
        let init = match (spec.init, restart) {
            (AttackInit::Clean, 0) => PgdInit::Clean,
            _ => PgdInit::UniformRandom {
                seed: spec
                    .seed
                    .wrapping_add(restart as u64 * 0x9e37_79b9)
                    .wrapping_add(chunk_idx * 0x85eb_ca6b),
            },
        };
        let outcome = pgd_perturb(params, &batch, spec.alpha, spec.k_steps, init)?;
        let preds = models::predict(params, outcome.batch.x())?;
        let losses = models::per_example_losses(params, outcome.batch.x(), &y)?;
        for i in 0..n {
            if preds[i] != y[i] {
                robust[i] = false;
            }
            let l = losses[i].to_f64().unwrap_or(f64::NAN);
            if l > worst_loss[i] {
                worst_loss[i] = l;
            }
        }
    }
    Ok(ChunkStats {
        clean_correct,
        robust_correct: robust.iter().filter(|&&r| r).count(),
        clean_loss_sum,
        adv_loss_sum: worst_loss.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::synth_gaussians;
    use crate::models::{init_params, MlpSpec};

    fn small_setup() -> (Params, Dataset) {
        let data: Dataset = synth_gaussians(40, 6, 2, 5.0, 3).unwrap();
        let spec = MlpSpec::new(vec![6, 12, 2], 1).unwrap();
        (init_params(&spec), data)
    }

    #[test]
    fn zero_eps_robust_accuracy_equals_clean_accuracy() {
        let (params, data) = small_setup();
        let spec = AttackSpec::new(0.0, 0.01, 10, AttackInit::Clean, 1, 0).unwrap();
        let report = evaluate_robust(&params, &data, &spec).unwrap();
        assert_eq!(report.robust_acc, report.clean_acc);
    }

    #[test]
    fn adversarial_loss_not_below_clean_loss_for_clean_init() {
        let (params, data) = small_setup();
        let spec = AttackSpec::new(0.1, 0.01, 10, AttackInit::Clean, 1, 0).unwrap();
        let report = evaluate_robust(&params, &data, &spec).unwrap();
        assert!(
            report.mean_adv_loss >= report.mean_clean_loss - 1e-6,
            "adv {} vs clean {}",
            report.mean_adv_loss,
            report.mean_clean_loss
        );
    }

    #[test]
    fn more_restarts_never_increase_robust_accuracy() {
        let (params, data) = small_setup();
        let mut prev = f64::INFINITY;
        for restarts in [1usize, 2, 4] {
            let spec =
                AttackSpec::new(0.15, 0.02, 8, AttackInit::UniformRandom, restarts, 9).unwrap();
            let report = evaluate_robust(&params, &data, &spec).unwrap();
            assert!(
                report.robust_acc <= prev + 1e-12,
                "restarts {restarts}: {} > {prev}",
                report.robust_acc
            );
            prev = report.robust_acc;
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (params, data) = small_setup();
        let spec = AttackSpec::new(0.1, 0.02, 6, AttackInit::UniformRandom, 2, 123).unwrap();
        let a = evaluate_robust(&params, &data, &spec).unwrap();
        let b = evaluate_robust(&params, &data, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn restarts_must_be_positive() {
        assert!(AttackSpec::<f64>::new(0.1, 0.01, 5, AttackInit::Clean, 0, 0).is_err());
    }
}
