//! The outer min-max loop: per-epoch schedule lookup, PGD perturbation of
//! each mini-batch, one SGD step (momentum, weight decay, milestone decay)
//! on the adversarial batch, and a metrics ledger.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::{evaluate_robust, AttackSpec};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::inner_max::{pgd_perturb, AdvBatch, PgdInit};
use crate::models::{self, init_params, MlpSpec, Params, Wrt};
use crate::scalar::Real;
use crate::schedules::ScheduleSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T = f64> {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    pub lr_milestones: Vec<usize>,
    pub lr_decay_factor: T,
    pub seed: u64,
    pub schedule: ScheduleSpec<T>,
    pub eps: T,
    /// Clip iterates to the `[0, 1]` input domain every PGD step.
    pub domain_clip: bool,
    /// When set, robust accuracy on the training set is recorded per epoch.
    pub attack_eval: Option<AttackSpec<T>>,
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs and batch_size must be positive"));
        }
        if !(self.lr >= T::zero() && self.lr.is_finite()) {
            return Err(Error::contract(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::contract(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.lr_decay_factor > T::zero() && self.lr_decay_factor <= T::one()) {
            return Err(Error::contract(format!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        if !(self.eps >= T::zero() && self.eps.is_finite()) {
            return Err(Error::contract(format!(
                "eps must be finite and >= 0, got {}",
                self.eps
            )));
        }
        if self.schedule.horizon() != self.epochs {
            return Err(Error::contract(format!(
                "schedule horizon {} != epochs {}",
                self.schedule.horizon(),
                self.epochs
            )));
        }
        Ok(())
    }
}

/// One ledger row per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub k: usize,
    pub alpha: f64,
    /// Sample-weighted mean adversarial training loss over the epoch.
    pub train_loss: f64,
    /// Accuracy on the (clean) training set after the epoch.
    pub clean_acc: f64,
    pub robust_acc: Option<f64>,
    pub cum_inner_steps: u64,
    pub wall_seconds: f64,
    /// Squared parameter-gradient norm on the last batch of the epoch.
    pub grad_norm_sq: f64,
}

/// Learning rate at `epoch`: base lr multiplied by the decay factor once per
/// milestone that has been reached.
pub fn lr_at<T: Real>(config: &TrainConfig<T>, epoch: usize) -> T {
    let passed = config
        .lr_milestones
        .iter()
        .filter(|&&m| m <= epoch)
        .count();
    let mut lr = config.lr;
    for _ in 0..passed {
        lr = lr * config.lr_decay_factor;
    }
    lr
}

/// One SGD step: `v <- momentum v + grad + weight_decay p; p <- p - lr v`.
pub fn sgd_step<T: Real>(
    params: &mut Params<T>,
    grads: &Params<T>,
    velocity: &mut Params<T>,
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if params.layer_sizes() != grads.layer_sizes() || params.layer_sizes() != velocity.layer_sizes()
    {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            lhs: params.layer_sizes(),
            rhs: grads.layer_sizes(),
        });
    }
    for ((p_layer, g_layer), v_layer) in params
        .layers_mut()
        .iter_mut()
        .zip(grads.layers())
        .zip(velocity.layers_mut())
    {
        for ((p, &g), v) in p_layer
            .weight
            .data_mut()
            .iter_mut()
            .zip(g_layer.weight.data())
            .zip(v_layer.weight.data_mut())
        {
            *v = momentum * *v + g + weight_decay * *p;
            *p = *p - lr * *v;
        }
        for ((p, &g), v) in p_layer
            .bias
            .data_mut()
            .iter_mut()
            .zip(g_layer.bias.data())
            .zip(v_layer.bias.data_mut())
        {
            *v = momentum * *v + g + weight_decay * *p;
            *p = *p - lr * *v;
        }
    }
    Ok(())
}

/// Runs the annealed min-max training loop and returns the final parameters
/// plus the per-epoch ledger. Deterministic given config, dataset, and seed.
pub fn train<T: Real>(
    config: &TrainConfig<T>,
    data: &Dataset<T>,
    spec: &MlpSpec,
) -> Result<(Params<T>, Vec<MetricsRow>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "training dataset",
            lhs: vec![data.len(), data.dim()],
            rhs: vec![data.len(), spec.input_dim()],
        });
    }
    if data.class_count != spec.class_count() {
        return Err(Error::contract(format!(
            "dataset has {} classes, model emits {}",
            data.class_count,
            spec.class_count()
        )));
    }

    let mut params = init_params::<T>(spec);
    let mut velocity = params.zeros_like();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = Instant::now();

    let n = data.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut cum_inner_steps = 0u64;

    for epoch in 0..config.epochs {
        let k = config.schedule.steps_at(epoch)?;
        let alpha = config.schedule.alpha_at(epoch)?;
        let lr = lr_at(config, epoch);

        // Fisher-Yates; the shuffle stream is part of the determinism contract.
        for i in (1..n).rev() {
            let j = shuffle_rng.random_range(0..=i);
            indices.swap(i, j);
        }

        let mut loss_sum = T::zero();
        let mut grad_norm_sq = T::zero();
        for (batch_idx, chunk) in indices.chunks(config.batch_size).enumerate() {
            let x0 = data.inputs.gather_rows(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let batch = if config.domain_clip {
                AdvBatch::new(x0, y, config.eps)?
            } else {
                AdvBatch::new(x0, y, config.eps)?.without_domain_clip()
            };
            let outcome = pgd_perturb(&params, &batch, alpha, k, PgdInit::Clean)?;
            cum_inner_steps += k as u64;

            let (loss, grads) = models::loss_and_grads(
                &params,
                outcome.batch.x(),
                outcome.batch.labels(),
                Wrt::ParamsOnly,
            )?;
            if !loss.is_finite() {
                return Err(Error::TrainAbort {
                    epoch,
                    batch: batch_idx,
                });
            }
            let grads = grads.params.expect("parameter gradients requested");
            grad_norm_sq = grads.norm_sq();
            loss_sum += loss * T::of_usize(chunk.len());
            sgd_step(
                &mut params,
                &grads,
                &mut velocity,
                lr,
                config.momentum,
                config.weight_decay,
            )?;
        }

        let clean_acc = models::accuracy(&params, &data.inputs, &data.labels)?;
        let robust_acc = match &config.attack_eval {
            Some(attack) => Some(evaluate_robust(&params, data, attack)?.robust_acc),
            None => None,
        };
        rows.push(MetricsRow {
            epoch,
            k,
            alpha: alpha.to_f64().unwrap_or(f64::NAN),
            train_loss: (loss_sum / T::of_usize(n)).to_f64().unwrap_or(f64::NAN),
            clean_acc,
            robust_acc,
            cum_inner_steps,
            wall_seconds: start.elapsed().as_secs_f64(),
            grad_norm_sq: grad_norm_sq.to_f64().unwrap_or(f64::NAN),
        });
    }

    Ok((params, rows))
}

/// Renders the ledger as CSV: one row per epoch, floats with 9 significant
/// digits. `include_wall` substitutes zeros for wall times so byte-identical
/// reruns stay byte-identical.
pub fn metrics_to_csv(rows: &[MetricsRow], include_wall: bool) -> String {
    let mut out = String::from(
        "epoch,k,alpha,train_loss,clean_acc,robust_acc,cum_inner_steps,wall_seconds,grad_norm_sq\n",
    );
    for row in rows {
        let robust = row
            .robust_acc
            .map(|v| format_sig(v))
            .unwrap_or_default();
        let wall = if include_wall { row.wall_seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.epoch,
            row.k,
            format_sig(row.alpha),
            format_sig(row.train_loss),
            format_sig(row.clean_acc),
            robust,
            row.cum_inner_steps,
            format_sig(wall),
            format_sig(row.grad_norm_sq),
        ));
    }
    out
}

/// 9 significant digits, scientific notation.
pub fn format_sig(v: f64) -> String {
    format!("{v:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::synth_gaussians;
    use crate::models::accuracy;

    fn base_config(epochs: usize, schedule: ScheduleSpec) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_milestones: vec![],
            lr_decay_factor: 0.1,
            seed: 7,
            schedule,
            eps: 0.1,
            domain_clip: true,
            attack_eval: None,
        }
    }

    #[test]
    fn zero_lr_leaves_params_at_init() {
        let data: Dataset = synth_gaussians(20, 5, 2, 3.0, 1).unwrap();
        let spec = MlpSpec::new(vec![5, 8, 2], 3).unwrap();
        let mut config = base_config(2, ScheduleSpec::constant(2, 0.2, 2).unwrap());
        config.lr = 0.0;
        let (params, _) = train(&config, &data, &spec).unwrap();
        assert_eq!(params, init_params::<f64>(&spec));
    }

    #[test]
    fn eps_zero_k1_matches_standard_training() {
        let data: Dataset = synth_gaussians(24, 5, 2, 3.0, 1).unwrap();
        let spec = MlpSpec::new(vec![5, 8, 2], 3).unwrap();
        let mut config = base_config(3, ScheduleSpec::constant(1, 0.2, 3).unwrap());
        config.eps = 0.0;
        let (params, _) = train(&config, &data, &spec).unwrap();

        // Reference: plain SGD without any inner maximization, identical
        // shuffle stream.
        let mut ref_params = init_params::<f64>(&spec);
        let mut velocity = ref_params.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = data.len();
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..config.epochs {
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                indices.swap(i, j);
            }
            for chunk in indices.chunks(config.batch_size) {
                let x = data.inputs.gather_rows(chunk).unwrap();
                let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
                let (_, grads) =
                    models::loss_and_grads(&ref_params, &x, &y, Wrt::ParamsOnly).unwrap();
                sgd_step(
                    &mut ref_params,
                    &grads.params.unwrap(),
                    &mut velocity,
                    config.lr,
                    config.momentum,
                    config.weight_decay,
                )
                .unwrap();
            }
        }
        assert_eq!(params, ref_params);
    }

    #[test]
    fn sgd_step_plain_gradient() {
        // Scalar objective theta^2 / 2 at theta = 1: gradient 1, lr 0.1.
        let mut p = Params::unflatten(&[1, 1], &[1.0, 0.0]).unwrap();
        let g = Params::unflatten(&[1, 1], &[1.0, 0.0]).unwrap();
        let mut v = p.zeros_like();
        sgd_step(&mut p, &g, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p.layers()[0].weight.data()[0], 0.9);
    }

    #[test]
    fn sgd_momentum_two_step_displacement() {
        // v1 = g, v2 = 0.9 g + g = 1.9 g; total displacement lr * 2.9 g.
        let g_val = 0.4f64;
        let lr = 0.05;
        let mut p = Params::unflatten(&[1, 1], &[2.0, 0.0]).unwrap();
        let g = Params::unflatten(&[1, 1], &[g_val, 0.0]).unwrap();
        let mut v = p.zeros_like();
        sgd_step(&mut p, &g, &mut v, lr, 0.9, 0.0).unwrap();
        sgd_step(&mut p, &g, &mut v, lr, 0.9, 0.0).unwrap();
        let expected = 2.0 - lr * g_val * (1.0 + 1.9);
        assert!((p.layers()[0].weight.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_zero_gradient_param_geometrically() {
        let wd = 5e-4f64;
        let lr = 0.1;
        let mut p = Params::unflatten(&[1, 1], &[1.0, 0.0]).unwrap();
        let g = p.zeros_like();
        let mut v = p.zeros_like();
        let steps = 5;
        for _ in 0..steps {
            sgd_step(&mut p, &g, &mut v, lr, 0.0, wd).unwrap();
        }
        let expected = (1.0 - lr * wd).powi(steps);
        assert!((p.layers()[0].weight.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lr_milestones_decay_stepwise() {
        let mut config = base_config(100, ScheduleSpec::constant(1, 0.2, 100).unwrap());
        config.lr = 0.5;
        assert_eq!(lr_at(&config, 99), 0.5);
        config.lr_milestones = vec![75, 90];
        assert_eq!(lr_at(&config, 74), 0.5);
        assert_eq!(lr_at(&config, 80), 0.5 * 0.1);
        assert!((lr_at(&config, 95) - 0.5 * 0.01).abs() < 1e-18);
    }

    #[test]
    fn ledger_accounts_every_inner_step() {
        let data: Dataset = synth_gaussians(16, 4, 2, 3.0, 2).unwrap();
        let spec = MlpSpec::new(vec![4, 6, 2], 5).unwrap();
        let schedule = ScheduleSpec::linear(1, 4, 0.2, 3).unwrap();
        let config = base_config(3, schedule.clone());
        let (_, rows) = train(&config, &data, &spec).unwrap();
        let batches_per_epoch = data.len().div_ceil(config.batch_size);
        assert_eq!(
            rows.last().unwrap().cum_inner_steps,
            schedule.total_inner_steps(batches_per_epoch).unwrap()
        );
        assert!(rows.windows(2).all(|w| w[0].cum_inner_steps <= w[1].cum_inner_steps));
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data: Dataset = synth_gaussians(20, 5, 2, 3.0, 4).unwrap();
        let spec = MlpSpec::new(vec![5, 8, 2], 9).unwrap();
        let config = base_config(2, ScheduleSpec::linear(1, 3, 0.2, 2).unwrap());
        let (p1, r1) = train(&config, &data, &spec).unwrap();
        let (p2, r2) = train(&config, &data, &spec).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.to_bytes(), p2.to_bytes());
        assert_eq!(metrics_to_csv(&r1, false), metrics_to_csv(&r2, false));
    }

    #[test]
    fn training_actually_learns_the_blobs() {
        let data: Dataset = synth_gaussians(40, 6, 2, 6.0, 12).unwrap();
        let spec = MlpSpec::new(vec![6, 16, 2], 2).unwrap();
        let mut config = base_config(8, ScheduleSpec::constant(1, 0.1, 8).unwrap());
        config.eps = 0.05;
        let (params, rows) = train(&config, &data, &spec).unwrap();
        let acc = accuracy(&params, &data.inputs, &data.labels).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
        assert_eq!(rows.len(), 8);
    }

    #[test]
    fn csv_schema_and_formatting() {
        let rows = vec![MetricsRow {
            epoch: 0,
            k: 2,
            alpha: 0.2,
            train_loss: 0.6931471805599453,
            clean_acc: 0.5,
            robust_acc: None,
            cum_inner_steps: 4,
            wall_seconds: 123.456,
            grad_norm_sq: 1e-3,
        }];
        let csv = metrics_to_csv(&rows, false);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,k,alpha,train_loss,clean_acc,robust_acc,cum_inner_steps,wall_seconds,grad_norm_sq"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("0,2,2.00000000e-1,6.93147181e-1,5.00000000e-1,,4,"));
        assert!(row.contains(",0.00000000e0,"));
    }
}
