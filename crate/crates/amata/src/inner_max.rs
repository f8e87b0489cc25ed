//! The PGD inner maximizer: sign-gradient ascent on the input with
//! epsilon-ball clipping and optional domain clipping, applied every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{self, Params, Wrt};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// A clean batch, its current perturbed version, and the bounds binding them:
/// componentwise `|x - x0| <= eps` and `domain_lo <= x <= domain_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvBatch<T = f64> {
    x0: Tensor<T>,
    x: Tensor<T>,
    y: Vec<usize>,
    eps: T,
    domain_lo: T,
    domain_hi: T,
}

impl<T: Real> AdvBatch<T> {
    /// Starts at the clean inputs with the default `[0, 1]` domain.
    pub fn new(x0: Tensor<T>, y: Vec<usize>, eps: T) -> Result<Self> {
        Self::with_domain(x0, y, eps, T::zero(), T::one())
    }

    pub fn with_domain(x0: Tensor<T>, y: Vec<usize>, eps: T, lo: T, hi: T) -> Result<Self> {
        if !(eps >= T::zero() && eps.is_finite()) {
            return Err(Error::contract(format!("eps must be finite and >= 0, got {eps}")));
        }
        if !(lo <= hi) {
            return Err(Error::contract(format!("empty domain [{lo}, {hi}]")));
        }
        if x0.shape().len() != 2 {
            return Err(Error::contract(format!(
                "AdvBatch inputs must be 2-D, got shape {:?}",
                x0.shape()
            )));
        }
        if x0.shape()[0] != y.len() {
            return Err(Error::ShapeMismatch {
                op: "AdvBatch labels",
                lhs: x0.shape().to_vec(),
                rhs: vec![y.len()],
            });
        }
        if x0.data().iter().any(|&v| v < lo || v > hi) {
            return Err(Error::contract(
                "clean inputs must lie inside the domain box",
            ));
        }
        let batch = AdvBatch {
            x: x0.clone(),
            x0,
            y,
            eps,
            domain_lo: lo,
            domain_hi: hi,
        };
        Ok(batch)
    }

    /// Removes the domain box (ball clipping only).
    pub fn without_domain_clip(mut self) -> Self {
        self.domain_lo = T::neg_infinity();
        self.domain_hi = T::infinity();
        self
    }

    pub fn x0(&self) -> &Tensor<T> {
        &self.x0
    }

    pub fn x(&self) -> &Tensor<T> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn domain(&self) -> (T, T) {
        (self.domain_lo, self.domain_hi)
    }

    /// Checks the ball and domain invariants. The ball bound carries a small
    /// slack for the rounding of `x0 +/- eps`.
    pub fn validate(&self) -> Result<()> {
        let slack = T::of(1e-12).max(T::epsilon() * T::of(8.0));
        for (&xv, &x0v) in self.x.data().iter().zip(self.x0.data()) {
            if (xv - x0v).abs() > self.eps + slack {
                return Err(Error::contract(format!(
                    "perturbation {} exceeds eps {}",
                    (xv - x0v).abs(),
                    self.eps
                )));
            }
            if xv < self.domain_lo || xv > self.domain_hi {
                return Err(Error::contract(format!(
                    "value {xv} outside domain [{}, {}]",
                    self.domain_lo, self.domain_hi
                )));
            }
        }
        Ok(())
    }

    fn with_x(&self, x: Tensor<T>) -> Self {
        AdvBatch {
            x0: self.x0.clone(),
            x,
            y: self.y.clone(),
            eps: self.eps,
            domain_lo: self.domain_lo,
            domain_hi: self.domain_hi,
        }
    }
}

/// Where the perturbation starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgdInit {
    /// At the clean inputs.
    Clean,
    /// Uniform in `[-eps, eps]` around the clean inputs, then domain-clipped.
    UniformRandom { seed: u64 },
}

/// Loss oracle the maximizer ascends: mean batch loss and its input gradient.
pub trait InnerObjective<T: Real> {
    fn loss_and_input_grad(&self, x: &Tensor<T>, y: &[usize]) -> Result<(T, Tensor<T>)>;

    fn mean_loss(&self, x: &Tensor<T>, y: &[usize]) -> Result<T> {
        Ok(self.loss_and_input_grad(x, y)?.0)
    }
}

impl<T: Real> InnerObjective<T> for Params<T> {
    fn loss_and_input_grad(&self, x: &Tensor<T>, y: &[usize]) -> Result<(T, Tensor<T>)> {
        let (loss, grads) = models::loss_and_grads(self, x, y, Wrt::InputOnly)?;
        Ok((loss, grads.input.expect("input gradient requested")))
    }

    fn mean_loss(&self, x: &Tensor<T>, y: &[usize]) -> Result<T> {
        let losses = models::per_example_losses(self, x, y)?;
        let mut acc = T::zero();
        for &l in &losses {
            acc += l;
        }
        Ok(acc / T::of_usize(losses.len().max(1)))
    }
}

/// Result of a PGD run: the perturbed batch and the mean loss at it.
#[derive(Debug, Clone)]
pub struct PgdOutcome<T = f64> {
    pub batch: AdvBatch<T>,
    pub loss: T,
}

/// Runs `k_steps` iterations of
/// `x <- clip(x + alpha * sign(grad_x loss), x0 - eps, x0 + eps)` followed by
/// domain clipping each step, with `sign(0) = 0`. Deterministic given the
/// init seed and inputs.
pub fn pgd_perturb<T: Real, M: InnerObjective<T>>(
    model: &M,
    batch: &AdvBatch<T>,
    alpha: T,
    k_steps: usize,
    init: PgdInit,
) -> Result<PgdOutcome<T>> {
    let (outcome, _) = run_pgd(model, batch, alpha, k_steps, init, false)?;
    Ok(outcome)
}

/// As [`pgd_perturb`], additionally returning the iterate after every step
/// (`k_steps + 1` states, the first being the initialized input).
pub fn pgd_perturb_traced<T: Real, M: InnerObjective<T>>(
    model: &M,
    batch: &AdvBatch<T>,
    alpha: T,
    k_steps: usize,
    init: PgdInit,
) -> Result<(PgdOutcome<T>, Vec<Tensor<T>>)> {
    run_pgd(model, batch, alpha, k_steps, init, true)
}

fn run_pgd<T: Real, M: InnerObjective<T>>(
    model: &M,
    batch: &AdvBatch<T>,
    alpha: T,
    k_steps: usize,
    init: PgdInit,
    trace: bool,
) -> Result<(PgdOutcome<T>, Vec<Tensor<T>>)> {
    if !(alpha >= T::zero() && alpha.is_finite()) {
        return Err(Error::contract(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    batch.validate()?;
    let (lo, hi) = batch.domain();
    let eps = batch.eps();

    let mut x = match init {
        PgdInit::Clean => batch.x0().clone(),
        PgdInit::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = batch.x0().clone();
            for v in x.data_mut() {
                let u = T::of(rng.random::<f64>()); // [0, 1)
                let delta = (u + u - T::one()) * eps;
                *v = (*v + delta).max(lo).min(hi);
            }
            x
        }
    };

    let mut states = Vec::new();
    if trace {
        states.push(x.clone());
    }

    for step in 0..k_steps {
        let (_, grad) = model.loss_and_input_grad(&x, batch.labels())?;
        if !grad.all_finite() {
            return Err(Error::NonFinite {
                context: "pgd input gradient",
                step,
            });
        }
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let g = grad.data()[i];
            let s = if g > T::zero() {
                T::one()
            } else if g < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            let x0v = batch.x0().data()[i];
            let stepped = *v + alpha * s;
            let balled = stepped.max(x0v - eps).min(x0v + eps);
            *v = balled.max(lo).min(hi);
        }
        if trace {
            states.push(x.clone());
        }
    }

    let loss = model.mean_loss(&x, batch.labels())?;
    let out = batch.with_x(x);
    out.validate()?;
    Ok((PgdOutcome { batch: out, loss }, states))
}
