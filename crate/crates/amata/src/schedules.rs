//! Annealing schedules: outer progress t maps to the inner-loop step count
//! K_t and step size alpha_t = tau / K_t, with the movement budget
//! tau = alpha_t * K_t held fixed.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// How K_t evolves over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleVariant<T = f64> {
    /// K_t = k_max for all t.
    Constant,
    /// K_t = round(k_min + (k_max - k_min) * t / T).
    Linear,
    /// K_t = round(k_min + (k_max - k_min) * (1 - e^(-eta t)) / (1 - e^(-eta T))).
    Exponential { eta: T },
    /// K_t = round(2 tau / (theta0^2 e^(-2 t~) + 1)) with t~ = 3t/T mapping
    /// the horizon onto the closed-form schedule's transient.
    ToyOptimal { theta0: T },
    /// Listed (K, alpha) per epoch; the list length must equal the horizon.
    Explicit { pairs: Vec<(usize, T)> },
}

/// A declarative annealing schedule over `horizon` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec<T = f64> {
    variant: ScheduleVariant<T>,
    k_min: usize,
    k_max: usize,
    tau: T,
    horizon: usize,
}

impl<T: Real> ScheduleSpec<T> {
    pub fn new(
        variant: ScheduleVariant<T>,
        k_min: usize,
        k_max: usize,
        tau: T,
        horizon: usize,
    ) -> Result<Self> {
        if k_min == 0 || k_max == 0 {
            return Err(Error::contract("k_min and k_max must be positive"));
        }
        if k_min > k_max {
            return Err(Error::contract(format!(
                "k_min {k_min} exceeds k_max {k_max}"
            )));
        }
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(Error::contract(format!("tau must be finite and > 0, got {tau}")));
        }
        if horizon == 0 {
            return Err(Error::contract("horizon must be positive"));
        }
        match &variant {
            ScheduleVariant::Exponential { eta } => {
                if !(*eta > T::zero() && eta.is_finite()) {
                    return Err(Error::contract(format!(
                        "exponential shape eta must be finite and > 0, got {eta}"
                    )));
                }
            }
            ScheduleVariant::Explicit { pairs } => {
                if pairs.len() != horizon {
                    return Err(Error::contract(format!(
                        "explicit schedule lists {} entries for horizon {horizon}",
                        pairs.len()
                    )));
                }
                if pairs.iter().any(|&(k, a)| k == 0 || !(a > T::zero())) {
                    return Err(Error::contract(
                        "explicit entries need K >= 1 and alpha > 0",
                    ));
                }
            }
            _ => {}
        }
        Ok(ScheduleSpec {
            variant,
            k_min,
            k_max,
            tau,
            horizon,
        })
    }

    /// Constant schedule at `k` steps.
    pub fn constant(k: usize, tau: T, horizon: usize) -> Result<Self> {
        Self::new(ScheduleVariant::Constant, k, k, tau, horizon)
    }

    pub fn linear(k_min: usize, k_max: usize, tau: T, horizon: usize) -> Result<Self> {
        Self::new(ScheduleVariant::Linear, k_min, k_max, tau, horizon)
    }

    pub fn variant(&self) -> &ScheduleVariant<T> {
        &self.variant
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Inner step count at epoch `t`.
    ///
    /// `t` may equal the horizon so the closed endpoint of the analytic
    /// variants is observable (the trainer only uses `t < horizon`); the
    /// explicit variant has no value there.
    pub fn steps_at(&self, t: usize) -> Result<usize> {
        let horizon_t = T::of_usize(self.horizon);
        let spread = T::of_usize(self.k_max - self.k_min);
        let raw = match &self.variant {
            ScheduleVariant::Constant => return self.check_range(t).map(|_| self.k_max),
            ScheduleVariant::Linear => {
                self.check_range(t)?;
                T::of_usize(self.k_min) + spread * T::of_usize(t) / horizon_t
            }
            ScheduleVariant::Exponential { eta } => {
                self.check_range(t)?;
                let num = T::one() - (-*eta * T::of_usize(t)).exp();
                let den = T::one() - (-*eta * horizon_t).exp();
                T::of_usize(self.k_min) + spread * num / den
            }
            ScheduleVariant::ToyOptimal { theta0 } => {
                self.check_range(t)?;
                let t_toy = T::of(3.0) * T::of_usize(t) / horizon_t;
                let two = T::of(2.0);
                two * self.tau / (*theta0 * *theta0 * (-two * t_toy).exp() + T::one())
            }
            ScheduleVariant::Explicit { pairs } => {
                if t >= self.horizon {
                    return Err(Error::contract(format!(
                        "epoch {t} out of range for explicit schedule of length {}",
                        self.horizon
                    )));
                }
                return Ok(pairs[t].0);
            }
        };
        let rounded = raw.round_half_up();
        let k = rounded.to_usize().unwrap_or(1).max(1).min(self.k_max);
        Ok(k)
    }

    /// Inner step size at epoch `t`: tau / K_t (the explicit variant returns
    /// its listed alpha).
    pub fn alpha_at(&self, t: usize) -> Result<T> {
        if let ScheduleVariant::Explicit { pairs } = &self.variant {
            if t >= self.horizon {
                return Err(Error::contract(format!(
                    "epoch {t} out of range for explicit schedule of length {}",
                    self.horizon
                )));
            }
            return Ok(pairs[t].1);
        }
        let k = self.steps_at(t)?;
        Ok(self.tau / T::of_usize(k))
    }

    /// Total inner gradient steps over the horizon: a hardware-independent
    /// cost proxy.
    pub fn total_inner_steps(&self, batches_per_epoch: usize) -> Result<u64> {
        let mut total = 0u64;
        for t in 0..self.horizon {
            total += (self.steps_at(t)? as u64) * (batches_per_epoch as u64);
        }
        Ok(total)
    }

    fn check_range(&self, t: usize) -> Result<()> {
        if t > self.horizon {
            Err(Error::contract(format!(
                "epoch {t} out of range for horizon {}",
                self.horizon
            )))
        } else {
            Ok(())
        }
    }
}
