//! Dynamic factors: the integer temperature ladder, the teacher/margin
//! coefficient φ derived from it, and the ψ mixing schedules.

use crate::error::{Error, Result};

/// Integer temperature that starts at `t_max` and drops by one every
/// `floor(epochs / t_max)` epochs, never going below 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemperatureLadder {
    t_max: u32,
    epochs: u32,
    step: u32,
}

impl TemperatureLadder {
    pub fn new(t_max: u32, epochs: u32) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::invalid("t_max", "must be at least 1"));
        }
        if epochs < t_max {
            return Err(Error::invalid(
                "epochs",
                alloc::format!("{epochs} epochs cannot fit a ladder with t_max {t_max}"),
            ));
        }
        Ok(Self {
            t_max,
            epochs,
            step: epochs / t_max,
        })
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    /// Epochs between decrements.
    pub fn step(&self) -> u32 {
        self.step
    }

    /// `T_i = max(1, t_max − floor(i / step))` for `1 ≤ i ≤ epochs`.
    pub fn temperature_at_epoch(&self, epoch: u32) -> Result<u32> {
        self.check(epoch)?;
        Ok(self.t_max.saturating_sub(epoch / self.step).max(1))
    }

    /// φ at the given epoch.
    pub fn phi_at_epoch(&self, epoch: u32) -> Result<f64> {
        phi_of_temperature(self.temperature_at_epoch(epoch)?, self.t_max)
    }

    fn check(&self, epoch: u32) -> Result<()> {
        if epoch == 0 || epoch > self.epochs {
            return Err(Error::EpochOutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        Ok(())
    }
}

/// `φ(T) = 1 − (T − 1) / T_max`: `1/T_max` at the hottest temperature, 1 at
/// `T = 1`.
pub fn phi_of_temperature(temperature: u32, t_max: u32) -> Result<f64> {
    if temperature == 0 || temperature > t_max {
        return Err(Error::TemperatureOutOfRange { temperature, t_max });
    }
    // (T_max - T + 1) / T_max: one rounding instead of two
    Ok(f64::from(t_max - temperature + 1) / f64::from(t_max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiSchedule {
    /// 0 up to and including `switch_after`, 1 afterwards.
    Step { switch_after: u32 },
    /// `min(i / denominator, 1)` up to and including `cutover`, 1 afterwards.
    CappedRamp { denominator: f64, cutover: u32 },
    Constant(f64),
}

impl PsiSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PsiSchedule::Step { .. } => Ok(()),
            PsiSchedule::CappedRamp { denominator, .. } => {
                if denominator > 0.0 && denominator.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("denominator", "must be positive"))
                }
            }
            PsiSchedule::Constant(v) => {
                if (0.0..=1.0).contains(&v) {
                    Ok(())
                } else {
                    Err(Error::invalid("psi", "constant must lie in [0, 1]"))
                }
            }
        }
    }

    /// Value at epoch `i` without a range check.
    fn eval(&self, epoch: u32) -> f64 {
        match *self {
            PsiSchedule::Step { switch_after } => {
                if epoch <= switch_after {
                    0.0
                } else {
                    1.0
                }
            }
            PsiSchedule::CappedRamp {
                denominator,
                cutover,
            } => {
                if epoch <= cutover {
                    (f64::from(epoch) / denominator).min(1.0)
                } else {
                    1.0
                }
            }
            PsiSchedule::Constant(v) => v,
        }
    }
}

/// A ψ schedule bound to a run length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSpec {
    pub schedule: PsiSchedule,
    pub epochs: u32,
}

impl PsiSpec {
    pub fn new(schedule: PsiSchedule, epochs: u32) -> Result<Self> {
        schedule.validate()?;
        Ok(Self { schedule, epochs })
    }

    /// The step schedule that turns the continuation objective into the
    /// two-stage annealing one.
    pub fn step(switch_after: u32, epochs: u32) -> Self {
        Self {
            schedule: PsiSchedule::Step { switch_after },
            epochs,
        }
    }

    /// The 200-epoch image-classification ramp: `i / 150`, capped at 1.
    pub fn image_ramp() -> Self {
        Self {
            schedule: PsiSchedule::CappedRamp {
                denominator: 150.0,
                cutover: 150,
            },
            epochs: 200,
        }
    }

    /// The 30-epoch language-understanding ramp: `i / 40` through epoch 20,
    /// then 1.
    pub fn language_ramp() -> Self {
        Self {
            schedule: PsiSchedule::CappedRamp {
                denominator: 40.0,
                cutover: 20,
            },
            epochs: 30,
        }
    }

    pub fn psi(&self, epoch: u32) -> Result<f64> {
        if epoch == 0 || epoch > self.epochs {
            return Err(Error::EpochOutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        Ok(self.schedule.eval(epoch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal epoch loop: start hot, decrement whenever `i mod k == 0`.
    fn simulate_ladder(t_max: u32, n: u32) -> std::vec::Vec<i64> {
        let k = n / t_max;
        let mut t = t_max as i64;
        (1..=n)
            .map(|i| {
                if i % k == 0 {
                    t -= 1;
                }
                t
            })
            .collect()
    }

    #[test]
    fn ladder_matches_simulated_loop_with_clamp() {
        let ladder = TemperatureLadder::new(20, 200).unwrap();
        let sim = simulate_ladder(20, 200);
        assert_eq!(ladder.temperature_at_epoch(5).unwrap(), 20);
        assert_eq!(ladder.temperature_at_epoch(10).unwrap(), 19);
        // The literal loop reaches 0 at the last epoch.
        assert_eq!(sim[199], 0);
        assert_eq!(ladder.temperature_at_epoch(200).unwrap(), 1);
        for i in 1..=200u32 {
            let expect = sim[(i - 1) as usize].max(1) as u32;
            assert_eq!(ladder.temperature_at_epoch(i).unwrap(), expect, "epoch {i}");
        }
    }

    #[test]
    fn ladder_rejects_out_of_range_epochs() {
        let ladder = TemperatureLadder::new(10, 30).unwrap();
        assert!(ladder.temperature_at_epoch(0).is_err());
        assert!(ladder.temperature_at_epoch(31).is_err());
        assert!(TemperatureLadder::new(10, 9).is_err());
        assert!(TemperatureLadder::new(0, 9).is_err());
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_of_temperature(1, 7).unwrap(), 1.0);
        assert_eq!(phi_of_temperature(20, 20).unwrap(), 1.0 / 20.0);
        assert_eq!(phi_of_temperature(5, 20).unwrap(), 0.8);
        assert!(phi_of_temperature(0, 20).is_err());
        assert!(phi_of_temperature(21, 20).is_err());
    }

    #[test]
    fn image_ramp_instance() {
        let spec = PsiSpec::image_ramp();
        assert_eq!(spec.psi(75).unwrap(), 0.5);
        assert_eq!(spec.psi(150).unwrap(), 1.0);
        assert_eq!(spec.psi(200).unwrap(), 1.0);
    }

    #[test]
    fn language_ramp_jumps_after_cutover() {
        let spec = PsiSpec::language_ramp();
        assert_eq!(spec.psi(20).unwrap(), 0.5);
        assert_eq!(spec.psi(21).unwrap(), 1.0);
    }

    #[test]
    fn step_schedule() {
        let spec = PsiSpec::step(20, 40);
        assert_eq!(spec.psi(1).unwrap(), 0.0);
        assert_eq!(spec.psi(20).unwrap(), 0.0);
        assert_eq!(spec.psi(21).unwrap(), 1.0);
        assert!(spec.psi(41).is_err());
    }

    #[test]
    fn constant_schedule_validates_range() {
        assert!(PsiSpec::new(PsiSchedule::Constant(1.5), 3).is_err());
        assert_eq!(PsiSpec::new(PsiSchedule::Constant(0.5), 3).unwrap().psi(2).unwrap(), 0.5);
    }

    #[test]
    fn first_epoch_is_hottest_when_step_at_least_two() {
        for t_max in 1..=10 {
            for n in (2 * t_max)..=60 {
                let l = TemperatureLadder::new(t_max, n).unwrap();
                assert_eq!(l.temperature_at_epoch(1).unwrap(), t_max);
            }
        }
    }
}
