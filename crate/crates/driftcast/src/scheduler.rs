//! Awake/hibernate phase schedule, derived purely from the timestep index.
//!
//! Each cycle is `L_a` awake steps followed by `L_h = round(lambda * L_a)`
//! hibernate steps, aligned so the online phase always starts awake.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Awake,
    Hibernate,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Awake => write!(f, "awake"),
            Phase::Hibernate => write!(f, "hibernate"),
        }
    }
}

/// Cycle geometry for the phase schedule.
#[derive(Clone, Debug)]
pub struct AHConfig {
    /// Timesteps per week (10080 / interval minutes), kept for reference.
    pub intervals_per_week: usize,
    /// Awake phase length in timesteps; defaults to one week.
    pub awake_len: usize,
    /// Hibernate-to-awake length ratio.
    pub lambda: f64,
    /// First timestep of the online phase.
    pub online_start: usize,
}

impl AHConfig {
    pub fn new(
        intervals_per_week: usize,
        awake_len: usize,
        lambda: f64,
        online_start: usize,
    ) -> Result<Self> {
        if awake_len == 0 {
            return Err(Error::Config("awake_len must be >= 1".into()));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::Config(format!("lambda {lambda} must be >= 0")));
        }
        Ok(Self {
            intervals_per_week,
            awake_len,
            lambda,
            online_start,
        })
    }

    /// Hibernate length, `round(lambda * L_a)`.
    pub fn hibernate_len(&self) -> usize {
        (self.lambda * self.awake_len as f64).round() as usize
    }

    /// Full cycle length `L_a + L_h`.
    pub fn cycle_len(&self) -> usize {
        self.awake_len + self.hibernate_len()
    }
}

/// Pure function of `(t - online_start)` and the cycle geometry.
#[derive(Clone, Debug)]
pub struct PhaseClock {
    config: AHConfig,
}

impl PhaseClock {
    pub fn new(config: AHConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &AHConfig {
        &self.config
    }

    /// Phase at timestep `t`. Warm-up timesteps (`t < online_start`) must
    /// never reach the scheduler.
    pub fn phase_at(&self, t: usize) -> Result<Phase> {
        let c = &self.config;
        if t < c.online_start {
            return Err(Error::Stream(format!(
                "timestep {t} precedes online start {}",
                c.online_start
            )));
        }
        let r = (t - c.online_start) % self.config.cycle_len();
        if r < c.awake_len {
            Ok(Phase::Awake)
        } else {
            Ok(Phase::Hibernate)
        }
    }

    /// True exactly on the first step of each hibernate phase.
    pub fn is_hibernate_start(&self, t: usize) -> Result<bool> {
        if self.phase_at(t)? != Phase::Hibernate {
            return Ok(false);
        }
        Ok(t == self.config.online_start || self.phase_at(t - 1)? == Phase::Awake)
    }
}
