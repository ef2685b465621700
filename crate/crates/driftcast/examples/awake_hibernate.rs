//! The awake/hibernate phase schedule.
//!
//! Run with: `cargo run -p driftcast --example awake_hibernate`

use driftcast::scheduler::{AHConfig, Phase, PhaseClock};

fn main() -> driftcast::Result<()> {
    // a compressed week of 8 intervals so the cycle fits on one line
    let clock = PhaseClock::new(AHConfig::new(8, 8, 1.0, 100)?);
    let strip: String = (100..132)
        .map(|t| match clock.phase_at(t).unwrap() {
            Phase::Awake => 'A',
            Phase::Hibernate => 'h',
        })
        .collect();
    println!("lambda=1:   {strip}");

    // doubling lambda doubles the hibernate span
    let lazy = PhaseClock::new(AHConfig::new(8, 8, 2.0, 100)?);
    let strip: String = (100..132)
        .map(|t| match lazy.phase_at(t).unwrap() {
            Phase::Awake => 'A',
            Phase::Hibernate => 'h',
        })
        .collect();
    println!("lambda=2:   {strip}");

    // lambda=0 never hibernates
    let eager = PhaseClock::new(AHConfig::new(8, 8, 0.0, 100)?);
    assert!((100..200).all(|t| eager.phase_at(t).unwrap() == Phase::Awake));
    println!("lambda=0:   always awake");

    // buffer resets fire on the first step of each hibernate phase
    let starts: Vec<usize> = (100..150)
        .filter(|&t| clock.phase_at(t).is_ok() && clock.is_hibernate_start(t).unwrap())
        .collect();
    println!("hibernate starts (lambda=1): {starts:?}");

    // weekly hourly data: a full cycle spans two weeks
    let weekly = PhaseClock::new(AHConfig::new(168, 168, 1.0, 0)?);
    println!(
        "hourly data: awake {} steps, hibernate {} steps, cycle {}",
        weekly.config().awake_len,
        weekly.config().hibernate_len(),
        weekly.config().cycle_len()
    );
    Ok(())
}
