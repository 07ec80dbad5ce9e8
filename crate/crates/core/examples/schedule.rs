//! Prints the noise schedule, the re-injection levels and the round count of
//! the default 4x setting.

use diffuseslide::schedule::InjectionPoint;
use diffuseslide::{Result, RunConfig};

fn main() -> Result<()> {
    let cfg = RunConfig::default();
    let s = cfg.schedule()?;
    println!(
        "{} steps, sigma in [{}, {}], rho {}",
        s.n_steps(),
        s.sigma_min(),
        s.sigma_max(),
        s.rho()
    );
    println!("{:>9} {:>14} {:>14}", "remaining", "sigma", "lift to here");
    for r in (1..=cfg.tau).rev() {
        println!("{r:>9} {:>14.6} {:>14.6}", s.level_at(r)?, s.reinjection_std(r)?);
    }
    let point = InjectionPoint::new(cfg.tau, cfg.delta, cfg.m_iters, cfg.steps)?;
    println!(
        "tau {} delta {} M {}: {} sliding-window rounds",
        point.tau,
        point.delta,
        point.m_iters,
        point.expected_rounds()
    );
    Ok(())
}
