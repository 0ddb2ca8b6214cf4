//! Efficiency loss of a 10x10 array under Gaussian position disorder, with the
//! perfect array's optimal spin wave and waist kept fixed.
//!
//! ```text
//! cargo run --release --example disorder -- [samples]
//! ```

use arraymem::studies::{position_disorder_study, StudySettings};

fn main() -> arraymem::Result<()> {
    let samples = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let d = 0.6;
    let sigmas: Vec<f64> = [0.01, 0.02, 0.03, 0.05, 0.07, 0.1].iter().map(|f| f * d).collect();
    let study = position_disorder_study(&[10], d, &sigmas, samples, 7, &StudySettings::default())?;
    println!("sigma/d   eta - eta_dis   std error");
    for p in &study.points {
        println!("{:<9} {:<15.4e} {:.2e}", p.sigma / d, p.mean_loss, p.std_error);
    }
    let fit = study.loss_exponent(10, sigmas[0], sigmas[sigmas.len() - 1])?;
    let exponent = &fit.parameters[0];
    println!("loss ~ sigma^{:.3} (+- {:.3})", exponent.value, exponent.std_error);
    Ok(())
}
