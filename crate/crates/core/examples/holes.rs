//! Random holes in a 10x10 array: relative efficiency loss against the share
//! of mode intensity that sat on the missing atoms.
//!
//! ```text
//! cargo run --release --example holes -- [samples] [max_holes]
//! ```

use arraymem::studies::{hole_study, StudySettings};

fn main() -> arraymem::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let samples = args.first().copied().unwrap_or(20);
    let max_holes = args.get(1).copied().unwrap_or(20);
    let counts: Vec<usize> = (1..=max_holes).collect();

    let study = hole_study(10, 0.6, 1.5, &counts, samples, 2024, &StudySettings::default())?;
    println!("perfect array: eta = {:.6}", study.eta);
    for h in [1, max_holes / 2, max_holes] {
        let chosen: Vec<_> = study.samples.iter().filter(|s| s.holes == h).collect();
        let mean = chosen.iter().map(|s| s.relative_loss).sum::<f64>() / chosen.len() as f64;
        println!("{h:>3} holes: mean relative loss {mean:.4e}");
    }
    let worst = study
        .samples
        .iter()
        .map(|s| s.eta - study.eta)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("largest eta_def - eta over all samples: {worst:.3e}");
    let alpha = &study.alpha.parameters[0];
    println!("alpha = {:.4} +- {:.4} ({} configurations)", alpha.value, alpha.std_error, study.alpha.points);
    Ok(())
}
