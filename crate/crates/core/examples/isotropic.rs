//! Two-level versus isotropic atoms: optimal error and waist for a few array
//! sizes.
//!
//! ```text
//! cargo run --release --example isotropic -- [N ...]
//! ```

use arraymem::studies::{isotropic_comparison, StudySettings};

fn main() -> arraymem::Result<()> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if sizes.is_empty() {
        sizes = vec![6, 10];
    }
    let cmp = isotropic_comparison(&sizes, 0.6, &StudySettings::default())?;
    println!("N    error (two-level)  error (isotropic)  increase  w0 (TL)  w0 (iso)");
    for p in &cmp.points {
        println!(
            "{:<4} {:<18.4e} {:<18.4e} {:<9.3} {:<8.4} {:.4}",
            p.n, p.error_two_level, p.error_isotropic, p.relative_increase, p.w0_two_level, p.w0_isotropic
        );
    }
    Ok(())
}
