//! Optimal waist and error against array size, compared with the leading
//! large-array estimate (ln N_a)^2 / (4 N_a^2).
//!
//! ```text
//! cargo run --release --example scaling -- [N ...]
//! ```

use arraymem::studies::{scaling_study, StudySettings};

fn main() -> arraymem::Result<()> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if sizes.is_empty() {
        sizes = vec![4, 6, 8, 10, 14];
    }
    let study = scaling_study(&sizes, 0.6, &StudySettings::default())?;
    println!("N    w0       error        estimate");
    for p in &study.points {
        println!("{:<4} {:<8.4} {:<12.4e} {:.4e}", p.n, p.w0, p.error, p.leading_term);
    }
    if study.points.len() > 1 {
        let fit = study.exponent()?;
        println!("log-log exponent in N_a: {:.3}", fit.parameter("exponent").unwrap_or(f64::NAN));
    }
    Ok(())
}
