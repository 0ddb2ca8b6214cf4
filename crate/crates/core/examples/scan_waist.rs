//! Retrieval error against beam waist, with the two-term error model fitted
//! in the regime where clipping is negligible.
//!
//! ```text
//! cargo run --release --example scan_waist -- [N] [w0_min] [w0_max] [points]
//! ```

use arraymem::studies::{fit_error_model, power_law_slope, scan_waist, FitWindow, StudySettings};

fn main() -> arraymem::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(10.0) as usize;
    let lo = args.get(1).copied().unwrap_or(0.8);
    let hi = args.get(2).copied().unwrap_or(4.0);
    let count = args.get(3).copied().unwrap_or(17.0) as usize;
    let waists: Vec<f64> = (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect();

    let scan = scan_waist(n, 0.6, &waists, &StudySettings::default())?;
    println!("w0      error        clipping term");
    for p in &scan.points {
        println!("{:<7.3} {:<12.4e} {:.4e}", p.w0, p.error, p.clipping);
    }
    let fit = fit_error_model(&scan, FitWindow::default())?;
    println!("C = {:.4e} from {} points", fit.parameters[0].value, fit.points);
    let slope = power_law_slope(&scan, FitWindow::default())?;
    println!("log-log slope = {:.3}", slope.parameters[0].value);
    Ok(())
}
