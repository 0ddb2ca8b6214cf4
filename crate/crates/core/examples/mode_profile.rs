//! Transverse profile of the detection mode in the array plane and its flux
//! normalization computed two ways.
//!
//! ```text
//! cargo run --release --example mode_profile -- [w0]
//! ```

use arraymem::detection::DetectionMode;

fn main() -> arraymem::Result<()> {
    let w0 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2.0);
    let mode = DetectionMode::new(w0)?;

    println!("x/w0    Re E_x        |E_x / E_x(0)|   exp(-x^2/w0^2)");
    let focus = mode.focus_value();
    for k in 0..=8 {
        let x = 0.25 * k as f64 * w0;
        let ex = mode.field(&[x, 0.0, 0.0])?[0];
        println!("{:<7.2} {:+.6e}  {:.6}         {:.6}", x / w0, ex.re, ex.norm() / focus, (-(x / w0).powi(2)).exp());
    }
    let norm = mode.norm()?;
    let flux = mode.flux_through_plane(3.0, 12.0 * w0)?;
    println!("k-space norm   {norm:.12e}");
    println!("flux at z = 3  {flux:.12e}  (relative gap {:.1e})", (flux - norm).abs() / norm);
    Ok(())
}
