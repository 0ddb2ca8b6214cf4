//! Checks the closed-form projection of a dipole's radiation onto the
//! detection mode against a direct overlap integral over a transverse plane.
//!
//! ```text
//! cargo run --release --example projection -- [w0] [plane_z]
//! ```

use arraymem::detection::{validate_projection, DetectionMode};

fn main() -> arraymem::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let w0 = args.first().copied().unwrap_or(2.0);
    let plane = args.get(1).copied().unwrap_or(5.0);
    let mode = DetectionMode::new(w0)?;
    let cases = [
        ("x dipole at focus", [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
        ("x dipole off axis", [0.8, -0.6, 0.0], [1.0, 0.0, 0.0]),
        ("z dipole off axis", [1.0, 0.4, 0.2], [0.0, 0.0, 1.0]),
        ("y dipole at focus", [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        ("x dipole at 5 w0", [5.0 * w0, 0.0, 0.0], [1.0, 0.0, 0.0]),
    ];
    for (label, r, p) in cases {
        let check = validate_projection(&mode, &r, &p, plane)?;
        println!(
            "{label:<18} closed form {:+.6e}{:+.6e}i   abs diff {:.2e}   rel diff {:.2e}",
            check.closed_form.re, check.closed_form.im, check.absolute, check.relative
        );
    }
    Ok(())
}
