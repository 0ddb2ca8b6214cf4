//! Collective eigenmodes of an array: the most sub- and superradiant decay
//! rates and the decomposition residuals.
//!
//! ```text
//! cargo run --release --example spectrum -- [N] [d] [two-level|isotropic]
//! ```

use arraymem::geometry::build_square_array;
use arraymem::greens::{interaction_matrix, Model};
use arraymem::spectral::eigendecompose;

fn main() -> arraymem::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().and_then(|a| a.parse().ok()).unwrap_or(6);
    let d = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.6);
    let model = match args.get(2).map(String::as_str) {
        Some("isotropic") => Model::Isotropic,
        _ => Model::TwoLevel,
    };

    let dec = eigendecompose(&interaction_matrix(&build_square_array(n, d)?, model)?)?;
    let lambda = dec.eigenvalues();
    println!("{} modes, sorted by decay rate", lambda.len());
    println!("  slowest: Gamma = {:.4e}, shift = {:+.4}", 2.0 * lambda[0].im, lambda[0].re);
    let last = lambda[lambda.len() - 1];
    println!("  fastest: Gamma = {:.4}, shift = {:+.4}", 2.0 * last.im, last.re);
    println!("{}", dec.diagnostics());
    Ok(())
}
