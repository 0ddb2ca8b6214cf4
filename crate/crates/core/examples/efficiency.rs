//! Optimal retrieval efficiency of a square array into a Gaussian-like mode.
//!
//! ```text
//! cargo run --example efficiency -- [N] [d] [w0]
//! ```

use arraymem::detection::{Contraction, DetectionMode};
use arraymem::geometry::build_square_array;
use arraymem::greens::Model;
use arraymem::retrieval::max_efficiency;

fn main() -> arraymem::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(4.0) as usize;
    let d = args.get(1).copied().unwrap_or(0.6);
    let w0 = args.get(2).copied().unwrap_or(0.818);

    let array = build_square_array(n, d)?;
    let mode = DetectionMode::new(w0)?;
    let solution = max_efficiency(&array, Model::TwoLevel, &mode, Contraction::Full)?;
    println!("{n}x{n} array, d = {d}, w0 = {w0}");
    println!("eta   = {:.8}", solution.efficiency);
    println!("error = {:.4e}", solution.error());
    Ok(())
}
