//! Efficiency collected within a finite detection window after a pi-pulse,
//! for the optimal spin wave of a 10x10 array.
//!
//! ```text
//! cargo run --release --example finite_time -- [N]
//! ```

use arraymem::detection::sample_mode;
use arraymem::dynamics::eta_finite_time;
use arraymem::geometry::build_square_array;
use arraymem::greens::{interaction_matrix, Model};
use arraymem::spectral::eigendecompose;
use arraymem::studies::{optimal_waist, StudySettings};

fn main() -> arraymem::Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let d = 0.6;
    let settings = StudySettings::default();
    let opt = optimal_waist(n, d, &settings)?;
    println!("{n}x{n} array: optimal w0 = {:.4}, eta = {:.6}", opt.w0, opt.eta);

    let array = build_square_array(n, d)?;
    let spectrum = eigendecompose(&interaction_matrix(&array, Model::TwoLevel)?)?;
    let samples = sample_mode(&settings.mode(opt.w0)?, &array, Model::TwoLevel)?;
    println!("T_d     1 - eta(T_d)/eta");
    for t_d in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 1000.0] {
        let eta_t = eta_finite_time(&spectrum, &samples, &opt.spin_wave, t_d, settings.contraction)?;
        println!("{t_d:<7} {:.4e}", 1.0 - eta_t / opt.eta);
    }
    Ok(())
}
