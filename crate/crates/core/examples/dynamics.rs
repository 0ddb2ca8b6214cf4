//! Time evolution after a pi-pulse: excited population and detected flux of
//! the optimal spin wave, written as CSV to stdout.
//!
//! ```text
//! cargo run --release --example dynamics -- [N] [w0] > trajectory.csv
//! ```

use std::io::stdout;

use arraymem::detection::{Contraction, DetectionMode};
use arraymem::dynamics::{evolve, ControlSchedule};
use arraymem::geometry::build_square_array;
use arraymem::greens::Model;
use arraymem::retrieval::RetrievalProblem;

fn main() -> arraymem::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(4.0) as usize;
    let w0 = args.get(1).copied().unwrap_or(0.818);

    let array = build_square_array(n, 0.6)?;
    let problem = RetrievalProblem::new(&array, Model::TwoLevel, &DetectionMode::new(w0)?, Contraction::Full)?;
    let (eta, wave) = problem.form.optimize()?;
    let m = arraymem::greens::interaction_matrix(&array, Model::TwoLevel)?;
    let traj = evolve(&m, &wave, &ControlSchedule::PiPulseAtZero, 10.0, 1000)?;
    eprintln!("eta = {eta:.8}, collected by t = 10: {:.8}", traj.detected_efficiency(&problem.samples, Contraction::Full));
    traj.write_csv(stdout().lock(), Some((&problem.samples, Contraction::Full)))
}
