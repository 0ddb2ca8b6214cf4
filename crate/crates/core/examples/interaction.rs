//! Builds the dipole-dipole interaction matrix of a small array, prints a
//! corner of it and writes the binary dump.
//!
//! ```text
//! cargo run --example interaction -- [N] [d] [out.bin]
//! ```

use std::fs::File;
use std::io::BufWriter;

use arraymem::geometry::build_square_array;
use arraymem::greens::{interaction_matrix, Model};

fn main() -> arraymem::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let d = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.6);

    let m = interaction_matrix(&build_square_array(n, d)?, Model::TwoLevel)?;
    let show = m.size().min(4);
    println!("M for a {n}x{n} array at d = {d} (top-left {show}x{show}):");
    for i in 0..show {
        let row: Vec<String> = (0..show)
            .map(|j| {
                let z = m.entries()[(i, j)];
                format!("{:+.4}{:+.4}i", z.re, z.im)
            })
            .collect();
        println!("  {}", row.join("  "));
    }
    if let Some(path) = args.get(2) {
        m.write_binary(BufWriter::new(File::create(path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
