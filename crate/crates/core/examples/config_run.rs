//! Drives a study from a TOML configuration, the same way the command-line
//! tool does, and lists the artifacts it wrote.
//!
//! ```text
//! cargo run --release --example config_run -- [config.toml]
//! ```

use arraymem::config::RunConfig;
use arraymem::run::run;

const DEMO: &str = r#"
command = "scan-waist"
output = "results/example"

[geometry]
N = 6
d = 0.6

[study]
w0_list = [0.8, 1.0, 1.2, 1.5, 2.0]
"#;

fn main() -> arraymem::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(Some(path.as_ref()), &[])?,
        None => RunConfig::from_toml(DEMO, &[])?,
    };
    print!("{}", config.to_toml());
    let report = run(&config)?;
    println!("{}", report.summary);
    for f in &report.files {
        println!("  {}", f.display());
    }
    Ok(())
}
