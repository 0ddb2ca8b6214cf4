use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn arraymem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arraymem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn files_with(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    out
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn four_by_four_with_optimized_waist() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = arraymem(&["efficiency", "--N", "4", "--d", "0.6", "--optimize-waist", "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("eta ="), "{stdout}");

    let json = files_with(dir.path(), "json");
    assert_eq!(json.len(), 1);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json[0]).unwrap()).unwrap();
    let error = doc["summary"]["solution"]["error"].as_f64().expect("error field");
    assert!(error < 0.01, "error {error}");

    let csv = files_with(dir.path(), "csv");
    let text = fs::read_to_string(&csv[0]).unwrap();
    assert!(text.starts_with("# config: {"));
    let name = csv[0].file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("efficiency_4_0.6_"), "{name}");
}

#[test]
fn invalid_size_exits_with_config_status() {
    let run = arraymem(&["efficiency", "--N", "0"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("geometry.N"));
}

#[test]
fn unknown_key_and_type_mismatch_name_the_path() {
    let run = arraymem(&["efficiency", "--set", "mode.bogus=1"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("mode.bogus"));

    let run = arraymem(&["efficiency", "--set", "geometry.d=\"wide\""]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("geometry.d"));
}

#[test]
fn unknown_command_is_a_config_failure() {
    let run = arraymem(&["teleport"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "command = \"efficiency\"\noutput = {:?}\n[geometry]\nN = 5\nd = 0.6\n[mode]\nw0 = 0.9\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let run = arraymem(&["efficiency", "--config", cfg.to_str().unwrap(), "--N", "3"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let json = files_with(&out, "json");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json[0]).unwrap()).unwrap();
    assert_eq!(doc["config"]["geometry"]["N"], 3);
    assert_eq!(doc["config"]["mode"]["w0"], 0.9);
}

#[test]
fn monte_carlo_artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "holes", "--N", "5", "--w0", "1.0", "--samples", "4", "--seed", "7", "--set", "study.hole_counts=[1,2,3]",
        "--out", out,
    ];
    for _ in 0..2 {
        let run = arraymem(&args);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let csv = files_with(dir.path(), "csv");
    assert_eq!(csv.len(), 2);
    assert_eq!(fs::read(&csv[0]).unwrap(), fs::read(&csv[1]).unwrap());

    // The worker count only enters the header.
    let other = tempfile::tempdir().unwrap();
    let mut threaded = args.to_vec();
    let last = threaded.len() - 1;
    threaded[last] = other.path().to_str().unwrap();
    threaded.extend(["--workers", "3"]);
    assert!(arraymem(&threaded).status.success());
    let csv3 = files_with(other.path(), "csv");
    assert_eq!(body(&csv[0]), body(&csv3[0]));
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let run = arraymem(&["validate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
}
