use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    exit_code: u8,
    params: &'a Value,
}

/// Writes `manifest.json` with every effective parameter of the run.
pub fn write(dir: &Path, subcommand: &str, seed: u64, params: &Value, exit_code: u8) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let m = Manifest {
        tool: "tiedheads",
        version: tiedheads::VERSION,
        subcommand,
        seed,
        exit_code,
        params,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    fs::write(dir.join("manifest.json"), text)
}
