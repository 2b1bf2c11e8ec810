//! Runs the bundled peakon-antipeakon scenario through the same pipeline as
//! the command-line tool and lists the files it writes.

use std::path::Path;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/peakon_antipeakon.toml");
    let out = tempfile::tempdir().expect("temporary directory");
    for command in ["simulate", "energy-report", "characteristics", "oracle-compare"] {
        let args = [
            "chlab",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            command,
        ];
        let code = chlab::cli::run(args);
        println!("{command}: exit code {code}");
    }
    let mut names: Vec<String> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    println!("wrote {}", names.join(", "));
}
