//! Writes a small synthetic dataset and `config.json` into the given
//! directory (default `demo`).

use std::path::PathBuf;

use gazekit_cli::demo::{write_demo, DemoSpec};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    match write_demo(&dir, &DemoSpec::default()) {
        Ok(config) => println!("{}", config.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
