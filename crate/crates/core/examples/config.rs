//! Prints the default and tiny experiment configurations as TOML and shows
//! how a bad key is reported.
//!
//! `cargo run --example config -- [tiny|default]`

use cmr_recon::config::ExperimentConfig;

fn main() -> cmr_recon::Result<()> {
    let cfg = match std::env::args().nth(1).as_deref() {
        Some("default") => ExperimentConfig::default(),
        _ => ExperimentConfig::tiny(),
    };
    cfg.validate()?;
    let text = cfg.to_toml()?;
    println!("{text}");
    assert_eq!(ExperimentConfig::from_toml(&text)?, cfg);

    let bad = "[train]\nlearning_rate = 0.1\n";
    match ExperimentConfig::from_toml(bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("# rejected: {e}"),
    }
    Ok(())
}
