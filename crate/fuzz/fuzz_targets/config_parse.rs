#![no_main]

use jkoflow_core::harness::{Experiment, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

// First byte picks the experiment, the rest is the config text. Anything that
// parses must survive a round trip through its own echo.
fuzz_target!(|data: &[u8]| {
    let Some((&pick, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let experiment = Experiment::ALL[pick as usize % Experiment::ALL.len()];
    if let Ok(cfg) = ExperimentConfig::parse(experiment, text) {
        let again = ExperimentConfig::parse(experiment, &cfg.echo()).expect("echo must parse");
        assert_eq!(again.echo(), cfg.echo());
    }
});
