#![no_main]

use jkoflow_core::harness::{Experiment, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

// Two selector bytes pick an experiment and one of its keys; the rest is the
// raw value handed to the typed parser.
fuzz_target!(|data: &[u8]| {
    let [e, k, rest @ ..] = data else { return };
    let Ok(raw) = std::str::from_utf8(rest) else { return };
    let experiment = Experiment::ALL[*e as usize % Experiment::ALL.len()];
    let params = experiment.params();
    let spec = &params[*k as usize % params.len()];
    let _ = spec.parse(raw);
    let mut cfg = ExperimentConfig::defaults(experiment);
    if cfg.set(spec.key, raw).is_ok() {
        ExperimentConfig::parse(experiment, &cfg.echo()).expect("accepted value must echo back");
    }
});
