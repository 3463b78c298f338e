//! Flat `key = value` experiment configuration.
//!
//! Blank lines and everything after `#` are ignored. Besides the
//! per-experiment parameters listed in [`Experiment::params`], two keys are
//! always accepted: `experiment` (must match the experiment being run) and
//! `seed`. Unknown or repeated keys are errors, and every value is checked
//! against its documented range.
//!
//! ```text
//! # bw-scaling.conf
//! seed = 7
//! etas = 0.25, 0.125, 0.0625, 0.03125
//! steps_per_eta = 400
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown experiment '{0}' (expected one of: {list})", list = Experiment::ALL.map(|e| e.name()).join(", "))]
    UnknownExperiment(String),

    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key '{key}' for experiment {experiment}")]
    UnknownKey { line: usize, key: String, experiment: Experiment },

    #[error("line {line}: key '{key}' given twice")]
    Duplicate { line: usize, key: String },

    #[error("config file is for experiment '{found}', not '{expected}'")]
    ExperimentMismatch { expected: Experiment, found: String },

    #[error("{key}: {message}")]
    BadValue { key: String, message: String },
}

/// The runnable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    BwScaling,
    BwRotation,
    QuarticStep,
    GridFlow,
    ParticleSweep,
    RiemannianOrder,
    VariationChecks,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::BwScaling,
        Self::BwRotation,
        Self::QuarticStep,
        Self::GridFlow,
        Self::ParticleSweep,
        Self::RiemannianOrder,
        Self::VariationChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BwScaling => "bw-scaling",
            Self::BwRotation => "bw-rotation",
            Self::QuarticStep => "quartic-step",
            Self::GridFlow => "grid-flow",
            Self::ParticleSweep => "particle-sweep",
            Self::RiemannianOrder => "riemannian-order",
            Self::VariationChecks => "variation-checks",
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            Self::BwScaling => BW_SCALING,
            Self::BwRotation => BW_ROTATION,
            Self::QuarticStep => QUARTIC_STEP,
            Self::GridFlow => GRID_FLOW,
            Self::ParticleSweep => PARTICLE_SWEEP,
            Self::RiemannianOrder => RIEMANNIAN_ORDER,
            Self::VariationChecks => VARIATION_CHECKS,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// Accepted values of a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    /// Real in `[min, max]`, or `(min, max]` when `open_min`.
    Float { min: f64, max: f64, open_min: bool },
    Int { min: u64, max: u64 },
    /// Comma-separated reals, each in `[min, max]` (`(min, max]` when
    /// `open_min`), with a length range; `descending` requires strict
    /// decrease.
    FloatList { min: f64, max: f64, open_min: bool, min_len: usize, max_len: usize, descending: bool },
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Float(f64),
    Int(u64),
    List(Vec<f64>),
    Choice(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Float(v) => write!(f, "{v}"),
            Self::Int(v) => write!(f, "{v}"),
            Self::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join(", "))
            }
            Self::Choice(s) => f.write_str(s),
        }
    }
}

fn in_range(v: f64, min: f64, max: f64, open_min: bool) -> bool {
    v.is_finite() && v <= max && if open_min { v > min } else { v >= min }
}

fn range_text(min: f64, max: f64, open_min: bool) -> String {
    format!("{}{min}, {max}]", if open_min { "(" } else { "[" })
}

impl ParamSpec {
    pub fn parse(&self, raw: &str) -> Result<ParamValue, ConfigError> {
        let bad = |message: String| ConfigError::BadValue { key: self.key.to_string(), message };
        let raw = raw.trim();
        match self.kind {
            Kind::Float { min, max, open_min } => {
                let v: f64 = raw.parse().map_err(|_| bad(format!("'{raw}' is not a number")))?;
                if !in_range(v, min, max, open_min) {
                    return Err(bad(format!("{v} outside {}", range_text(min, max, open_min))));
                }
                Ok(ParamValue::Float(v))
            }
            Kind::Int { min, max } => {
                let v: u64 = raw.parse().map_err(|_| bad(format!("'{raw}' is not a nonnegative integer")))?;
                if v < min || v > max {
                    return Err(bad(format!("{v} outside [{min}, {max}]")));
                }
                Ok(ParamValue::Int(v))
            }
            Kind::FloatList { min, max, open_min, min_len, max_len, descending } => {
                let items: Vec<&str> = if raw.is_empty() { Vec::new() } else { raw.split(',').map(str::trim).collect() };
                if items.len() < min_len || items.len() > max_len {
                    return Err(bad(format!("expected {min_len} to {max_len} values, got {}", items.len())));
                }
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    let v: f64 = item.parse().map_err(|_| bad(format!("'{item}' is not a number")))?;
                    if !in_range(v, min, max, open_min) {
                        return Err(bad(format!("{v} outside {}", range_text(min, max, open_min))));
                    }
                    out.push(v);
                }
                if descending && out.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(bad("values must be strictly descending".into()));
                }
                Ok(ParamValue::List(out))
            }
            Kind::Choice(options) => {
                if options.contains(&raw) {
                    Ok(ParamValue::Choice(raw.to_string()))
                } else {
                    Err(bad(format!("'{raw}' is not one of {}", options.join(", "))))
                }
            }
        }
    }
}

/// A fully resolved configuration: defaults overlaid with overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    values: BTreeMap<&'static str, ParamValue>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let values = experiment
            .params()
            .iter()
            .map(|p| (p.key, p.parse(p.default).expect("built-in defaults are valid")))
            .collect();
        Self { experiment, seed: 0, values }
    }

    /// Parses a config file for `experiment`.
    pub fn parse(experiment: Experiment, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(experiment);
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
            cfg.set_at(key, value.trim(), Some(line))?;
        }
        Ok(cfg)
    }

    /// Applies a single override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(key, value, None)
    }

    fn set_at(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        match key {
            "experiment" => {
                if value != self.experiment.name() {
                    return Err(ConfigError::ExperimentMismatch { expected: self.experiment, found: value.to_string() });
                }
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| ConfigError::BadValue {
                    key: "seed".into(),
                    message: format!("'{value}' is not an unsigned 64-bit integer"),
                })?;
            }
            _ => {
                let Some(spec) = self.experiment.params().iter().find(|p| p.key == key) else {
                    return Err(ConfigError::UnknownKey {
                        line: line.unwrap_or(0),
                        key: key.to_string(),
                        experiment: self.experiment,
                    });
                };
                self.values.insert(spec.key, spec.parse(value)?);
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &ParamValue {
        self.values.get(key).unwrap_or_else(|| panic!("{} has no parameter '{key}'", self.experiment))
    }

    pub fn f64(&self, key: &str) -> f64 {
        match self.get(key) {
            ParamValue::Float(v) => *v,
            other => panic!("parameter '{key}' is not a float: {other:?}"),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        match self.get(key) {
            ParamValue::Int(v) => *v as usize,
            other => panic!("parameter '{key}' is not an integer: {other:?}"),
        }
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match self.get(key) {
            ParamValue::List(v) => v,
            other => panic!("parameter '{key}' is not a list: {other:?}"),
        }
    }

    pub fn choice(&self, key: &str) -> &str {
        match self.get(key) {
            ParamValue::Choice(v) => v,
            other => panic!("parameter '{key}' is not a choice: {other:?}"),
        }
    }

    /// The resolved configuration in the file format, parameters in
    /// declaration order.
    pub fn echo(&self) -> String {
        let mut out = format!("experiment = {}\nseed = {}\n", self.experiment, self.seed);
        for p in self.experiment.params() {
            out.push_str(&format!("{} = {}\n", p.key, self.get(p.key)));
        }
        out
    }
}

const fn float(key: &'static str, min: f64, max: f64, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind: Kind::Float { min, max, open_min: false }, default, help }
}

const fn pos(key: &'static str, max: f64, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind: Kind::Float { min: 0.0, max, open_min: true }, default, help }
}

const fn int(key: &'static str, min: u64, max: u64, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind: Kind::Int { min, max }, default, help }
}

const fn eta_list(key: &'static str, min_len: usize, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec {
        key,
        kind: Kind::FloatList { min: 0.0, max: 10.0, open_min: true, min_len, max_len: 64, descending: true },
        default,
        help,
    }
}

const DRIFT: ParamSpec = ParamSpec {
    key: "drift_spectrum",
    kind: Kind::FloatList { min: -1e3, max: -1e-6, open_min: false, min_len: 1, max_len: 16, descending: false },
    default: "-0.2, -0.6, -1.2",
    help: "eigenvalues of the drift A (its dimension is the list length)",
};

const BW_SCALING: &[ParamSpec] = &[
    eta_list("etas", 3, "0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125", "step sizes, descending"),
    int("steps_per_eta", 1, 1_000_000, "200", "RK4 steps over [0, eta]"),
    pos("beta", 1e6, "1", "inverse temperature"),
    DRIFT,
    pos("cov_jitter", 1e3, "0.5", "epsilon in P0 = M M^T + epsilon I"),
];

const BW_ROTATION: &[ParamSpec] = &[
    int("instances", 1, 10_000, "10", "random rotations / instances"),
    pos("beta", 1e6, "1", "inverse temperature"),
    DRIFT,
    pos("cov_jitter", 1e3, "0.5", "epsilon in P0 = M M^T + epsilon I"),
    pos("richardson_eta", 0.1, "0.01", "largest of the three Richardson step sizes (then /2, /4)"),
];

const QUARTIC_STEP: &[ParamSpec] = &[
    pos("h", 10.0, "1", "explicit step size"),
    ParamSpec {
        key: "etas",
        kind: Kind::FloatList { min: 0.0, max: 100.0, open_min: false, min_len: 1, max_len: 64, descending: false },
        default: "0, 0.1, 0.2, 0.29, 0.31, 0.4, 0.5",
        help: "correction strengths to scan",
    },
    pos("threshold_offset", 0.01, "1e-9", "monotonicity is also probed at 0.3h -/+ this offset"),
    int("nodes_in", 9, 1 << 20, "2048", "nodes of the N(0,1) input density"),
    pos("half_width_in", 100.0, "8", "input domain [-w, w]"),
    int("nodes_out", 9, 1 << 20, "16384", "nodes of the output grid"),
    pos("half_width_out", 100.0, "4", "output domain [-w, w]"),
    pos("jump_ratio", 1e6, "5", "adjacent-node ratio that counts as a jump"),
    pos("jump_window", 10.0, "0.2", "half-width of the jump search window"),
    int("monotone_samples", 1000, 10_000_000, "20001", "samples for the monotonicity check"),
    pos("monotone_half_width", 100.0, "10", "monotonicity is checked on [-w, w]"),
];

const GRID_FLOW: &[ParamSpec] = &[
    int("nodes", 9, 1 << 16, "512", "nodes of the KL-flow grid"),
    pos("half_width", 50.0, "4", "KL-flow domain [-w, w]"),
    pos("beta", 1e6, "1", "inverse temperature of the quartic target"),
    pos("t_end", 100.0, "1", "KL-flow horizon"),
    pos("courant", 0.5, "0.4", "target Courant number used to pick the step count"),
    pos("window_start", 100.0, "0.05", "start of the dissipation window"),
    pos("window_end", 100.0, "0.5", "end of the dissipation window"),
    pos("dissipation_tol", 1.0, "0.1", "relative tolerance of dJ/dt = -|dJ|^2"),
    int("record_every", 1, 1 << 30, "50", "steps between rows of the KL trajectory CSV"),
    pos("h", 1.0, "0.1", "time of the quartic potential step (eta = h)"),
    int("step_nodes", 9, 1 << 16, "1024", "nodes of the quartic-step grid"),
    pos("step_half_width", 50.0, "3", "quartic-step domain [-w, w]"),
];

const PARTICLE_SWEEP: &[ParamSpec] = &[
    int("particles", 16, 10_000_000, "4000", "ensemble size"),
    int("steps", 1, 10_000_000, "2000", "explicit steps"),
    pos("h", 1.0, "0.002", "step size"),
    pos("beta", 1e6, "1", "inverse temperature"),
    ParamSpec {
        key: "etas",
        kind: Kind::FloatList { min: 0.0, max: 1.0, open_min: false, min_len: 1, max_len: 32, descending: false },
        default: "0, 1e-6, 1e-5, 1e-4",
        help: "correction strengths; 0 is the vanilla baseline",
    },
    int("seeds", 1, 100_000, "100", "independent initial ensembles per eta"),
    pos("stencil_fraction", 10.0, "0.25", "score stencil width in bandwidths"),
    int("bandwidth_refresh", 1, 1_000_000, "50", "steps between bandwidth updates"),
    int("kl_bins", 64, 1 << 20, "512", "grid nodes of the KL estimate"),
    pos("kl_half_width", 100.0, "5", "KL grid domain [-w, w]"),
];

const RIEMANNIAN_ORDER: &[ParamSpec] = &[
    ParamSpec {
        key: "manifold",
        kind: Kind::Choice(&["euclidean", "sphere", "both"]),
        default: "both",
        help: "1D quadratic on R, or <x,e_z> + a<x,e_x>^2 on S^2",
    },
    ParamSpec {
        key: "scheme",
        kind: Kind::Choice(&["forward", "backward", "both"]),
        default: "both",
        help: "explicit or proximal gradient descent",
    },
    eta_list("etas", 3, "0.125, 0.0625, 0.03125, 0.015625, 0.0078125", "step sizes, descending"),
    pos("t_end", 100.0, "1", "horizon T"),
    int("substeps", 1, 100_000, "16", "RK4 steps per eta for the reference flows"),
    float("sphere_a", -10.0, 10.0, "0.3", "coefficient a of the sphere objective"),
    ParamSpec {
        key: "sphere_x0",
        kind: Kind::FloatList { min: -1e3, max: 1e3, open_min: false, min_len: 3, max_len: 3, descending: false },
        default: "0.6, -0.3, 0.74",
        help: "starting point on S^2 (normalized)",
    },
    float("euclidean_x0", -1e3, 1e3, "1", "starting point of the 1D quadratic"),
];

const VARIATION_CHECKS: &[ParamSpec] = &[
    int("nodes", 9, 1 << 16, "4096", "nodes on [-w, w] for the functional-derivative tests"),
    pos("half_width", 50.0, "8", "domain [-w, w]"),
    int("interaction_nodes", 9, 8192, "1024", "nodes for the interaction energy"),
    pos("epsilon", 1e-2, "1e-5", "perturbation size"),
    pos("rel_tol", 1.0, "1e-4", "relative tolerance of the functional-derivative test"),
    int("fisher_nodes", 9, 1 << 20, "16001", "nodes on [-4, 4] for the Fisher first variation"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_has_valid_defaults() {
        for e in Experiment::ALL {
            let cfg = ExperimentConfig::defaults(e);
            assert_eq!(ExperimentConfig::parse(e, &cfg.echo()).unwrap(), cfg);
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!(matches!("nope".parse::<Experiment>(), Err(ConfigError::UnknownExperiment(_))));
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "# comment\n\nseed = 42  # trailing\nsteps_per_eta=50\netas = 0.5, 0.25 ,0.125\n";
        let cfg = ExperimentConfig::parse(Experiment::BwScaling, text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.usize("steps_per_eta"), 50);
        assert_eq!(cfg.list("etas"), &[0.5, 0.25, 0.125]);
        assert_eq!(cfg.f64("beta"), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let e = Experiment::RiemannianOrder;
        assert!(matches!(ExperimentConfig::parse(e, "etas ="), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "bogus = 1"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse(e, "t_end = 1\nt_end = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse(e, "just text"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse(e, "= 3"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "scheme = sideways"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "etas = 0.1, 0.2, 0.05"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "t_end = -1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "t_end = nan"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "substeps = 2.5"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse(e, "seed = -3"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(
            ExperimentConfig::parse(e, "experiment = bw-scaling"),
            Err(ConfigError::ExperimentMismatch { .. })
        ));
        assert!(ExperimentConfig::parse(e, "experiment = riemannian-order").is_ok());
    }
}
