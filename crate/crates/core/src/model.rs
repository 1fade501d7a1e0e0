//! Declarative description of delay compartment systems.
//!
//! A [`ModelSpec`] lists compartments, Markovian transfer processes with one
//! of four closed rate-law kinds, and per-compartment delayed removal
//! processes. The same spec drives both engines: the exact stochastic
//! simulation in [`crate::ssa`] and the deterministic delay-differential
//! system in [`crate::dde`]. State is empty before `t = 0`; the initial
//! counts enter as a burst at `t = 0`.
//!
//! [`preset_pk`] and [`preset_sis`] construct the two reference models: a
//! two-compartment drug absorption chain with delayed clearance, and an SIS
//! epidemic with delayed re-susceptibility.

pub mod config;

use crate::dexp::{DexpError, DexpParams};
use std::fmt;
use thiserror::Error;

/// Number of evenly spaced recording points when no grid is given.
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Names that cannot be used for compartments because the config format
/// gives them special meaning.
const RESERVED_NAMES: [&str; 2] = ["external", "sink"];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dexp(#[from] DexpError),
    #[error("unknown compartment name '{0}'")]
    UnknownName(String),
    #[error("{kind} law takes {expected} operand(s), got {got}")]
    OperandCount {
        kind: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("config error: {0}")]
    Config(String),
}

/// A named compartment with a dense index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompartmentId {
    pub index: usize,
    pub name: String,
}

/// Where a process takes particles from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Particles appear from outside the system (influx, births).
    External,
    /// Removal from a compartment, by index.
    Compartment(usize),
}

/// Where a process sends particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Particles leave the system.
    Sink,
    /// Transfer into a compartment, by index.
    Compartment(usize),
}

/// The closed vocabulary of Markovian rate laws.
///
/// Every rate depends only on the current counts, so rates are constant
/// between events and the deterministic builder can check the constant-rate
/// condition on delay compartments structurally.
#[derive(Clone, Debug, PartialEq)]
pub enum RateLaw {
    /// Constant rate (population per unit time).
    ConstantInflux { rate: f64 },
    /// `coefficient * X_of` (coefficient in 1/time).
    PerCapita { coefficient: f64, of: usize },
    /// `coefficient * X_a * X_b` (coefficient in 1/(time * population)).
    MassAction { coefficient: f64, pair: (usize, usize) },
    /// `coefficient * sum of X_j over a compartment subset` (1/time).
    PopulationBirth { coefficient: f64, over: Vec<usize> },
}

impl RateLaw {
    /// Total rate at the given integer state.
    pub fn propensity(&self, counts: &[u64]) -> f64 {
        match self {
            RateLaw::ConstantInflux { rate } => *rate,
            RateLaw::PerCapita { coefficient, of } => coefficient * counts[*of] as f64,
            RateLaw::MassAction { coefficient, pair } => {
                coefficient * counts[pair.0] as f64 * counts[pair.1] as f64
            }
            RateLaw::PopulationBirth { coefficient, over } => {
                coefficient * over.iter().map(|&j| counts[j] as f64).sum::<f64>()
            }
        }
    }

    /// The same rate evaluated on a real-valued state.
    pub fn rate(&self, state: &[f64]) -> f64 {
        match self {
            RateLaw::ConstantInflux { rate } => *rate,
            RateLaw::PerCapita { coefficient, of } => coefficient * state[*of],
            RateLaw::MassAction { coefficient, pair } => {
                coefficient * state[pair.0] * state[pair.1]
            }
            RateLaw::PopulationBirth { coefficient, over } => {
                coefficient * over.iter().map(|&j| state[j]).sum::<f64>()
            }
        }
    }

    pub fn coefficient(&self) -> f64 {
        match self {
            RateLaw::ConstantInflux { rate } => *rate,
            RateLaw::PerCapita { coefficient, .. } => *coefficient,
            RateLaw::MassAction { coefficient, .. } => *coefficient,
            RateLaw::PopulationBirth { coefficient, .. } => *coefficient,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            RateLaw::ConstantInflux { .. } => "constant_influx",
            RateLaw::PerCapita { .. } => "per_capita",
            RateLaw::MassAction { .. } => "mass_action",
            RateLaw::PopulationBirth { .. } => "population_birth",
        }
    }

    fn operands(&self) -> Vec<usize> {
        match self {
            RateLaw::ConstantInflux { .. } => vec![],
            RateLaw::PerCapita { of, .. } => vec![*of],
            RateLaw::MassAction { pair, .. } => vec![pair.0, pair.1],
            RateLaw::PopulationBirth { over, .. } => over.clone(),
        }
    }
}

/// A memoryless transfer channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovianProcess {
    pub source: Source,
    pub target: Target,
    pub law: RateLaw,
}

/// A delayed removal channel: each particle entering `source` draws a
/// delay-exponential waiting time on entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayProcess {
    pub source: usize,
    pub target: Target,
    pub params: DexpParams,
}

/// A complete simulable model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub compartments: Vec<CompartmentId>,
    pub markov: Vec<MarkovianProcess>,
    pub delays: Vec<DelayProcess>,
    pub initial_counts: Vec<u64>,
    pub horizon: f64,
    pub record_grid: Vec<f64>,
}

/// One validation finding: the violated rule and a human-readable detail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule, self.message)
    }
}

impl ModelSpec {
    /// A spec with the given compartments and an evenly spaced default grid.
    pub fn new(names: &[&str], initial_counts: &[u64], horizon: f64) -> ModelSpec {
        ModelSpec {
            compartments: names
                .iter()
                .enumerate()
                .map(|(index, name)| CompartmentId {
                    index,
                    name: (*name).to_string(),
                })
                .collect(),
            markov: Vec::new(),
            delays: Vec::new(),
            initial_counts: initial_counts.to_vec(),
            horizon,
            record_grid: default_grid(horizon, DEFAULT_GRID_POINTS),
        }
    }

    pub fn n_compartments(&self) -> usize {
        self.compartments.len()
    }

    pub fn compartment_index(&self, name: &str) -> Option<usize> {
        self.compartments.iter().position(|c| c.name == name)
    }

    /// Change the horizon, regenerating the default recording grid.
    pub fn with_horizon(mut self, horizon: f64) -> ModelSpec {
        self.horizon = horizon;
        self.record_grid = default_grid(horizon, DEFAULT_GRID_POINTS);
        self
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> ModelSpec {
        self.record_grid = grid;
        self
    }

    pub fn delay_for(&self, compartment: usize) -> Option<&DelayProcess> {
        self.delays.iter().find(|d| d.source == compartment)
    }

    /// Check every structural invariant; an empty list means the spec is
    /// ready for either engine.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.n_compartments();
        let mut push = |rule: &'static str, message: String| {
            out.push(Diagnostic { rule, message });
        };

        for (i, c) in self.compartments.iter().enumerate() {
            if c.index != i {
                push(
                    "compartment-indices-dense",
                    format!("compartment '{}' has index {} at position {i}", c.name, c.index),
                );
            }
            if RESERVED_NAMES.contains(&c.name.as_str()) {
                push(
                    "compartment-name-reserved",
                    format!("'{}' is a reserved name", c.name),
                );
            }
            if self.compartments[..i].iter().any(|o| o.name == c.name) {
                push(
                    "compartment-names-unique",
                    format!("duplicate compartment name '{}'", c.name),
                );
            }
        }

        if self.initial_counts.len() != n {
            push(
                "initial-counts-length",
                format!("{} initial counts for {} compartments", self.initial_counts.len(), n),
            );
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            push("horizon-positive", format!("horizon = {}", self.horizon));
        }
        if self.record_grid.is_empty() {
            push("grid-nonempty", "record grid is empty".to_string());
        }
        for w in self.record_grid.windows(2) {
            if !(w[1] > w[0]) {
                push(
                    "grid-strictly-increasing",
                    format!("grid points {} and {} out of order", w[0], w[1]),
                );
                break;
            }
        }
        if self.record_grid.first().is_some_and(|&t| t < 0.0) {
            push("grid-non-negative", "grid starts before t = 0".to_string());
        }

        let in_range = |idx: usize| idx < n;
        for (k, proc) in self.markov.iter().enumerate() {
            let name = format!("markov[{k}] ({})", proc.law.kind_name());
            if let Source::Compartment(s) = proc.source {
                if !in_range(s) {
                    push("process-endpoint-range", format!("{name}: source {s} out of range"));
                }
            }
            if let Target::Compartment(t) = proc.target {
                if !in_range(t) {
                    push("process-endpoint-range", format!("{name}: target {t} out of range"));
                }
            }
            for op in proc.law.operands() {
                if !in_range(op) {
                    push("process-endpoint-range", format!("{name}: operand {op} out of range"));
                }
            }
            let c = proc.law.coefficient();
            if !(c >= 0.0 && c.is_finite()) {
                push("coefficient-non-negative", format!("{name}: coefficient {c}"));
            }
            let external = proc.source == Source::External;
            let needs_external = matches!(
                proc.law,
                RateLaw::ConstantInflux { .. } | RateLaw::PopulationBirth { .. }
            );
            if external != needs_external {
                push(
                    "source-law-agreement",
                    format!(
                        "{name}: {} law requires {} source",
                        proc.law.kind_name(),
                        if needs_external { "an external" } else { "a compartment" }
                    ),
                );
            }
        }

        for (k, d) in self.delays.iter().enumerate() {
            let name = format!("delays[{k}]");
            if !in_range(d.source) {
                push("process-endpoint-range", format!("{name}: source {} out of range", d.source));
            }
            if let Target::Compartment(t) = d.target {
                if !in_range(t) {
                    push("process-endpoint-range", format!("{name}: target {t} out of range"));
                }
            }
            if self.delays[..k].iter().any(|o| o.source == d.source) {
                push(
                    "delay-unique-source",
                    format!("{name}: compartment {} already has a delay process", d.source),
                );
            }
            if !d.params.is_distribution_valid() {
                push(
                    "delay-distribution-valid",
                    format!(
                        "{name}: mu*tau = {} exceeds 1/e",
                        d.params.mu() * d.params.tau()
                    ),
                );
            }
        }

        out
    }
}

/// `points` evenly spaced times covering `[0, horizon]`.
pub fn default_grid(horizon: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|j| horizon * j as f64 / (n - 1) as f64)
        .collect()
}

/// Two-compartment drug model: transport `x` empties into target `A` at rate
/// `k`; clearance out of `A` is delayed with scale `mu` (= clearance rate
/// over volume) and delay `tau`. The dose `x0` enters `x` at `t = 0`.
pub fn preset_pk(k: f64, mu: f64, tau: f64, x0: u64) -> Result<ModelSpec, ModelError> {
    for (label, v) in [("k", k), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("{label} = {v} must be positive")));
        }
    }
    if x0 == 0 {
        return Err(ModelError::InvalidParameter("x0 must be positive".into()));
    }
    let params = DexpParams::new(mu, tau)?;
    if !params.is_distribution_valid() {
        return Err(DexpError::NotADistribution(mu * tau).into());
    }
    let mut spec = ModelSpec::new(&["x", "A"], &[x0, 0], 10.0);
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(0),
        target: Target::Compartment(1),
        law: RateLaw::PerCapita { coefficient: k, of: 0 },
    });
    spec.delays.push(DelayProcess {
        source: 1,
        target: Target::Sink,
        params,
    });
    Ok(spec)
}

/// SIS epidemic with delayed re-susceptibility: infection by mass action at
/// rate `lambda * S * I`, births into `S` proportional to the whole
/// population at rate `b`, deaths from both compartments at rate `d`, and
/// recovery `I -> S` through a delayed process with scale `gamma` and delay
/// `tau`.
pub fn preset_sis(
    b: f64,
    d: f64,
    lambda: f64,
    gamma: f64,
    tau: f64,
    s0: u64,
    i0: u64,
) -> Result<ModelSpec, ModelError> {
    for (label, v) in [("b", b), ("d", d), ("lambda", lambda)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "{label} = {v} must be non-negative"
            )));
        }
    }
    if s0 + i0 == 0 {
        return Err(ModelError::InvalidParameter("initial population is empty".into()));
    }
    let params = DexpParams::new(gamma, tau)?;
    if !params.is_distribution_valid() {
        return Err(DexpError::NotADistribution(gamma * tau).into());
    }
    let mut spec = ModelSpec::new(&["S", "I"], &[s0, i0], 30.0);
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(0),
        target: Target::Compartment(1),
        law: RateLaw::MassAction { coefficient: lambda, pair: (0, 1) },
    });
    spec.markov.push(MarkovianProcess {
        source: Source::External,
        target: Target::Compartment(0),
        law: RateLaw::PopulationBirth { coefficient: b, over: vec![0, 1] },
    });
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(0),
        target: Target::Sink,
        law: RateLaw::PerCapita { coefficient: d, of: 0 },
    });
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(1),
        target: Target::Sink,
        law: RateLaw::PerCapita { coefficient: d, of: 1 },
    });
    spec.delays.push(DelayProcess {
        source: 1,
        target: Target::Compartment(0),
        params,
    });
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pk_preset_is_valid() {
        let spec = preset_pk(1.0, 1.0, 0.2, 100).unwrap();
        assert!(spec.validate().is_empty());
        assert_eq!(spec.n_compartments(), 2);
        assert_eq!(spec.initial_counts, vec![100, 0]);
        // Degenerate no-delay variant.
        let spec = preset_pk(1.0, 1.0, 0.0, 100).unwrap();
        assert!(spec.validate().is_empty());
    }

    #[test]
    fn sis_preset_is_valid() {
        let spec = preset_sis(0.1, 0.1, 2.0 / 100.0, 1.0, 0.2, 95, 5).unwrap();
        assert!(spec.validate().is_empty());
        let spec = preset_sis(0.1, 0.1, 2.0 / 2000.0, 1.0, 0.35, 1900, 100).unwrap();
        assert!(spec.validate().is_empty());
    }

    #[test]
    fn presets_reject_bad_parameters() {
        assert!(preset_pk(0.0, 1.0, 0.2, 100).is_err());
        assert!(preset_pk(1.0, 1.0, 0.7, 100).is_err());
        assert!(preset_sis(0.1, 0.1, 0.02, 1.0, 0.7, 95, 5).is_err());
        assert!(preset_sis(-0.1, 0.1, 0.02, 1.0, 0.2, 95, 5).is_err());
    }

    #[test]
    fn duplicate_delay_is_diagnosed() {
        let mut spec = preset_pk(1.0, 1.0, 0.2, 100).unwrap();
        spec.delays.push(DelayProcess {
            source: 1,
            target: Target::Sink,
            params: DexpParams::new(2.0, 0.1).unwrap(),
        });
        let diags = spec.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "delay-unique-source");
    }

    #[test]
    fn invalid_delay_distribution_is_diagnosed() {
        let mut spec = preset_pk(1.0, 1.0, 0.2, 100).unwrap();
        spec.delays[0].params = DexpParams::new(1.0, 0.7).unwrap();
        let diags = spec.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "delay-distribution-valid");
    }

    #[test]
    fn law_source_agreement_is_checked() {
        let mut spec = preset_sis(0.1, 0.1, 0.02, 1.0, 0.2, 95, 5).unwrap();
        // Births must come from outside.
        spec.markov[1].source = Source::Compartment(0);
        assert!(spec
            .validate()
            .iter()
            .any(|d| d.rule == "source-law-agreement"));
    }

    #[test]
    fn endpoint_ranges_are_checked() {
        let mut spec = preset_pk(1.0, 1.0, 0.2, 100).unwrap();
        spec.markov[0].target = Target::Compartment(7);
        assert!(spec
            .validate()
            .iter()
            .any(|d| d.rule == "process-endpoint-range"));
    }

    #[test]
    fn default_grid_covers_the_horizon() {
        let g = default_grid(10.0, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
