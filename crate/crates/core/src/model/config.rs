//! TOML config format for model specs.
//!
//! The schema mirrors the declarative model: a `compartments` list, repeated
//! `[[markov]]` and `[[delays]]` tables referencing compartments by name
//! (with the keywords `external` and `sink` for the system boundary), an
//! `[initial]` table of counts, the `horizon`, and an optional explicit
//! `grid`. Parsing and serializing round-trip a spec exactly.
//!
//! ```toml
//! compartments = ["S", "I"]
//! horizon = 30.0
//!
//! [initial]
//! S = 95
//! I = 5
//!
//! [[markov]]
//! source = "S"
//! target = "I"
//! kind = "mass_action"
//! coefficient = 0.02
//! operands = ["S", "I"]
//!
//! [[delays]]
//! source = "I"
//! target = "S"
//! mu = 1.0
//! tau = 0.2
//! ```

use super::{
    default_grid, CompartmentId, DelayProcess, MarkovianProcess, ModelError, ModelSpec, RateLaw,
    Source, Target, DEFAULT_GRID_POINTS,
};
use crate::dexp::DexpParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Serialize, Deserialize)]
struct ModelConfig {
    compartments: Vec<String>,
    horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<f64>>,
    initial: BTreeMap<String, u64>,
    #[serde(default)]
    markov: Vec<MarkovConfig>,
    #[serde(default)]
    delays: Vec<DelayConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkovConfig {
    source: String,
    target: String,
    kind: RateKind,
    coefficient: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    operands: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RateKind {
    ConstantInflux,
    PerCapita,
    MassAction,
    PopulationBirth,
}

#[derive(Debug, Serialize, Deserialize)]
struct DelayConfig {
    source: String,
    target: String,
    mu: f64,
    tau: f64,
}

/// Parse a spec from TOML text.
pub fn from_toml_str(text: &str) -> Result<ModelSpec, ModelError> {
    let cfg: ModelConfig = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
    let names = cfg.compartments;
    let lookup = |name: &str| -> Result<usize, ModelError> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ModelError::UnknownName(name.to_string()))
    };
    let source = |name: &str| -> Result<Source, ModelError> {
        if name == "external" {
            Ok(Source::External)
        } else {
            Ok(Source::Compartment(lookup(name)?))
        }
    };
    let target = |name: &str| -> Result<Target, ModelError> {
        if name == "sink" {
            Ok(Target::Sink)
        } else {
            Ok(Target::Compartment(lookup(name)?))
        }
    };

    let mut initial_counts = vec![0u64; names.len()];
    for (name, count) in &cfg.initial {
        initial_counts[lookup(name)?] = *count;
    }

    let mut markov = Vec::with_capacity(cfg.markov.len());
    for m in &cfg.markov {
        let ops: Vec<usize> = m
            .operands
            .iter()
            .map(|n| lookup(n))
            .collect::<Result<_, _>>()?;
        let expect = |expected: &'static str, ok: bool, kind: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::OperandCount { kind, expected, got: ops.len() })
            }
        };
        let law = match m.kind {
            RateKind::ConstantInflux => {
                expect("0", ops.is_empty(), "constant_influx")?;
                RateLaw::ConstantInflux { rate: m.coefficient }
            }
            RateKind::PerCapita => {
                expect("1", ops.len() == 1, "per_capita")?;
                RateLaw::PerCapita { coefficient: m.coefficient, of: ops[0] }
            }
            RateKind::MassAction => {
                expect("2", ops.len() == 2, "mass_action")?;
                RateLaw::MassAction { coefficient: m.coefficient, pair: (ops[0], ops[1]) }
            }
            RateKind::PopulationBirth => {
                expect("1 or more", !ops.is_empty(), "population_birth")?;
                RateLaw::PopulationBirth { coefficient: m.coefficient, over: ops }
            }
        };
        markov.push(MarkovianProcess {
            source: source(&m.source)?,
            target: target(&m.target)?,
            law,
        });
    }

    let mut delays = Vec::with_capacity(cfg.delays.len());
    for d in &cfg.delays {
        delays.push(DelayProcess {
            source: lookup(&d.source)?,
            target: target(&d.target)?,
            params: DexpParams::new(d.mu, d.tau)?,
        });
    }

    let record_grid = cfg
        .grid
        .unwrap_or_else(|| default_grid(cfg.horizon, DEFAULT_GRID_POINTS));

    Ok(ModelSpec {
        compartments: names
            .into_iter()
            .enumerate()
            .map(|(index, name)| CompartmentId { index, name })
            .collect(),
        markov,
        delays,
        initial_counts,
        horizon: cfg.horizon,
        record_grid,
    })
}

/// Serialize a spec to TOML text.
pub fn to_toml_string(spec: &ModelSpec) -> Result<String, ModelError> {
    let name_of = |idx: usize| spec.compartments[idx].name.clone();
    let source_name = |s: Source| match s {
        Source::External => "external".to_string(),
        Source::Compartment(i) => name_of(i),
    };
    let target_name = |t: Target| match t {
        Target::Sink => "sink".to_string(),
        Target::Compartment(i) => name_of(i),
    };
    let cfg = ModelConfig {
        compartments: spec.compartments.iter().map(|c| c.name.clone()).collect(),
        horizon: spec.horizon,
        grid: Some(spec.record_grid.clone()),
        initial: spec
            .compartments
            .iter()
            .map(|c| (c.name.clone(), spec.initial_counts[c.index]))
            .collect(),
        markov: spec
            .markov
            .iter()
            .map(|m| {
                let (kind, operands) = match &m.law {
                    RateLaw::ConstantInflux { .. } => (RateKind::ConstantInflux, vec![]),
                    RateLaw::PerCapita { of, .. } => (RateKind::PerCapita, vec![name_of(*of)]),
                    RateLaw::MassAction { pair, .. } => {
                        (RateKind::MassAction, vec![name_of(pair.0), name_of(pair.1)])
                    }
                    RateLaw::PopulationBirth { over, .. } => (
                        RateKind::PopulationBirth,
                        over.iter().map(|&j| name_of(j)).collect(),
                    ),
                };
                MarkovConfig {
                    source: source_name(m.source),
                    target: target_name(m.target),
                    kind,
                    coefficient: m.law.coefficient(),
                    operands,
                }
            })
            .collect(),
        delays: spec
            .delays
            .iter()
            .map(|d| DelayConfig {
                source: name_of(d.source),
                target: target_name(d.target),
                mu: d.params.mu(),
                tau: d.params.tau(),
            })
            .collect(),
    };
    toml::to_string(&cfg).map_err(|e| ModelError::Config(e.to_string()))
}
