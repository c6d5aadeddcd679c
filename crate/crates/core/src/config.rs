//! Shipped defaults and the experiment file format.
//!
//! The default membership bank places seven functions per input on a
//! uniform quarter-spaced grid (apexes at 0, ±1/4, ±1/2, ±3/4, plateau
//! trapezoids beyond ±3/4). Every breakpoint, slope reciprocal and rule
//! consequent is an exact dyadic, so the compiled constants are identical
//! for every tested `T`; the alternative of thirds-spaced apexes would tie
//! the inference error to `T` through the constant quantization.
//!
//! The default rule base is the antisymmetric PI-style table: zero-order
//! consequents `C = clamp(apex_l + apex_k, -15/16, +15/16)` with
//! `A = B = 0`. Both defaults can be replaced wholesale from config files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::inference::RuleRow;
use crate::membership::MfShape;
use crate::plant::{PlantParams, TrajectorySchedule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("rules file line {line}: expected `l,k,a,b,c`, got `{text}`")]
    RulesRow { line: usize, text: String },
}

/// Apex positions of the seven default membership functions.
pub const DEFAULT_CENTERS: [f64; 7] = [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75];

const DEFAULT_LABELS: [&str; 7] = ["LN", "MN", "SN", "ZZ", "SP", "MP", "LP"];

/// Consequent clamp bound for the default rule table. Exact in four
/// fractional bits, which keeps the rule base independent of `T`.
pub const DEFAULT_CONSEQUENT_CLAMP: f64 = 0.9375;

/// The default seven-function bank, duplicated for both inputs.
pub fn default_bank_shapes() -> Vec<Vec<MfShape>> {
    let one_input: Vec<MfShape> = (0..7)
        .map(|j| {
            let label = DEFAULT_LABELS[j].to_string();
            match j {
                0 => MfShape::RightTrapezoid {
                    label,
                    c: DEFAULT_CENTERS[0],
                    d: DEFAULT_CENTERS[1],
                },
                6 => MfShape::LeftTrapezoid {
                    label,
                    e: DEFAULT_CENTERS[5],
                    f: DEFAULT_CENTERS[6],
                },
                _ => MfShape::Triangle {
                    label,
                    e: DEFAULT_CENTERS[j - 1],
                    m: DEFAULT_CENTERS[j],
                    d: DEFAULT_CENTERS[j + 1],
                },
            }
        })
        .collect();
    vec![one_input.clone(), one_input]
}

/// The default 49-rule antisymmetric table.
pub fn default_rule_rows() -> Vec<RuleRow> {
    let mut rows = Vec::with_capacity(49);
    for (l, cl) in DEFAULT_CENTERS.iter().enumerate() {
        for (k, ck) in DEFAULT_CENTERS.iter().enumerate() {
            let c = (cl + ck).clamp(-DEFAULT_CONSEQUENT_CLAMP, DEFAULT_CONSEQUENT_CLAMP);
            rows.push(RuleRow {
                l,
                k,
                a: 0.0,
                b: 0.0,
                c,
            });
        }
    }
    rows
}

/// Parses the rule-base file format: one `l,k,a,b,c` row per rule,
/// `#` comments and a header row allowed.
pub fn parse_rules_csv(text: &str) -> Result<Vec<RuleRow>, ConfigError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("l")) {
            continue; // header
        }
        let err = || ConfigError::RulesRow {
            line: idx + 1,
            text: line.to_string(),
        };
        if fields.len() != 5 {
            return Err(err());
        }
        rows.push(RuleRow {
            l: fields[0].parse().map_err(|_| err())?,
            k: fields[1].parse().map_err(|_| err())?,
            a: fields[2].parse().map_err(|_| err())?,
            b: fields[3].parse().map_err(|_| err())?,
            c: fields[4].parse().map_err(|_| err())?,
        });
    }
    Ok(rows)
}

/// Renders rule rows in the same `l,k,a,b,c` file format.
pub fn rules_to_csv(rows: &[RuleRow]) -> String {
    let mut out = String::from("l,k,a,b,c\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.l, r.k, r.a, r.b, r.c));
    }
    out
}

/// Parameters of the experiment drivers (grid sizes, sweeps, durations).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Samples per axis of the input grid (the full grid is the square).
    pub grid_points: usize,
    /// Fractional widths swept by the error experiment.
    pub n_sweep: Vec<u8>,
    /// Constant widths swept by the error experiment.
    pub t_sweep: Vec<u8>,
    /// Fractional widths exercised by the manipulator experiment.
    pub robot_n_values: Vec<u8>,
    /// Simulated seconds of the manipulator experiment.
    pub duration_s: f64,
    /// Log one trajectory row every this many control ticks.
    pub log_every: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            grid_points: 100,
            n_sweep: vec![8, 10, 12, 14, 16],
            t_sweep: vec![4, 6, 8, 10],
            robot_n_values: vec![12, 14, 16],
            duration_s: 10.0,
            log_every: 100,
        }
    }
}

/// Top-level experiment configuration file (TOML). Every section is
/// optional and falls back to the shipped defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentFile {
    pub controller: ControllerConfig,
    pub experiment: ExperimentSettings,
    pub plant: PlantParams,
    pub schedule: TrajectorySchedule,
    /// Membership bank override; `functions` applies to both inputs,
    /// `input0`/`input1` set them individually.
    pub bank: Option<BankSection>,
    /// Inline rule rows.
    pub rules: Option<Vec<RuleRow>>,
    /// Path to a rule file (`l,k,a,b,c` rows), relative to the config file.
    pub rules_csv: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSection {
    pub functions: Option<Vec<MfShape>>,
    pub input0: Option<Vec<MfShape>>,
    pub input1: Option<Vec<MfShape>>,
}

impl ExperimentFile {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut file = Self::from_toml_str(&text)?;
        // resolve a relative rules path against the config location
        if let Some(rules_path) = &file.rules_csv {
            let resolved = path.parent().map_or_else(
                || Path::new(rules_path).to_path_buf(),
                |dir| dir.join(rules_path),
            );
            let text = std::fs::read_to_string(&resolved).map_err(|source| ConfigError::Io {
                path: resolved.display().to_string(),
                source,
            })?;
            file.rules = Some(parse_rules_csv(&text)?);
            file.rules_csv = None;
        }
        Ok(file)
    }

    /// The membership shapes this file selects (defaults when absent).
    pub fn bank_shapes(&self) -> Vec<Vec<MfShape>> {
        match &self.bank {
            None => default_bank_shapes(),
            Some(section) => {
                let default = default_bank_shapes();
                let shared = section.functions.clone();
                let input0 = section
                    .input0
                    .clone()
                    .or_else(|| shared.clone())
                    .unwrap_or_else(|| default[0].clone());
                let input1 = section
                    .input1
                    .clone()
                    .or(shared)
                    .unwrap_or_else(|| default[1].clone());
                vec![input0, input1]
            }
        }
    }

    /// The rule rows this file selects (defaults when absent).
    pub fn rule_rows(&self) -> Vec<RuleRow> {
        self.rules.clone().unwrap_or_else(default_rule_rows)
    }
}
