//! JSON scenario files.
//!
//! Unknown keys are rejected. Optional keys are filled in by [`ScenarioFile::with_defaults`]
//! so that the serialised effective file pins down a run completely.

use std::path::Path;
use std::sync::Arc;

use persuasion_core::belief::make_grid;
use persuasion_core::payoff::{build_u, PayoffModel};
use persuasion_core::solver::{Scenario, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use persuasion_core::{Belief, BeliefGrid, Chain, GridFn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub transition: Vec<Vec<f64>>,
    pub payoff: PayoffEntry,
    pub lambda: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Initial belief for simulations; the stationary distribution if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PayoffEntry {
    /// `u` at the points of a grid over the simplex, in grid order; the
    /// resolution is implied by the length.
    Table { values: Vec<f64> },
    Receiver {
        actions: Vec<String>,
        sender_payoff: Vec<Vec<f64>>,
        receiver_payoff: Vec<Vec<f64>>,
    },
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub x: Option<f64>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

/// A parsed file turned into solver inputs.
#[derive(Debug, Clone)]
pub struct Loaded {
    /// The effective file with every default written out.
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub prior: Belief,
    pub seed: u64,
    pub samples: usize,
}

impl Loaded {
    /// SHA-256 of the effective file's canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.file.to_json().as_bytes()))
    }

    pub fn resolution(&self) -> usize {
        self.scenario.grid().resolution()
    }
}

pub fn default_resolution(k: usize) -> usize {
    match k {
        1 => 1,
        2 => 200,
        3 => 40,
        _ => 10,
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario files serialise")
    }

    pub fn k(&self) -> usize {
        self.transition.len()
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        self.lambda = o.lambda.unwrap_or(self.lambda);
        self.x = o.x.unwrap_or(self.x);
        self.grid_resolution = o.grid.or(self.grid_resolution);
        self.tolerance = o.tol.or(self.tolerance);
        self.seed = o.seed.unwrap_or(self.seed);
        self.samples = o.samples.or(self.samples);
        self
    }

    pub fn with_defaults(mut self) -> Self {
        let k = self.k();
        self.signal_count.get_or_insert(k);
        self.grid_resolution.get_or_insert(default_resolution(k));
        self.tolerance.get_or_insert(DEFAULT_TOLERANCE);
        self.samples.get_or_insert(DEFAULT_SAMPLES);
        self
    }

    /// Validates and builds the solver inputs.
    pub fn load(self) -> Result<Loaded, CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "unsupported scenario version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        let file = self.with_defaults();
        let input = |e: persuasion_core::Error| CliError::Input(e.to_string());
        let chain = Chain::new(&file.transition).map_err(input)?;
        let k = chain.k();
        let resolution = file.grid_resolution.unwrap_or_else(|| default_resolution(k));
        let grid = make_grid(k, resolution).map_err(input)?;
        let model = payoff_model(&file.payoff, k)?;
        let u = build_u(&model, &grid).map_err(input)?;
        let scenario = Scenario {
            chain,
            u,
            lambda: file.lambda,
            x: file.x,
            signal_count: file.signal_count.unwrap_or(k),
            tol: file.tolerance.unwrap_or(DEFAULT_TOLERANCE),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        };
        scenario.validate().map_err(input)?;
        let prior = match &file.prior {
            Some(p) => Belief::new(p.clone()).map_err(input)?,
            None => Belief::new(scenario.chain.stationary().to_vec()).map_err(input)?,
        };
        if prior.k() != k {
            return Err(CliError::Input(format!("prior has {} entries for {k} states", prior.k())));
        }
        let samples = file.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples < 2 {
            return Err(CliError::Input("samples must be at least 2".into()));
        }
        Ok(Loaded { seed: file.seed, samples, file, scenario, prior })
    }
}

fn payoff_model(entry: &PayoffEntry, k: usize) -> Result<PayoffModel, CliError> {
    match entry {
        PayoffEntry::Table { values } => {
            let grid = table_grid(k, values.len())?;
            let f = GridFn::new(grid, values.clone()).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(PayoffModel::Table(f))
        }
        PayoffEntry::Receiver { actions, sender_payoff, receiver_payoff } => {
            let width = actions.len();
            for (name, m) in [("sender_payoff", sender_payoff), ("receiver_payoff", receiver_payoff)] {
                if m.len() != k || m.iter().any(|row| row.len() != width) {
                    return Err(CliError::Input(format!("{name} must be {k} x {width}")));
                }
            }
            Ok(PayoffModel::Receiver {
                actions: actions.clone(),
                sender: sender_payoff.clone(),
                receiver: receiver_payoff.clone(),
            })
        }
    }
}

/// The grid on `k` states with exactly `len` points.
fn table_grid(k: usize, len: usize) -> Result<Arc<BeliefGrid>, CliError> {
    let bad = || CliError::Input(format!("a payoff table of length {len} matches no grid on {k} states"));
    if k == 1 {
        return if len == 1 { make_grid(1, 1).map_err(|e| CliError::Input(e.to_string())) } else { Err(bad()) };
    }
    let mut r = 1;
    loop {
        let n = BeliefGrid::point_count(k, r);
        if n == len as u128 {
            return make_grid(k, r).map_err(|e| CliError::Input(e.to_string()));
        }
        if n > len as u128 {
            return Err(bad());
        }
        r += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TENT: &str = r#"{
        "version": 1,
        "transition": [[0.7, 0.3], [0.4, 0.6]],
        "payoff": {"type": "table", "values": [0.0, 1.0, 0.0]},
        "lambda": 0.9,
        "x": 0.5,
        "seed": 42
    }"#;

    #[test]
    fn defaults_are_filled() {
        let l = ScenarioFile::parse(TENT).unwrap().load().unwrap();
        assert_eq!(l.file.grid_resolution, Some(200));
        assert_eq!(l.file.signal_count, Some(2));
        assert_eq!(l.file.tolerance, Some(1e-9));
        assert_eq!(l.samples, 10_000);
        assert_eq!(l.scenario.grid().len(), 201);
        // The three-point table is the tent.
        assert!((l.scenario.u.value(100) - 1.0).abs() < 1e-15);
        assert!((l.scenario.u.value(50) - 0.5).abs() < 1e-15);
        let pi = l.scenario.chain.stationary();
        assert!((l.prior.as_slice()[0] - pi[0]).abs() < 1e-15);
    }

    #[test]
    fn round_trip_gives_the_same_scenario() {
        let a = ScenarioFile::parse(TENT).unwrap().load().unwrap();
        let b = ScenarioFile::parse(&a.file.to_json()).unwrap().load().unwrap();
        assert_eq!(a.file, b.file);
        assert_eq!(a.scenario, b.scenario);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = TENT.replace("\"seed\": 42", "\"seed\": 42, \"lamdba\": 0.5");
        assert!(matches!(ScenarioFile::parse(&text), Err(CliError::Input(_))));
        let text = TENT.replace("\"type\": \"table\"", "\"type\": \"table\", \"extra\": 1");
        assert!(ScenarioFile::parse(&text).is_err());
    }

    #[test]
    fn malformed_inputs() {
        let bad_rows = TENT.replace("[0.4, 0.6]", "[0.4, 0.7]");
        assert!(ScenarioFile::parse(&bad_rows).unwrap().load().is_err());
        let bad_len = TENT.replace("[0.0, 1.0, 0.0]", "[0.5]");
        assert!(ScenarioFile::parse(&bad_len).unwrap().load().is_err());
        let version = TENT.replace("\"version\": 1", "\"version\": 7");
        assert!(ScenarioFile::parse(&version).unwrap().load().is_err());
        let lambda = TENT.replace("0.9", "1.0");
        assert!(ScenarioFile::parse(&lambda).unwrap().load().is_err());
    }

    #[test]
    fn overrides_win_and_change_the_hash() {
        let f = ScenarioFile::parse(TENT).unwrap();
        let base = f.clone().load().unwrap();
        let o = Overrides { lambda: Some(0.5), grid: Some(20), ..Overrides::default() };
        let l = f.apply(&o).load().unwrap();
        assert_eq!(l.scenario.lambda, 0.5);
        assert_eq!(l.resolution(), 20);
        assert_ne!(l.hash(), base.hash());
    }

    #[test]
    fn receiver_payoff() {
        let text = r#"{
            "version": 1,
            "transition": [[0.7, 0.3], [0.4, 0.6]],
            "payoff": {
                "type": "receiver",
                "actions": ["stay", "go"],
                "sender_payoff": [[0.0, 1.0], [0.0, 1.0]],
                "receiver_payoff": [[1.0, 0.0], [0.0, 1.0]]
            },
            "lambda": 0.5,
            "x": 0.3,
            "grid_resolution": 10,
            "seed": 1,
            "prior": [0.5, 0.5]
        }"#;
        let l = ScenarioFile::parse(text).unwrap().load().unwrap();
        assert_eq!(l.scenario.u.values(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let narrow = text.replace("[[0.0, 1.0], [0.0, 1.0]]", "[[0.0], [0.0]]");
        assert!(ScenarioFile::parse(&narrow).unwrap().load().is_err());
    }
}
