use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ekf::{FilterParams, InitialSigmas};
use crate::select::SelectionPolicy;
use crate::sim::{gravity, Anchor, AnchorId, NoiseParams, SimError, TrajectoryProfile};

/// The scenario shipped with the crate: five anchors on the floor, three of
/// them clustered, and the takeoff / hover / sweep / land flight.
pub const BUNDLED_SCENARIO: &str = include_str!("../../scenarios/five_anchor.json");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid trajectory: {0}")]
    Trajectory(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub imu_hz: f64,
    pub range_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            imu_hz: 500.0,
            range_hz: 60.0,
        }
    }
}

/// Filter tuning as stored in the scenario file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default)]
    pub initial_sigmas: InitialSigmas,
    /// Innovation gate in sigmas; absent or null disables gating.
    #[serde(default)]
    pub gate_sigmas: Option<f64>,
    /// Noise the filter assumes. Defaults to the simulated noise.
    #[serde(default)]
    pub noise: Option<NoiseParams>,
    /// Draw the initial position estimate from N(truth, initial_sigmas.position²).
    #[serde(default = "yes")]
    pub perturb_initial_position: bool,
}

fn yes() -> bool {
    true
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            initial_sigmas: InitialSigmas::default(),
            gate_sigmas: None,
            noise: None,
            perturb_initial_position: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PolicyFile {
    Greedy,
    Sequential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<u32>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    anchors: Vec<(u32, f64, f64, f64)>,
    trajectory: TrajectoryProfile,
    #[serde(default)]
    noise: NoiseParams,
    #[serde(default)]
    rates: Rates,
    #[serde(default)]
    filter: FilterConfig,
    #[serde(default = "greedy_file")]
    policy: PolicyFile,
    #[serde(default)]
    seed: u64,
    duration_s: f64,
}

fn greedy_file() -> PolicyFile {
    PolicyFile::Greedy
}

/// Everything needed to reproduce one simulated flight.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub anchors: Vec<Anchor>,
    pub trajectory: TrajectoryProfile,
    pub noise: NoiseParams,
    pub rates: Rates,
    pub filter: FilterConfig,
    pub policy: SelectionPolicy,
    pub seed: u64,
    pub duration_s: f64,
}

impl Scenario {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let anchors: Vec<Anchor> = file
            .anchors
            .iter()
            .map(|&(id, x, y, z)| Anchor::new(id, x, y, z))
            .collect();
        let policy = match file.policy {
            PolicyFile::Greedy => SelectionPolicy::Greedy,
            PolicyFile::Sequential { order: None } => SelectionPolicy::sequential_over(&anchors),
            PolicyFile::Sequential { order: Some(order) } => SelectionPolicy::Sequential {
                order: order.into_iter().map(AnchorId).collect(),
            },
        };
        let scenario = Scenario {
            name: file.name,
            anchors,
            trajectory: file.trajectory,
            noise: file.noise,
            rates: file.rates,
            filter: file.filter,
            policy,
            seed: file.seed,
            duration_s: file.duration_s,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let policy = match &self.policy {
            SelectionPolicy::Greedy => PolicyFile::Greedy,
            SelectionPolicy::Sequential { order } => PolicyFile::Sequential {
                order: Some(order.iter().map(|id| id.0).collect()),
            },
        };
        let file = ScenarioFile {
            name: self.name.clone(),
            anchors: self
                .anchors
                .iter()
                .map(|a| (a.id.0, a.position.x, a.position.y, a.position.z))
                .collect(),
            trajectory: self.trajectory.clone(),
            noise: self.noise,
            rates: self.rates,
            filter: self.filter,
            policy,
            seed: self.seed,
            duration_s: self.duration_s,
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.anchors.is_empty() {
            return invalid("at least one anchor is required".into());
        }
        let mut ids = BTreeSet::new();
        for a in &self.anchors {
            if !ids.insert(a.id) {
                return invalid(format!("duplicate anchor id {}", a.id));
            }
            if !a.position.iter().all(|c| c.is_finite()) {
                return invalid(format!("anchor {} has a non-finite position", a.id));
            }
        }
        if let SelectionPolicy::Sequential { order } = &self.policy {
            let listed: BTreeSet<AnchorId> = order.iter().copied().collect();
            if order.len() != ids.len() || listed != ids {
                return invalid("sequential order must be a permutation of the anchor ids".into());
            }
        }
        let Rates { imu_hz, range_hz } = self.rates;
        if !(range_hz.is_finite() && range_hz > 0.0 && imu_hz.is_finite() && imu_hz >= range_hz) {
            return invalid(format!("need imu_hz >= range_hz > 0, got {imu_hz} and {range_hz}"));
        }
        if !self.noise.is_valid() {
            return invalid("noise standard deviations must be finite and non-negative".into());
        }
        if let Some(n) = self.filter.noise {
            if !n.is_valid() {
                return invalid("filter noise must be finite and non-negative".into());
            }
        }
        let s = self.filter.initial_sigmas;
        if ![s.position, s.velocity, s.roll_pitch, s.yaw]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
        {
            return invalid("initial sigmas must be finite and non-negative".into());
        }
        if let Some(g) = self.filter.gate_sigmas {
            if !(g > 0.0) {
                return invalid(format!("gate_sigmas must be positive, got {g}"));
            }
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return invalid(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.anchors.len() < 4 {
            log::warn!("only {} anchors; at least four are needed to localize in 3D", self.anchors.len());
        }
        self.trajectory.validate()?;
        Ok(())
    }

    pub fn imu_dt(&self) -> f64 {
        1.0 / self.rates.imu_hz
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            noise: self.filter.noise.unwrap_or(self.noise),
            initial: self.filter.initial_sigmas,
            gravity: gravity(),
            gate_sigmas: self.filter.gate_sigmas,
        }
    }

    pub fn anchor(&self, id: AnchorId) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario { seed, ..self.clone() }
    }

    pub fn with_policy(&self, policy: SelectionPolicy) -> Self {
        Scenario {
            policy,
            ..self.clone()
        }
    }

    /// The round-robin order used as the baseline when comparing policies.
    pub fn sequential_policy(&self) -> SelectionPolicy {
        match &self.policy {
            SelectionPolicy::Sequential { .. } => self.policy.clone(),
            SelectionPolicy::Greedy => SelectionPolicy::sequential_over(&self.anchors),
        }
    }

    /// Same scenario with all sensor noise and the initial-position draw removed.
    ///
    /// The filter keeps its nominal `Q` and `r`: with exact measurements and
    /// `r = 0` the update gain is unbounded and the covariance loses
    /// definiteness to rounding.
    pub fn noiseless(&self) -> Self {
        Scenario {
            noise: NoiseParams::zero(),
            filter: FilterConfig {
                noise: Some(self.filter.noise.unwrap_or(self.noise)),
                perturb_initial_position: false,
                ..self.filter
            },
            ..self.clone()
        }
    }
}
