//! JSON run configuration. Every field is optional; missing parameters take
//! the reference calibration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use greeneq::regulator::{CapSearch, WelfareSpec};
use greeneq::statics::{Mode, Scenario};
use greeneq::{Error, MarketParams, Result, Tolerances};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: MarketParams,
    pub welfare: Option<WelfareBlock>,
    pub scenarios: Vec<ScenarioEntry>,
    pub output_dir: Option<PathBuf>,
    pub tolerances: Tolerances,
    pub workers: Option<usize>,
}

/// Welfare objective and cap search. Without `gamma`, Γ is calibrated so the
/// base market's optimal cap equals its `e_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareBlock {
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "one")]
    pub w_exp: f64,
    #[serde(default = "default_capital_rate")]
    pub capital_rate: f64,
    #[serde(default)]
    pub search: Option<CapSearch>,
}

impl Default for WelfareBlock {
    fn default() -> Self {
        Self { gamma: None, w_exp: one(), capital_rate: default_capital_rate(), search: None }
    }
}

fn one() -> f64 {
    1.0
}

fn default_capital_rate() -> f64 {
    greeneq::regulator::DEFAULT_CAPITAL_RATE
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    #[default]
    FixedCap,
    WelfareMax,
}

/// One table row. Rows sharing a `group` are written to the same CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub label: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub mode: ScenarioMode,
    #[serde(default = "default_group")]
    pub group: String,
}

fn default_group() -> String {
    "statics".into()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.tolerances.validate()?;
        if let Some(w) = &self.welfare {
            w.spec(w.gamma.unwrap_or(1.0)).validate()?;
            if let Some(s) = &w.search {
                s.validate()?;
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        for s in &self.scenarios {
            if s.label.trim().is_empty() {
                return Err(Error::Validation("scenario labels must be nonempty".into()));
            }
            if s.group.is_empty() || !s.group.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Validation(format!(
                    "scenario group '{}' must be nonempty and use only letters, digits, '_' or '-'",
                    s.group
                )));
            }
        }
        Ok(())
    }

    pub fn welfare_block(&self) -> WelfareBlock {
        self.welfare.clone().unwrap_or_default()
    }

    /// Group names in first-appearance order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.scenarios {
            if !out.contains(&s.group) {
                out.push(s.group.clone());
            }
        }
        out
    }

    /// Core scenarios of one group; welfare-max rows use `spec` and `search`.
    pub fn scenarios_in(&self, group: &str, spec: Option<WelfareSpec>, search: CapSearch) -> Result<Vec<Scenario>> {
        self.scenarios
            .iter()
            .filter(|s| s.group == group)
            .map(|s| {
                let mode = match s.mode {
                    ScenarioMode::FixedCap => Mode::FixedCap,
                    ScenarioMode::WelfareMax => Mode::WelfareMax {
                        spec: spec.ok_or_else(|| {
                            Error::Validation(format!("scenario '{}' is welfare-max but Γ is unavailable", s.label))
                        })?,
                        search,
                    },
                };
                Ok(Scenario { label: s.label.clone(), overrides: s.overrides.clone(), mode })
            })
            .collect()
    }

    pub fn has_welfare_scenarios(&self) -> bool {
        self.scenarios.iter().any(|s| s.mode == ScenarioMode::WelfareMax)
    }
}

impl WelfareBlock {
    pub fn spec(&self, gamma: f64) -> WelfareSpec {
        WelfareSpec { gamma, w_exp: self.w_exp, capital_rate: self.capital_rate }
    }

    pub fn search_or(&self, e_bench: f64) -> CapSearch {
        self.search.unwrap_or_else(|| CapSearch::around(e_bench))
    }
}
