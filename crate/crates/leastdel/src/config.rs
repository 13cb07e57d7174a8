//! Run configuration: a versioned TOML file that pins the measure family,
//! the master seed, and per-command parameters. Marginals cross the file
//! boundary as exact "p0 p1" rational strings, so a config round-trips
//! without loss and a run is a pure function of its config.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Marginal, MeasureSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub measure: MeasureConfig,
    #[serde(default)]
    pub run: RunParams,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            master_seed: 1,
            measure: MeasureConfig::default(),
            run: RunParams::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Measure families, with marginals spelled as exact rational pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// "period", "periodic", "sparse" or "custom".
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<u64>,
    /// Periodic rule or custom tail, one "p0 p1" string per index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<String>>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            family: "period".into(),
            j: Some(3),
            rule: None,
            explicit: None,
        }
    }
}

fn parse_marginals(field: &str, strings: &[String]) -> Result<Vec<Marginal>> {
    strings
        .iter()
        .map(|s| {
            Marginal::from_str(s)
                .map_err(|e| Error::Config(format!("{field} entry {s:?}: {e}")))
        })
        .collect()
}

impl MeasureConfig {
    /// Validates and builds the measure. Marginal strings are parsed through
    /// the same invariant gate as programmatic construction, so a corrupted
    /// pair (p0 + p1 != 1) is rejected here, before any computation runs.
    pub fn build(&self) -> Result<MeasureSpec> {
        match self.family.as_str() {
            "period" => {
                let j = self
                    .j
                    .ok_or_else(|| Error::Config("family \"period\" needs j".into()))?;
                let j = u32::try_from(j)
                    .map_err(|_| Error::Config(format!("period j = {j} out of range")))?;
                MeasureSpec::period_j(j)
            }
            "periodic" => {
                let rule = self
                    .rule
                    .as_deref()
                    .ok_or_else(|| Error::Config("family \"periodic\" needs rule".into()))?;
                MeasureSpec::periodic(parse_marginals("rule", rule)?)
            }
            "sparse" => Ok(MeasureSpec::sparse()),
            "custom" => {
                let explicit = self.explicit.as_deref().unwrap_or_default();
                let tail = self
                    .rule
                    .as_deref()
                    .ok_or_else(|| Error::Config("family \"custom\" needs rule (the tail)".into()))?;
                MeasureSpec::custom(
                    parse_marginals("explicit", explicit)?,
                    parse_marginals("rule", tail)?,
                )
            }
            other => Err(Error::Config(format!("unknown measure family {other:?}"))),
        }
    }

    pub fn period(j: u64) -> Self {
        MeasureConfig {
            family: "period".into(),
            j: Some(j),
            rule: None,
            explicit: None,
        }
    }

    pub fn sparse() -> Self {
        MeasureConfig {
            family: "sparse".into(),
            j: None,
            rule: None,
            explicit: None,
        }
    }

    /// The config block describing an already-built measure.
    pub fn from_spec(spec: &MeasureSpec) -> Self {
        if let Some((explicit, tail)) = spec.custom_parts() {
            return MeasureConfig {
                family: "custom".into(),
                j: None,
                rule: Some(tail.iter().map(Marginal::to_string).collect()),
                explicit: Some(explicit.iter().map(Marginal::to_string).collect()),
            };
        }
        if let Some(rule) = spec.periodic_rule() {
            return MeasureConfig {
                family: "periodic".into(),
                j: None,
                rule: Some(rule.iter().map(Marginal::to_string).collect()),
                explicit: None,
            };
        }
        MeasureConfig::sparse()
    }
}

/// Command parameters. `horizon` counts walk blocks for the oscillation
/// commands; `blocks` counts sparse trajectory blocks for the vanishing
/// command; `depth` is the cylinder depth for the exact oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunParams {
    pub horizon: u64,
    pub paths: u64,
    pub thresholds: Vec<i64>,
    pub blocks: u32,
    pub depth: usize,
    pub envelope_log2: i64,
    pub partial_sum_log2: i64,
    pub trace_prefix: String,
    pub trace_steps: u64,
    pub sweep_j_min: u64,
    pub sweep_j_max: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            horizon: 100_000,
            paths: 1_000,
            thresholds: vec![5, 10],
            blocks: 10,
            depth: 6,
            envelope_log2: -15,
            partial_sum_log2: 0,
            trace_prefix: String::new(),
            trace_steps: 8,
            sweep_j_min: 3,
            sweep_j_max: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    /// Canonical serialization; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Schema and measure validation, run before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.measure.build()?;
        if self.run.sweep_j_min < 3
            || self.run.sweep_j_min > self.run.sweep_j_max
            || self.run.sweep_j_max > 20
        {
            return Err(Error::Config(
                "sweep range needs 3 <= j_min <= j_max <= 20".into(),
            ));
        }
        Ok(())
    }
}
