//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dccsim_core::{SimConfig, SweepParameter};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub output_dir: Option<PathBuf>,
    /// Seeds `sim.seed .. sim.seed + replications - 1`.
    pub replications: u32,
    /// Width of the per-link time buckets in link_pdr.csv.
    pub link_bucket_s: f64,
    pub sim: SimConfig,
    pub sweep: Vec<SweepAxis>,
}

impl Default for RunFile {
    fn default() -> Self {
        Self { output_dir: None, replications: 1, link_bucket_s: 1.0, sim: SimConfig::default(), sweep: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// Parses `name=v1,v2,...`.
    pub fn parse_flag(flag: &str) -> Result<Self, String> {
        let (name, values) = flag.split_once('=').ok_or_else(|| format!("expected NAME=V1,V2,..., got '{flag}'"))?;
        let parameter: SweepParameter = name.trim().parse().map_err(|e| format!("{e}"))?;
        let values = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().map_err(|_| format!("'{v}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { parameter, values })
    }
}

impl RunFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: RunFile = toml::from_str(text).map_err(|e| anyhow!("{}: {}", origin.display(), e.to_string().trim_end()))?;
        file.validate().map_err(|e| located(text, origin, &e.to_string()))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if !(self.link_bucket_s > 0.0 && self.link_bucket_s.is_finite()) {
            bail!("link_bucket_s must be positive");
        }
        self.sim.validate()?;
        self.sim.scenario.build(self.sim.seed)?;
        for axis in &self.sweep {
            if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
                bail!("sweep values must be finite, got {v}");
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.sim.seed;
        (0..u64::from(self.replications)).map(move |i| base.wrapping_add(i))
    }

    /// The fully resolved configuration, every default written out.
    pub fn to_manifest(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Prefixes a validation message with the line of the first key it names.
fn located(text: &str, origin: &Path, message: &str) -> anyhow::Error {
    let keys = message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .filter_map(|w| w.rsplit('.').next())
        .filter(|w| w.contains('_') || w.chars().all(|c| c.is_ascii_lowercase()) && w.len() > 3);
    for key in keys {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_start();
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return anyhow!("{}:{}: {}", origin.display(), i + 1, message);
                }
            }
        }
    }
    anyhow!("{}: {}", origin.display(), message)
}
