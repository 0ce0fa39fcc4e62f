//! `DistributionSpec`: chart, named generators and log-density, loaded from JSON.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vfield::{Axis, AxisDescriptor, Chart, LogDensity, VectorField};

pub const SCHEMA_VERSION: &str = "1";
pub const METRIC: &str = "frame-orthonormal";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartFile {
    pub vars: Vec<String>,
    pub axes: Vec<AxisDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub name: String,
    pub components: Vec<String>,
}

/// On-disk form; field order here fixes the canonical serialization used for digests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub schema_version: String,
    pub chart: ChartFile,
    pub generators: Vec<GeneratorFile>,
    #[serde(default = "zero_density")]
    pub log_density: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_nonperiodic: bool,
}

fn zero_density() -> String {
    "0".into()
}

#[derive(Clone, Debug)]
pub struct DistributionSpec {
    pub chart: Arc<Chart>,
    pub names: Vec<String>,
    pub generators: Vec<VectorField>,
    pub log_density: LogDensity,
    pub seed: u64,
    pub allow_nonperiodic: bool,
    source: SpecFile,
}

/// Maps serde's messages onto the field they concern.
fn schema_from_json(err: serde_json::Error) -> Error {
    let msg = err.to_string();
    let field = ["schema_version", "chart", "generators", "vars", "axes", "components", "name", "period", "lo", "hi"]
        .iter()
        .find(|f| msg.contains(&format!("`{f}`")))
        .copied()
        .unwrap_or("<document>");
    Error::schema(field, msg)
}

impl DistributionSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(schema_from_json)?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_file(file: SpecFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version `{}`", file.schema_version),
            ));
        }
        let axes = file
            .chart
            .axes
            .iter()
            .map(|a| match a {
                AxisDescriptor::Periodic { period } => Axis::periodic(period),
                AxisDescriptor::Interval { lo, hi } => {
                    let parse = |field: &str, s: &str| {
                        crate::expr::parse_rational(s.trim())
                            .ok_or_else(|| Error::schema(field, format!("`{s}` is not a rational")))
                    };
                    Axis::interval(parse("lo", lo)?, parse("hi", hi)?)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let chart = Arc::new(Chart::new(file.chart.vars.clone(), axes)?);
        if file.generators.is_empty() {
            return Err(Error::schema("generators", "at least one generator required"));
        }
        let mut names = Vec::new();
        let mut generators = Vec::new();
        for g in &file.generators {
            if names.contains(&g.name) {
                return Err(Error::schema("generators", format!("duplicate name `{}`", g.name)));
            }
            if g.components.len() != chart.dim() {
                return Err(Error::schema(
                    "components",
                    format!("`{}` has {} components, chart has {} axes", g.name, g.components.len(), chart.dim()),
                ));
            }
            let comps: Vec<&str> = g.components.iter().map(String::as_str).collect();
            generators.push(VectorField::parse(&chart, &comps)?);
            names.push(g.name.clone());
        }
        let log_density = LogDensity::parse(&chart, &file.log_density)?;
        let spec = DistributionSpec {
            chart,
            names,
            generators,
            log_density,
            seed: file.seed,
            allow_nonperiodic: file.allow_nonperiodic,
            source: file,
        };
        if !spec.allow_nonperiodic {
            spec.check_periodicity()?;
        }
        Ok(spec)
    }

    /// Rejects coefficients (or φ) that vary along a periodic axis.
    pub fn check_periodicity(&self) -> Result<()> {
        for (a, axis) in self.chart.axes().iter().enumerate() {
            if !axis.is_periodic() {
                continue;
            }
            let var = || self.chart.var_names()[a].clone();
            for (name, g) in self.names.iter().zip(&self.generators) {
                if g.components().iter().any(|c| c.depends_on(a)) {
                    return Err(Error::NonPeriodicCoefficient { name: name.clone(), axis: var() });
                }
            }
            if self.log_density.phi().depends_on(a) {
                return Err(Error::NonPeriodicCoefficient {
                    name: "log_density".into(),
                    axis: var(),
                });
            }
        }
        Ok(())
    }

    /// Whether periodicity validation was waived and some coefficient needs it.
    pub fn is_periodic_surrogate(&self) -> bool {
        self.allow_nonperiodic && self.check_periodicity().is_err()
    }

    pub fn source(&self) -> &SpecFile {
        &self.source
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.source).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Same chart and density with a different generator list.
    pub fn with_generators(&self, names: Vec<String>, generators: Vec<VectorField>) -> Result<Self> {
        let mut source = self.source.clone();
        source.generators = names
            .iter()
            .zip(&generators)
            .map(|(n, g)| GeneratorFile {
                name: n.clone(),
                components: g.to_strings(),
            })
            .collect();
        Self::from_file(source)
    }
}
