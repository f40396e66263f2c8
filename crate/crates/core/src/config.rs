//! Run configuration: a flat `key = value` file with section headers
//! (TOML), validated before any driver runs.

use crate::error::{Error, Result};
use crate::riemann::{CircularDomain, Disk};
use crate::vec3::R3;
use crate::weierstrass::{catalog, MinimalImmersion};
use crate::C64;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    FluxToZero,
    PrescribeFlux,
    CompleteStep,
    Classify,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// [center x, center y, radius]
    pub outer: Option<[f64; 3]>,
    #[serde(default)]
    pub holes: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub catalog: Option<String>,
    /// JSON file holding a serialized immersion.
    pub coefficients: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    pub kind: Driver,
    pub target_flux: Option<Vec<R3>>,
    pub delta: Option<f64>,
    /// [r_in, r_out] of the annular core.
    pub core: Option<[f64; 2]>,
    /// Base point of the distance checks; defaults to the immersion's.
    pub x0: Option<[f64; 2]>,
    /// Family that complete_step transforms.
    #[serde(default)]
    pub base: BaseFamily,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaseFamily {
    #[default]
    Constant,
    FluxToZero,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub flux: f64,
    pub period: f64,
    pub null: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { flux: 1e-8, period: 1e-9, null: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Times at which OBJ meshes are written.
    pub obj_times: Vec<f64>,
    /// Radial and angular vertex counts of the meshes.
    pub mesh: [usize; 2],
    /// Radial range of the meshes; the whole domain when absent.
    pub mesh_radii: Option<[f64; 2]>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { t_samples: 64, seed: 0, out: PathBuf::from("out"), obj_times: vec![], mesh: [24, 96], mesh_radii: None }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub data: DataSection,
    pub driver: DriverSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Field-level checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tolerances.flux", self.tolerances.flux), ("tolerances.period", self.tolerances.period), ("tolerances.null", self.tolerances.null)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.run.t_samples < 2 {
            return Err(Error::Config(format!("run.t_samples must be at least 2, got {}", self.run.t_samples)));
        }
        if self.run.mesh[0] < 2 || self.run.mesh[1] < 3 {
            return Err(Error::Config("run.mesh needs at least 2 radii and 3 angles".into()));
        }
        if let Some([a, b]) = self.run.mesh_radii {
            if !(0.0 <= a && a < b) {
                return Err(Error::Config("run.mesh_radii must be [r0, r1] with 0 <= r0 < r1".into()));
            }
        }
        if let Some(t) = self.run.obj_times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("run.obj_times entry {t} is outside [0, 1]")));
        }
        match (&self.data.catalog, &self.data.coefficients) {
            (None, None) => return Err(Error::Config("data.catalog or data.coefficients is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("give only one of data.catalog and data.coefficients".into())),
            _ => {}
        }
        match self.driver.kind {
            Driver::PrescribeFlux if self.driver.target_flux.is_none() => {
                return Err(Error::Config("driver.target_flux is required for prescribe_flux".into()));
            }
            Driver::CompleteStep => {
                match self.driver.delta {
                    Some(d) if d > 0.0 => {}
                    Some(d) => return Err(Error::Config(format!("driver.delta must be positive, got {d}"))),
                    None => return Err(Error::Config("driver.delta is required for complete_step".into())),
                }
                match self.driver.core {
                    Some([a, b]) if 0.0 < a && a < b => {}
                    Some(_) => return Err(Error::Config("driver.core must be [r_in, r_out] with 0 < r_in < r_out".into())),
                    None => return Err(Error::Config("driver.core is required for complete_step".into())),
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The initial immersion, on the configured domain when one is given.
    pub fn immersion(&self) -> Result<MinimalImmersion> {
        let mut u = match (&self.data.catalog, &self.data.coefficients) {
            (Some(name), _) => catalog(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("data.coefficients: {e}")))?
            }
            (None, None) => return Err(Error::Config("no initial data".into())),
        };
        if let Some(o) = self.domain.outer {
            let disk = |v: &[f64; 3]| Disk { center: C64::new(v[0], v[1]), radius: v[2] };
            u.domain = CircularDomain::new(disk(&o), self.domain.holes.iter().map(disk).collect())?;
            if !u.domain.contains(u.basepoint) {
                return Err(Error::Config("domain does not contain the base point of the data".into()));
            }
        } else if !self.domain.holes.is_empty() {
            return Err(Error::Config("domain.holes given without domain.outer".into()));
        }
        Ok(u)
    }
}
