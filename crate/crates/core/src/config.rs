//! TOML configuration documents. Matrices are row-major lists of rows.
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! A = [[1.0, 0.0], [0.0, 1.0]]
//! B = [[0.1, 0.0], [0.0, 0.1]]
//! d = [-0.1, -0.1]
//! sigma_w = [[0.0104, 0.0068], [0.0068, 0.01]]
//! sigma_v = [[0.0233, -0.0225], [-0.0225, 0.0218]]
//!
//! [cost]
//! Q = [[-0.1, 0.0], [0.0, -0.1]]
//! q = [0.0, 0.0]
//! R = [[1.0, 0.0], [0.0, 1.0]]   # optional, defaults to I
//!
//! [horizon]
//! nu = 20
//! # probs = [...]                # P(N = 2), …, P(N = nu); uniform when omitted
//!
//! [initial_state]
//! kind = "gaussian"
//! mean = [0.0, 0.0]
//! cov = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [estimator]
//! phi = 1e6
//! ```
#![allow(non_snake_case)]

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    CostParams, Gaussian, HorizonDistribution, InitialLaw, InitialStateDistribution, Scenario, SystemModel,
};

pub type Rows = Vec<Vec<f64>>;

pub fn matrix_from_rows(field: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::validation(field, format!("row {i} has a different length than row 0")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn vector_from_list(field: &str, v: &[f64]) -> Result<DVector<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(field, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(v))
}

pub fn list_from_vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub A: Rows,
    pub B: Rows,
    pub d: Vec<f64>,
    pub sigma_w: Rows,
    pub sigma_v: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    pub Q: Rows,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub R: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonDoc {
    pub nu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Rows,
}

/// `kind = "gaussian"` uses `mean`/`cov`; `kind = "mixture"` uses `components`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideDoc {
    pub horizon: usize,
    #[serde(flatten)]
    pub law: LawDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateDoc {
    #[serde(flatten)]
    pub law: LawDoc,
    #[serde(default, rename = "override", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorDoc {
    /// Radius of the norm-ball bounds; ignored when `bounds = false`.
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_true")]
    pub bounds: bool,
    #[serde(default = "default_tol")]
    pub tol_feas: f64,
    #[serde(default = "default_tol")]
    pub tol_gap: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
    /// Additionally constrain every `P_t ⪰ 0`.
    #[serde(default)]
    pub psd_value_matrices: bool,
}

fn default_phi() -> f64 {
    1e6
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> u32 {
    200
}

impl Default for EstimatorDoc {
    fn default() -> Self {
        EstimatorDoc {
            phi: default_phi(),
            bounds: true,
            tol_feas: default_tol(),
            tol_gap: default_tol(),
            max_iter: default_max_iter(),
            psd_value_matrices: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoDoc {
    #[serde(default)]
    pub strip_truth: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// The scenario blocks alone; this is what the dataset digest covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub system: SystemDoc,
    pub cost: CostDoc,
    pub horizon: HorizonDoc,
    pub initial_state: InitialStateDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemDoc,
    pub cost: CostDoc,
    pub horizon: HorizonDoc,
    pub initial_state: InitialStateDoc,
    #[serde(default)]
    pub estimator: EstimatorDoc,
    #[serde(default)]
    pub io: IoDoc,
}

fn gaussian_from(field: &str, mean: &[f64], cov: &Rows) -> Result<Gaussian> {
    Ok(Gaussian {
        mean: vector_from_list(&format!("{field}.mean"), mean)?,
        cov: matrix_from_rows(&format!("{field}.cov"), cov)?,
    })
}

impl LawDoc {
    fn to_law(&self, field: &str) -> Result<InitialLaw> {
        match self.kind.as_str() {
            "gaussian" => {
                let mean = self
                    .mean
                    .as_ref()
                    .ok_or_else(|| Error::validation(format!("{field}.mean"), "missing"))?;
                let cov = self
                    .cov
                    .as_ref()
                    .ok_or_else(|| Error::validation(format!("{field}.cov"), "missing"))?;
                Ok(InitialLaw::Gaussian(gaussian_from(field, mean, cov)?))
            }
            "mixture" => {
                let comps = self
                    .components
                    .as_ref()
                    .ok_or_else(|| Error::validation(format!("{field}.components"), "missing"))?;
                let mut out = Vec::with_capacity(comps.len());
                for (i, c) in comps.iter().enumerate() {
                    out.push((c.weight, gaussian_from(&format!("{field}.components[{i}]"), &c.mean, &c.cov)?));
                }
                Ok(InitialLaw::Mixture(out))
            }
            other => Err(Error::validation(
                format!("{field}.kind"),
                format!("unsupported distribution `{other}` (expected `gaussian` or `mixture`)"),
            )),
        }
    }

    fn from_law(law: &InitialLaw) -> Self {
        match law {
            InitialLaw::Gaussian(g) => LawDoc {
                kind: "gaussian".into(),
                mean: Some(list_from_vector(&g.mean)),
                cov: Some(rows_from_matrix(&g.cov)),
                components: None,
            },
            InitialLaw::Mixture(cs) => LawDoc {
                kind: "mixture".into(),
                mean: None,
                cov: None,
                components: Some(
                    cs.iter()
                        .map(|(w, g)| ComponentDoc {
                            weight: *w,
                            mean: list_from_vector(&g.mean),
                            cov: rows_from_matrix(&g.cov),
                        })
                        .collect(),
                ),
            },
        }
    }
}

impl ScenarioDoc {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let s = &self.system;
        let system = SystemModel::new(
            matrix_from_rows("system.A", &s.A)?,
            matrix_from_rows("system.B", &s.B)?,
            vector_from_list("system.d", &s.d)?,
            matrix_from_rows("system.sigma_w", &s.sigma_w)?,
            matrix_from_rows("system.sigma_v", &s.sigma_v)?,
        )?;
        let R = match &self.cost.R {
            Some(r) => matrix_from_rows("cost.R", r)?,
            None => DMatrix::identity(system.m(), system.m()),
        };
        let cost = CostParams::new(
            matrix_from_rows("cost.Q", &self.cost.Q)?,
            vector_from_list("cost.q", &self.cost.q)?,
            R,
        )?;
        let horizon = match &self.horizon.probs {
            Some(p) => HorizonDistribution::new(self.horizon.nu, p.clone())?,
            None => HorizonDistribution::uniform(self.horizon.nu)?,
        };
        let default = self.initial_state.law.to_law("initial_state")?;
        let mut overrides = BTreeMap::new();
        for o in &self.initial_state.overrides {
            let field = format!("initial_state.override[{}]", o.horizon);
            if overrides.insert(o.horizon, o.law.to_law(&field)?).is_some() {
                return Err(Error::validation(field, "duplicate override"));
            }
        }
        let init = InitialStateDistribution::with_overrides(default, overrides)?;
        Scenario::new(system, cost, horizon, init)
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let sys = &sc.system;
        ScenarioDoc {
            system: SystemDoc {
                A: rows_from_matrix(&sys.A),
                B: rows_from_matrix(&sys.B),
                d: list_from_vector(&sys.d),
                sigma_w: rows_from_matrix(&sys.sigma_w),
                sigma_v: rows_from_matrix(&sys.sigma_v),
            },
            cost: CostDoc {
                Q: rows_from_matrix(&sc.cost.Q),
                q: list_from_vector(&sc.cost.q),
                R: Some(rows_from_matrix(&sc.cost.R)),
            },
            horizon: HorizonDoc {
                nu: sc.horizon.nu(),
                probs: Some(sc.horizon.probs().to_vec()),
            },
            initial_state: InitialStateDoc {
                law: LawDoc::from_law(sc.init.default_law()),
                overrides: sc
                    .init
                    .overrides()
                    .iter()
                    .map(|(h, l)| OverrideDoc { horizon: *h, law: LawDoc::from_law(l) })
                    .collect(),
            },
        }
    }
}

/// SHA-256 over the canonical JSON form of the scenario.
pub fn scenario_digest(sc: &Scenario) -> String {
    let doc = ScenarioDoc::from_scenario(sc);
    let json = serde_json::to_string(&doc).expect("scenario document serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn scenario_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            system: self.system.clone(),
            cost: self.cost.clone(),
            horizon: self.horizon.clone(),
            initial_state: self.initial_state.clone(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_doc().to_scenario()
    }

    pub fn from_scenario(sc: &Scenario, seed: u64, estimator: EstimatorDoc) -> Self {
        let doc = ScenarioDoc::from_scenario(sc);
        ConfigFile {
            seed,
            system: doc.system,
            cost: doc.cost,
            horizon: doc.horizon,
            initial_state: doc.initial_state,
            estimator,
            io: IoDoc::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 11

[system]
A = [[1.0, 0.0], [0.0, 1.0]]
B = [[0.1, 0.0], [0.0, 0.1]]
d = [-0.1, -0.1]
sigma_w = [[0.0104, 0.0068], [0.0068, 0.01]]
sigma_v = [[0.0233, -0.0225], [-0.0225, 0.0218]]

[cost]
Q = [[-0.1, 0.0], [0.0, -0.1]]
q = [0.0, 0.0]

[horizon]
nu = 20

[initial_state]
kind = "gaussian"
mean = [0.0, 0.0]
cov = [[1.0, 0.0], [0.0, 1.0]]

[[initial_state.override]]
horizon = 5
kind = "mixture"
components = [
  { weight = 0.5, mean = [1.0, 0.0], cov = [[1.0, 0.0], [0.0, 1.0]] },
  { weight = 0.5, mean = [-1.0, 0.0], cov = [[1.0, 0.0], [0.0, 1.0]] },
]
"#;

    #[test]
    fn parses_the_reference_example() {
        let cfg = ConfigFile::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.seed, 11);
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.system.n(), 2);
        assert_eq!(sc.cost.R, DMatrix::identity(2, 2));
        assert_eq!(sc.horizon.probs().len(), 19);
        assert!(matches!(sc.init.law_for(5), InitialLaw::Mixture(_)));
        assert!(matches!(sc.init.law_for(6), InitialLaw::Gaussian(_)));
        assert_eq!(cfg.estimator.phi, 1e6);
    }

    #[test]
    fn digest_is_stable_under_reserialization() {
        let sc = ConfigFile::parse(EXAMPLE).unwrap().scenario().unwrap();
        let cfg = ConfigFile::from_scenario(&sc, 3, EstimatorDoc::default());
        let text = cfg.to_toml().unwrap();
        let again = ConfigFile::parse(&text).unwrap().scenario().unwrap();
        assert_eq!(scenario_digest(&sc), scenario_digest(&again));
        assert_eq!(sc, again);
    }

    #[test]
    fn ragged_matrix_is_rejected_with_field() {
        let bad = EXAMPLE.replace("A = [[1.0, 0.0], [0.0, 1.0]]", "A = [[1.0, 0.0], [0.0]]");
        let err = ConfigFile::parse(&bad).unwrap().scenario().unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "system.A"));
    }

    #[test]
    fn unknown_distribution_kind_is_rejected() {
        let bad = EXAMPLE.replacen("kind = \"gaussian\"", "kind = \"empirical\"", 1);
        assert!(ConfigFile::parse(&bad).unwrap().scenario().is_err());
    }
}
