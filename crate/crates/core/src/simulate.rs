//! Trajectory generation under the optimal feedback law and the dataset file
//! format.
//!
//! A trial with horizon `N` stands still at `x̄` for `t = 1..s` where
//! `s = ν - N + 1`, then follows `u_t = -(K_t x_t + k_t)` with process noise.
//! Observations `y_t = x_t + v_t` are recorded for every `t = 1..=ν`.
//!
//! Dataset files are JSON lines: one metadata header, then one record per
//! trial. Floats use the shortest round-trip representation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::scenario_digest;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::{riccati_backward, RiccatiSolution};
use crate::linalg::psd_factor;
use crate::model::{InitialLaw, Scenario};
use crate::rng::{stream, Channel};

pub const DATASET_FORMAT: &str = "lqioc-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trial_id: u64,
    pub horizon: usize,
    /// `y_1, …, y_ν`.
    pub y: Vec<DVector<f64>>,
    /// `x_1, …, x_ν` when ground truth is retained.
    pub x: Option<Vec<DVector<f64>>>,
    /// `u_1, …, u_{ν-1}`; zero during the stand-still prefix.
    pub u: Option<Vec<DVector<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    trial_id: u64,
    horizon: usize,
    y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<Vec<Vec<f64>>>,
}

fn to_lists(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

fn from_lists(vs: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    vs.into_iter().map(DVector::from_vec).collect()
}

impl From<&TrajectoryRecord> for RecordLine {
    fn from(r: &TrajectoryRecord) -> Self {
        RecordLine {
            trial_id: r.trial_id,
            horizon: r.horizon,
            y: to_lists(&r.y),
            x: r.x.as_deref().map(to_lists),
            u: r.u.as_deref().map(to_lists),
        }
    }
}

impl From<RecordLine> for TrajectoryRecord {
    fn from(r: RecordLine) -> Self {
        TrajectoryRecord {
            trial_id: r.trial_id,
            horizon: r.horizon,
            y: from_lists(r.y),
            x: r.x.map(from_lists),
            u: r.u.map(from_lists),
        }
    }
}

impl TrajectoryRecord {
    pub fn start(&self, nu: usize) -> usize {
        nu + 1 - self.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub nu: usize,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    /// `M_N` for every `N = 2..=ν`.
    pub horizon_counts: BTreeMap<usize, usize>,
    pub has_truth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<TrajectoryRecord>,
}

fn horizon_counts(nu: usize, records: &[TrajectoryRecord]) -> BTreeMap<usize, usize> {
    let mut counts: BTreeMap<usize, usize> = (2..=nu).map(|k| (k, 0)).collect();
    for r in records {
        *counts.entry(r.horizon).or_insert(0) += 1;
    }
    counts
}

struct LawSampler {
    cumulative: Vec<f64>,
    means: Vec<DVector<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl LawSampler {
    fn new(law: &InitialLaw) -> Self {
        let comps = law.components();
        let mut acc = 0.0;
        let cumulative = comps
            .iter()
            .map(|(w, _)| {
                acc += w;
                acc
            })
            .collect();
        LawSampler {
            cumulative,
            means: comps.iter().map(|(_, g)| g.mean.clone()).collect(),
            factors: comps.iter().map(|(_, g)| psd_factor(&g.cov)).collect(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let k = if self.means.len() == 1 {
            0
        } else {
            let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
            self.cumulative.iter().position(|&c| u < c).unwrap_or(self.means.len() - 1)
        };
        &self.means[k] + &self.factors[k] * standard_normal(rng, self.means[k].len())
    }
}

/// One draw of `x̄` from `law` on the initial-state stream of `(seed, trial)`.
pub fn draw_initial_state(law: &InitialLaw, seed: u64, trial: u64) -> DVector<f64> {
    LawSampler::new(law).sample(&mut stream(seed, trial, 0, Channel::InitialState))
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

/// Precomputed feedback gains and noise factors for one scenario.
pub struct Simulator {
    scenario: Scenario,
    solution: RiccatiSolution,
    /// `K_t = 𝔯R_t⁻¹𝔖_t`, `t = 1..ν-1` (0-indexed).
    gains: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    noise_w: Option<DMatrix<f64>>,
    noise_v: Option<DMatrix<f64>>,
    default_law: LawSampler,
    overrides: BTreeMap<usize, LawSampler>,
    digest: String,
}

impl Simulator {
    /// Fails with [`Error::Infeasible`] unless every `𝔯R_t` is positive
    /// definite, which is what makes the optimal control unique.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let nu = scenario.nu();
        let sol = riccati_backward(&scenario.system, &scenario.cost, nu)?;
        let mut gains = Vec::with_capacity(nu - 1);
        let mut offsets = Vec::with_capacity(nu - 1);
        for t in 1..nu {
            let chol = sol.rfrak(t).clone().cholesky().ok_or_else(|| {
                Error::Infeasible(format!("𝔯R_{t} is not positive definite; optimal control is not unique"))
            })?;
            gains.push(chol.solve(sol.sfrak(t)));
            offsets.push(chol.solve(sol.g(t)));
        }
        let sys = &scenario.system;
        Ok(Simulator {
            noise_w: (!is_zero(&sys.sigma_w)).then(|| psd_factor(&sys.sigma_w)),
            noise_v: (!is_zero(&sys.sigma_v)).then(|| psd_factor(&sys.sigma_v)),
            default_law: LawSampler::new(scenario.init.default_law()),
            overrides: scenario.init.overrides().iter().map(|(h, l)| (*h, LawSampler::new(l))).collect(),
            digest: scenario_digest(scenario),
            scenario: scenario.clone(),
            solution: sol,
            gains,
            offsets,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn solution(&self) -> &RiccatiSolution {
        &self.solution
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Optimal control at 1-based step `t` from state `x`.
    pub fn control(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        -(&self.gains[t - 1] * x + &self.offsets[t - 1])
    }

    pub fn sample_trial(&self, seed: u64, trial_id: u64) -> TrajectoryRecord {
        let sc = &self.scenario;
        let sys = &sc.system;
        let nu = sc.nu();
        let (n, m) = (sys.n(), sys.m());

        let mut rng_h = stream(seed, trial_id, 0, Channel::Horizon);
        let horizon = sc.horizon.sample_with(rng_h.random::<f64>());
        let s = nu + 1 - horizon;

        let mut rng_x = stream(seed, trial_id, 0, Channel::InitialState);
        let x_bar = self.overrides.get(&horizon).unwrap_or(&self.default_law).sample(&mut rng_x);

        let mut xs = Vec::with_capacity(nu);
        let mut us = Vec::with_capacity(nu - 1);
        for _ in 1..s {
            xs.push(x_bar.clone());
            us.push(DVector::zeros(m));
        }
        let mut x = x_bar;
        for t in s..nu {
            let u = self.control(&x, t);
            let mut next = &sys.A * &x + &sys.B * &u + &sys.d;
            if let Some(l) = &self.noise_w {
                let mut r = stream(seed, trial_id, t as u64, Channel::ProcessNoise);
                next += l * standard_normal(&mut r, n);
            }
            xs.push(x);
            us.push(u);
            x = next;
        }
        xs.push(x);

        let y = xs
            .iter()
            .enumerate()
            .map(|(i, x)| match &self.noise_v {
                Some(l) => {
                    let mut r = stream(seed, trial_id, (i + 1) as u64, Channel::ObservationNoise);
                    x + l * standard_normal(&mut r, n)
                }
                None => x.clone(),
            })
            .collect();

        TrajectoryRecord { trial_id, horizon, y, x: Some(xs), u: Some(us) }
    }

    pub fn generate(&self, trials: usize, seed: u64, exec: Execution) -> Dataset {
        let records = exec.map_indexed(trials, |i| self.sample_trial(seed, i as u64));
        let sys = &self.scenario.system;
        let nu = self.scenario.nu();
        Dataset {
            meta: DatasetMeta {
                format: DATASET_FORMAT.into(),
                version: DATASET_VERSION,
                config_digest: self.digest.clone(),
                seed,
                nu,
                n: sys.n(),
                m: sys.m(),
                trials,
                horizon_counts: horizon_counts(nu, &records),
                has_truth: true,
            },
            records,
        }
    }
}

pub fn generate_dataset(scenario: &Scenario, trials: usize, seed: u64, exec: Execution) -> Result<Dataset> {
    Ok(Simulator::new(scenario)?.generate(trials, seed, exec))
}

impl Dataset {
    pub fn trials(&self) -> usize {
        self.records.len()
    }

    pub fn has_truth(&self) -> bool {
        self.meta.has_truth && self.records.iter().all(|r| r.x.is_some() && r.u.is_some())
    }

    pub fn strip_truth(&mut self) {
        for r in &mut self.records {
            r.x = None;
            r.u = None;
        }
        self.meta.has_truth = false;
    }

    /// The first `trials` records with recomputed counts.
    pub fn prefix(&self, trials: usize) -> Dataset {
        let records: Vec<_> = self.records[..trials.min(self.records.len())].to_vec();
        let mut meta = self.meta.clone();
        meta.trials = records.len();
        meta.horizon_counts = horizon_counts(meta.nu, &records);
        Dataset { meta, records }
    }

    pub fn validate(&self) -> Result<()> {
        let meta = &self.meta;
        if meta.format != DATASET_FORMAT {
            return Err(Error::Parse(format!("unknown dataset format `{}`", meta.format)));
        }
        if meta.version != DATASET_VERSION {
            return Err(Error::Parse(format!("unsupported dataset version {}", meta.version)));
        }
        if meta.trials != self.records.len() {
            return Err(Error::Parse(format!(
                "header declares {} trials, found {}",
                meta.trials,
                self.records.len()
            )));
        }
        for r in &self.records {
            let ctx = |what: &str| Error::Parse(format!("trial {}: {what}", r.trial_id));
            if r.horizon < 2 || r.horizon > meta.nu {
                return Err(ctx("horizon outside 2..=ν"));
            }
            if r.y.len() != meta.nu || r.y.iter().any(|v| v.len() != meta.n) {
                return Err(ctx("observation shape mismatch"));
            }
            if r.y.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ctx("non-finite observation"));
            }
            if let Some(x) = &r.x {
                if x.len() != meta.nu || x.iter().any(|v| v.len() != meta.n) {
                    return Err(ctx("state shape mismatch"));
                }
            }
            if let Some(u) = &r.u {
                if u.len() != meta.nu - 1 || u.iter().any(|v| v.len() != meta.m) {
                    return Err(ctx("control shape mismatch"));
                }
            }
        }
        if horizon_counts(meta.nu, &self.records) != meta.horizon_counts {
            return Err(Error::Parse("horizon counts do not match records".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        let json = |e: serde_json::Error| Error::Parse(e.to_string());
        serde_json::to_writer(&mut w, &self.meta).map_err(json)?;
        w.write_all(b"\n").map_err(io)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &RecordLine::from(r)).map_err(json)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Dataset> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let meta: DatasetMeta =
            serde_json::from_str(&header).map_err(|e| Error::Parse(format!("header: {e}")))?;
        let mut records = Vec::with_capacity(meta.trials);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
            records.push(rec.into());
        }
        let ds = Dataset { meta, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_from(f)
    }
}

/// `(1/M_N) Σ x_t x_tᵀ` over the trials with horizon `N`.
pub fn empirical_second_moment(ds: &Dataset, t: usize, horizon: usize) -> Result<DMatrix<f64>> {
    let nu = ds.meta.nu;
    if t < 1 || t > nu {
        return Err(Error::IndexOutOfRange { t, lo: 1, hi: nu });
    }
    let n = ds.meta.n;
    let mut acc = DMatrix::zeros(n, n);
    let mut count = 0usize;
    for r in ds.records.iter().filter(|r| r.horizon == horizon) {
        let x = r
            .x
            .as_ref()
            .ok_or_else(|| Error::validation("dataset", "second moments need ground-truth states"))?;
        acc += &x[t - 1] * x[t - 1].transpose();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyGroup(horizon));
    }
    Ok(acc / count as f64)
}
