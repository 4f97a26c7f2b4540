//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use hamlearn::model::{HamiltonianModel, ModelFile};
use hamlearn::oracle::NoiseSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Measure,
    LearnA,
    LearnB,
    Intervals,
    Certify,
    VerifyModular,
    Sweep,
}

/// Built-in model families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    IsingChain { n: usize, coupling: f64, field: f64 },
    TransverseIsingChain { n: usize, coupling: f64, field: f64 },
    RandomLocal { n: usize, k: usize, num_terms: usize, coeff_bound: f64, seed: u64 },
}

impl Generator {
    pub fn build(&self) -> hamlearn::Result<HamiltonianModel> {
        match *self {
            Generator::IsingChain { n, coupling, field } => HamiltonianModel::ising_chain(n, coupling, field),
            Generator::TransverseIsingChain { n, coupling, field } => {
                HamiltonianModel::transverse_ising_chain(n, coupling, field)
            }
            Generator::RandomLocal { n, k, num_terms, coeff_bound, seed } => {
                HamiltonianModel::random_local(n, k, num_terms, coeff_bound, &mut ChaCha8Rng::seed_from_u64(seed))
            }
        }
    }
}

/// A model file path, a generator, or an inline model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Generator { generator: Generator },
    Inline(ModelFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Directions {
    /// `"basis"`: one interval per coefficient.
    Named(String),
    List(Vec<Vec<f64>>),
}

impl Default for Directions {
    fn default() -> Self {
        Directions::Named("basis".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub epsilon0: Vec<f64>,
    pub levels: Vec<usize>,
    pub seeds: Vec<u64>,
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::exact()
}
fn default_level() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-8
}
fn default_box() -> f64 {
    10.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "default_level")]
    pub level: usize,
    /// Prior bound on `max|λ|`; defaults to the model's own coefficients.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub directions: Directions,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Box half-width on `λ′` as a multiple of `β`.
    #[serde(default = "default_box")]
    pub box_factor: f64,
    /// Previously measured `tables.csv` to learn from instead of simulating.
    #[serde(default)]
    pub tables: Option<PathBuf>,
    /// Write dual certificates to `certificates.json`.
    #[serde(default)]
    pub dump_certificates: bool,
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub level: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

/// A validated config with paths resolved.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: HamiltonianModel,
    pub out: PathBuf,
    pub base: PathBuf,
}

impl Resolved {
    pub fn beta(&self) -> f64 {
        self.config
            .beta
            .or_else(|| self.model.beta())
            .unwrap_or(1.0)
    }

    pub fn directions(&self) -> Vec<Vec<f64>> {
        let m = self.model.m();
        match &self.config.directions {
            Directions::Named(_) => (0..m).map(|a| (0..m).map(|i| if i == a { 1.0 } else { 0.0 }).collect()).collect(),
            Directions::List(v) => v.clone(),
        }
    }

    pub fn tables_path(&self) -> Option<PathBuf> {
        self.config.tables.as_ref().map(|p| self.base.join(p))
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(config, base, ov)
}

pub fn resolve(mut config: ExperimentConfig, base: PathBuf, ov: &Overrides) -> Result<Resolved, CliError> {
    if let Some(seed) = ov.seed {
        config.noise.seed = seed;
        if let ModelSource::Generator { generator: Generator::RandomLocal { seed: s, .. } } = &mut config.model {
            *s = seed;
        }
        if let Some(grid) = &mut config.sweep {
            grid.seeds = vec![seed];
        }
    }
    if let Some(level) = ov.level {
        config.level = level;
    }
    if let Some(tol) = ov.tol {
        config.tol = tol;
    }
    let model = match &config.model {
        ModelSource::Path(p) => {
            let full = base.join(p);
            if !full.exists() {
                return Err(config_err(format!("model file {} does not exist", full.display())));
            }
            HamiltonianModel::load(&full).map_err(|e| config_err(format!("{}: {e}", full.display())))?
        }
        ModelSource::Generator { generator } => generator.build().map_err(|e| config_err(e.to_string()))?,
        ModelSource::Inline(file) => {
            HamiltonianModel::try_from(file.clone()).map_err(|e| config_err(e.to_string()))?
        }
    };
    config.noise.validate().map_err(|e| config_err(e.to_string()))?;
    if config.level == 0 {
        return Err(config_err("level must be at least 1"));
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(config_err("tol must be positive"));
    }
    if !(config.box_factor > 0.0 && config.box_factor.is_finite()) {
        return Err(config_err("box_factor must be positive"));
    }
    if let Some(b) = config.beta {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(config_err("beta must be finite and non-negative"));
        }
    }
    match &config.directions {
        Directions::Named(s) if s != "basis" => {
            return Err(config_err(format!("unknown direction set {s:?}; use \"basis\" or a list of vectors")))
        }
        Directions::List(v) => {
            if v.is_empty() {
                return Err(config_err("direction list is empty"));
            }
            if let Some(bad) = v.iter().find(|d| d.len() != model.m()) {
                return Err(config_err(format!("direction of length {} for a model with {} terms", bad.len(), model.m())));
            }
            if v.iter().flatten().any(|x| !x.is_finite()) {
                return Err(config_err("direction entries must be finite"));
            }
        }
        _ => {}
    }
    if let Some(t) = &config.tables {
        let full = base.join(t);
        if !full.exists() {
            return Err(config_err(format!("tables file {} does not exist", full.display())));
        }
    }
    if config.tasks.contains(&Task::Sweep) {
        match &config.sweep {
            None => return Err(config_err("sweep task requested without a sweep grid")),
            Some(g) if g.epsilon0.is_empty() || g.levels.is_empty() || g.seeds.is_empty() => {
                return Err(config_err("sweep grids must be nonempty"))
            }
            Some(g) => {
                if g.epsilon0.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(config_err("sweep epsilon0 values must be finite and non-negative"));
                }
                if g.levels.contains(&0) {
                    return Err(config_err("sweep levels must be at least 1"));
                }
            }
        }
    }
    let needs_state = config.tasks.iter().any(|t| {
        matches!(t, Task::Measure | Task::Certify | Task::VerifyModular | Task::Sweep)
            || (config.tables.is_none() && matches!(t, Task::LearnA | Task::LearnB | Task::Intervals))
    });
    if needs_state && model.true_coeffs().is_none() {
        return Err(config_err("the requested tasks simulate a Gibbs state, so every model term needs a coefficient"));
    }
    let out = match (&ov.out, &config.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    config.tasks.sort();
    config.tasks.dedup();
    Ok(Resolved { config, model, out, base })
}
