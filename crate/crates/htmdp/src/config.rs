//! Experiment configuration: the TOML schema behind the `run` command and
//! the helpers that turn a parsed config into concrete tables.
//!
//! A config names an instance (inline tables, a JSON file, or a seeded
//! generator), a mean-loss schedule, a learner, and the run dimensions.
//! Seeds split as `master_seed + replica`, so any replica can be reproduced
//! alone. Everything is explicit; no environment variables are read.
//!
//! ```toml
//! t_max = 1024
//! replicas = 8
//! master_seed = 2026
//! learner = "ht_ftrl_om"
//! alpha = 1.5
//!
//! [instance]
//! source = "generated"
//! seed = 7
//! layer_sizes = [1, 2]
//! num_actions = 2
//!
//! [regime]
//! kind = "stochastic"
//! ```

use crate::envs::{random_loss_models, LossModel, Regime};
use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::mdp::{random_kernel, Kernel, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_true() -> bool {
    true
}

fn default_solver_tol() -> f64 {
    1e-8
}

fn default_unit() -> f64 {
    1.0
}

/// Where the instance tables come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceSpec {
    /// JSON file with the same fields as [`InstanceFile`]. Relative paths
    /// resolve against the config file's directory.
    File { path: PathBuf },
    /// Deterministic random instance: Dirichlet-like kernel rows and the
    /// heavy-tailed loss recipe of
    /// [`random_loss_models`](crate::envs::random_loss_models).
    Generated { seed: u64, layer_sizes: Vec<usize>, num_actions: usize },
    /// Fully inline tables; kernel rows are layer-major like everywhere
    /// else. Keeps small configs self-contained.
    Inline {
        layer_sizes: Vec<usize>,
        num_actions: usize,
        kernel: Vec<f64>,
        losses: Vec<LossModel>,
    },
}

/// On-disk instance: layout dimensions, transition table, loss models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub layer_sizes: Vec<usize>,
    pub num_actions: usize,
    pub kernel: Vec<f64>,
    pub losses: Vec<LossModel>,
}

/// Validated tables ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedInstance {
    pub layout: Layout,
    pub kernel: Kernel,
    pub losses: Vec<LossModel>,
}

impl InstanceSpec {
    /// Builds the tables, reading [`InstanceSpec::File`] paths relative to
    /// `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedInstance> {
        match self {
            InstanceSpec::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let text = std::fs::read_to_string(&full).map_err(|e| {
                    Error::Io(std::io::Error::new(
                        e.kind(),
                        format!("reading instance {}: {e}", full.display()),
                    ))
                })?;
                let file: InstanceFile = serde_json::from_str(&text)
                    .map_err(|e| Error::parse(format!("instance {}: {e}", full.display())))?;
                build_instance(&file.layer_sizes, file.num_actions, file.kernel, file.losses)
            }
            InstanceSpec::Generated { seed, layer_sizes, num_actions } => {
                let layout = Layout::new(layer_sizes, *num_actions)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let kernel = random_kernel(&layout, &mut rng);
                let losses = random_loss_models(&layout, &mut rng);
                Ok(ResolvedInstance { layout, kernel, losses })
            }
            InstanceSpec::Inline { layer_sizes, num_actions, kernel, losses } => {
                build_instance(layer_sizes, *num_actions, kernel.clone(), losses.clone())
            }
        }
    }
}

fn build_instance(
    layer_sizes: &[usize],
    num_actions: usize,
    kernel: Vec<f64>,
    losses: Vec<LossModel>,
) -> Result<ResolvedInstance> {
    let layout = Layout::new(layer_sizes, num_actions)?;
    let kernel = Kernel::new(&layout, kernel)?;
    if losses.len() != layout.num_pairs() {
        return Err(Error::structure(format!(
            "{} loss models for {} state-action pairs",
            losses.len(),
            layout.num_pairs()
        )));
    }
    for model in &losses {
        model.validate()?;
    }
    Ok(ResolvedInstance { layout, kernel, losses })
}

/// Writes an [`InstanceFile`] as pretty JSON (atomically, via a sibling
/// temp file).
pub fn save_instance_file(path: &Path, file: &InstanceFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)
        .map_err(|e| Error::parse(format!("encoding instance: {e}")))?;
    crate::harness::write_atomic(path, text.as_bytes())
}

/// One experiment: an instance, a mean schedule, a learner, and the run
/// dimensions. See the module docs for the TOML shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in summaries; defaults to `<learner>-<regime>`.
    #[serde(default)]
    pub label: Option<String>,
    /// Episodes per replica.
    pub t_max: usize,
    pub replicas: usize,
    pub master_seed: u64,
    pub learner: LearnerKind,
    /// Moment order the estimators are tuned for.
    pub alpha: f64,
    pub instance: InstanceSpec,
    pub regime: Regime,
    /// Scale the unknown-transition learning rate by beta (the canonical
    /// schedule) instead of using the bare inverse-root clock.
    #[serde(default = "default_true")]
    pub use_beta: bool,
    /// Aggregate per-episode invariant diagnostics into the results.
    #[serde(default)]
    pub record_diagnostics: bool,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Default output directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Exploration knob multiplying the canonical skipping scale C.
    /// Leave at 1 for the canonical learner.
    #[serde(default = "default_unit")]
    pub c_scale: f64,
    /// Exploration knob multiplying the canonical rate constant beta.
    #[serde(default = "default_unit")]
    pub beta_scale: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::config("t_max must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::config(format!("alpha {} outside (1, 2]", self.alpha)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol.is_finite()) {
            return Err(Error::config(format!("solver_tol {} must be positive", self.solver_tol)));
        }
        for (name, v) in [("c_scale", self.c_scale), ("beta_scale", self.beta_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} {v} must be positive")));
            }
        }
        self.regime.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse(format!("encoding config: {e}")))
    }

    /// Parses and validates the file at `path`.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("reading {}: {e}", path.display())))
        })?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => format!("{}-{}", self.learner.as_str(), self.regime.kind_str()),
        }
    }

    /// The seed replica `r` derives every draw from.
    pub fn replica_seed(&self, replica: usize) -> u64 {
        self.master_seed.wrapping_add(replica as u64)
    }
}
