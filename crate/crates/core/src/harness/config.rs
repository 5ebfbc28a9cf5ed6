use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::mf::{LfSourceKind, TrainConfig};
use crate::problems::{ProblemId, ProblemSpec};
use crate::tensor::AdamConfig;
use crate::wavelets::WaveletFamily;
use crate::wno::WnoConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Train only the plain network: no low-fidelity channel, no residual.
    HfOnly,
}

/// One experiment: data sizes, networks, training and where results go.
///
/// In a config file every key is optional except `version` and `problem`;
/// missing keys take the problem's preset and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemId,
    /// Low-fidelity samples, used when training a low-fidelity network.
    pub n_lf: usize,
    pub n_hf: usize,
    /// Held-out samples (trajectories for Allen–Cahn).
    pub n_test: usize,
    pub seed: u64,
    pub lf_source: LfSourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    pub out: PathBuf,
    /// Existing directory with pre-generated data to load instead of generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Unseen initial conditions for the autoregressive rollout check; 0 skips it.
    pub rollout_ics: usize,
    pub spec: ProblemSpec,
    pub hf_net: WnoConfig,
    pub lf_net: WnoConfig,
    pub train: TrainConfig,
    pub lf_train: TrainConfig,
}

fn net(width: usize, n_layers: usize, levels: usize, wavelet: WaveletFamily, proj_hidden: usize) -> WnoConfig {
    WnoConfig {
        width,
        n_layers,
        levels,
        wavelet,
        proj_hidden,
        ..WnoConfig::default()
    }
}

fn schedule(epochs: usize, batch_size: usize, lr: f64, decay_every: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        decay_every,
        decay_factor: 0.5,
        ..TrainConfig::default()
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for a problem.
    pub fn preset(problem: ProblemId) -> Self {
        let mut spec = ProblemSpec::new(problem);
        let (hf_net, train, n_lf, n_hf, n_test, lf_source, rollout_ics) = match problem {
            ProblemId::B1 | ProblemId::B3 | ProblemId::B4 | ProblemId::B5 => (
                net(32, 4, 3, WaveletFamily::Db4, 64),
                schedule(1000, 10, 2e-3, 200),
                200,
                10,
                200,
                LfSourceKind::Analytic,
                0,
            ),
            ProblemId::B2 => (
                net(24, 4, 2, WaveletFamily::Db4, 48),
                schedule(800, 10, 2e-3, 200),
                200,
                10,
                200,
                LfSourceKind::Analytic,
                0,
            ),
            ProblemId::Poisson => (
                net(32, 4, 3, WaveletFamily::Db4, 64),
                schedule(1000, 25, 2e-3, 200),
                200,
                25,
                200,
                LfSourceKind::Solver,
                0,
            ),
            ProblemId::Heat => (
                net(24, 4, 2, WaveletFamily::Db4, 48),
                schedule(800, 25, 2e-3, 200),
                1000,
                25,
                200,
                LfSourceKind::Solver,
                0,
            ),
            ProblemId::AllenCahn => {
                spec = ProblemSpec::allen_cahn_with_nodes(33);
                (
                    net(16, 3, 2, WaveletFamily::Db4, 32),
                    schedule(40, 50, 2e-3, 12),
                    20,
                    20,
                    4,
                    LfSourceKind::Solver,
                    10,
                )
            }
        };
        // The heat coarse grid has only 6 cells per side: one level of a short
        // filter keeps it uncropped.
        let (lf_net, lf_train) = match problem {
            ProblemId::Heat => (net(32, 4, 1, WaveletFamily::Db2, 64), schedule(200, 25, 2e-3, 50)),
            _ => (hf_net.clone(), train.clone()),
        };
        Self {
            version: CONFIG_VERSION,
            problem,
            n_lf,
            n_hf,
            n_test,
            seed: 0,
            lf_source,
            ablation: None,
            out: PathBuf::from("runs").join(problem.to_string()),
            data_dir: None,
            rollout_ics,
            spec,
            hf_net,
            lf_net,
            train,
            lf_train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.spec.problem != self.problem {
            return bad(format!("spec is for {} but the experiment is {}", self.spec.problem, self.problem));
        }
        if self.n_hf == 0 || self.n_test == 0 {
            return bad("n_hf and n_test must be positive".into());
        }
        if self.lf_source == LfSourceKind::Wno && self.n_hf > self.n_lf {
            return bad(format!(
                "a trained low-fidelity network needs n_hf <= n_lf, got {} > {}",
                self.n_hf, self.n_lf
            ));
        }
        let benchmark = self.problem.benchmark().is_some();
        match (self.lf_source, benchmark) {
            (LfSourceKind::Analytic, false) => return bad(format!("{} has no closed-form low-fidelity model", self.problem)),
            (LfSourceKind::Solver, true) => return bad(format!("{} has no numerical solver", self.problem)),
            _ => {}
        }
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return bad(format!("data_dir {} does not exist", dir.display()));
            }
        }
        self.spec.validate()?;
        self.hf_net.validate()?;
        self.lf_net.validate()?;
        self.train.validate()?;
        self.lf_train.validate()?;
        Ok(())
    }

    /// Parses a config, filling missing keys from the problem's preset.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let problem: ProblemId = match user.get("problem") {
            Some(v) => v.clone().try_into()?,
            None => return Err(HarnessError::Config("missing key `problem`".into())),
        };
        if !user.contains_key("version") {
            return Err(HarnessError::Config("missing key `version`".into()));
        }
        let mut merged = toml::Table::try_from(Self::preset(problem))?;
        merge(&mut merged, user);
        let config: Self = toml::Value::Table(merged).try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Base seeds of the three generated datasets. Sample `j` of a set uses
    /// its base plus `j`.
    pub fn data_seeds(&self) -> DataSeeds {
        let base = self.seed.wrapping_mul(1 << 32);
        DataSeeds {
            hf: base,
            test: base.wrapping_add(1 << 30),
            lf: base.wrapping_add(2 << 30),
            rollout: base.wrapping_add(3 << 30),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataSeeds {
    pub hf: u64,
    pub test: u64,
    pub lf: u64,
    pub rollout: u64,
}

/// Overlays `user` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(ProblemId::B1)
    }
}

