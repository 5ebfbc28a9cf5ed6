//! Datasets and surrogates on disk: a TOML manifest next to array containers.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::container::{load_array, save_array};
use super::{HarnessError, Result};
use crate::mf::{LfSource, LfSourceKind, MfSurrogate, Normalizer, Surrogate, TrainedWno};
use crate::problems::{Dataset, Fidelity, Grid, GridFunction, ProblemSpec, Sample};
use crate::tensor::Tensor;
use crate::wno::{WnoManifest, WnoParams};

pub const DATA_MANIFEST: &str = "manifest.toml";
pub const STORAGE_VERSION: u32 = 1;

/// Files of one stored dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetEntry {
    pub name: String,
    pub fidelity: Fidelity,
    pub samples: usize,
    pub base_seed: u64,
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_input: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub version: u32,
    pub spec: ProblemSpec,
    pub sets: Vec<SetEntry>,
}

impl DataManifest {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self {
            version: STORAGE_VERSION,
            spec: spec.clone(),
            sets: Vec::new(),
        }
    }

    pub fn set(&self, name: &str) -> Option<&SetEntry> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(DATA_MANIFEST), toml::to_string(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: Self = toml::from_str(&fs::read_to_string(dir.join(DATA_MANIFEST))?)?;
        if m.version != STORAGE_VERSION {
            return Err(HarnessError::Config(format!("data manifest version {} is not supported", m.version)));
        }
        Ok(m)
    }
}

fn stack(fields: &[&GridFunction]) -> Result<Tensor> {
    let first = fields[0];
    let mut shape = vec![fields.len(), first.channels];
    shape.extend(first.grid.extents());
    let data = fields.iter().flat_map(|f| f.values.iter().copied()).collect();
    Ok(Tensor::new(shape, data)?)
}

fn unstack(t: &Tensor, grid: &Grid, file: &str) -> Result<Vec<GridFunction>> {
    let shape = t.shape();
    if shape.len() != 2 + grid.dim() || shape[2..] != grid.extents()[..] {
        return Err(HarnessError::Config(format!(
            "{file} has shape {shape:?}, expected [N, C, {:?}]",
            grid.extents()
        )));
    }
    let c = shape[1];
    t.data()
        .chunks(c * grid.len())
        .map(|v| Ok(GridFunction::new(grid.clone(), c, v.to_vec())?))
        .collect()
}

/// Writes `data` as `<name>_input.mfwn`, `<name>_output.mfwn` and, when every
/// sample has one, `<name>_lf_input.mfwn`.
pub fn save_dataset(dir: &Path, name: &str, data: &Dataset, base_seed: u64) -> Result<SetEntry> {
    if data.is_empty() {
        return Err(HarnessError::Config(format!("dataset {name} is empty")));
    }
    let file = |part: &str| format!("{name}_{part}.mfwn");
    let inputs: Vec<_> = data.samples.iter().map(|s| &s.input).collect();
    let outputs: Vec<_> = data.samples.iter().map(|s| &s.output).collect();
    save_array(dir.join(file("input")), &stack(&inputs)?)?;
    save_array(dir.join(file("output")), &stack(&outputs)?)?;
    let lf: Option<Vec<_>> = data.samples.iter().map(|s| s.lf_input.as_ref()).collect();
    let lf_input = match lf {
        Some(lf) => {
            save_array(dir.join(file("lf_input")), &stack(&lf)?)?;
            Some(file("lf_input"))
        }
        None => None,
    };
    Ok(SetEntry {
        name: name.to_string(),
        fidelity: data.fidelity,
        samples: data.len(),
        base_seed,
        input: file("input"),
        output: file("output"),
        lf_input,
    })
}

pub fn load_dataset(dir: &Path, spec: &ProblemSpec, entry: &SetEntry) -> Result<Dataset> {
    let (in_grid, lf_grid) = match entry.fidelity {
        Fidelity::High => (spec.hf_grid(), spec.lf_grid()),
        Fidelity::Low => (spec.lf_grid(), spec.lf_grid()),
    };
    let inputs = unstack(&load_array(dir.join(&entry.input))?, &in_grid, &entry.input)?;
    let outputs = unstack(&load_array(dir.join(&entry.output))?, &in_grid, &entry.output)?;
    let lf_inputs = match &entry.lf_input {
        Some(f) => unstack(&load_array(dir.join(f))?, &lf_grid, f)?.into_iter().map(Some).collect(),
        None => vec![None; inputs.len()],
    };
    if outputs.len() != inputs.len() || lf_inputs.len() != inputs.len() || inputs.len() != entry.samples {
        return Err(HarnessError::Config(format!("dataset {} has inconsistent sample counts", entry.name)));
    }
    let samples = inputs
        .into_iter()
        .zip(outputs)
        .zip(lf_inputs)
        .map(|((input, output), lf_input)| Sample {
            input,
            output,
            lf_input,
        })
        .collect();
    Ok(Dataset {
        fidelity: entry.fidelity,
        samples,
    })
}

/// A stored network: architecture, standardization and its parameter blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetEntry {
    pub params: String,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub net: WnoManifest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    Mf,
    HfOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateManifest {
    pub version: u32,
    pub kind: SurrogateKind,
    /// Transfer of low-fidelity solutions onto the high-fidelity grid.
    pub interp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_source: Option<LfSourceKind>,
    pub spec: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_net: Option<NetEntry>,
    pub net: NetEntry,
}

const INTERP: &str = "multilinear";

fn save_net(dir: &Path, file: &str, net: &TrainedWno) -> Result<NetEntry> {
    save_array(dir.join(file), &Tensor::from_vec(net.params.to_flat())?)?;
    Ok(NetEntry {
        params: file.to_string(),
        input_norm: net.input_norm.clone(),
        output_norm: net.output_norm.clone(),
        net: net.params.manifest(),
    })
}

fn load_net(dir: &Path, entry: &NetEntry) -> Result<TrainedWno> {
    let flat = load_array(dir.join(&entry.params))?;
    Ok(TrainedWno {
        params: WnoParams::from_flat(&entry.net, flat.data())?,
        input_norm: entry.input_norm.clone(),
        output_norm: entry.output_norm.clone(),
    })
}

/// Writes `<name>.toml` plus parameter containers.
pub fn save_surrogate(dir: &Path, name: &str, s: &Surrogate, spec: &ProblemSpec) -> Result<()> {
    let (kind, lf_source, lf_net, net) = match s {
        Surrogate::Mf(mf) => {
            let lf_net = match &mf.lf {
                LfSource::Wno(n) => Some(save_net(dir, &format!("{name}_lf_params.mfwn"), n)?),
                _ => None,
            };
            (SurrogateKind::Mf, Some(mf.lf.kind()), lf_net, &mf.net)
        }
        Surrogate::HfOnly(net) => (SurrogateKind::HfOnly, None, None, net),
    };
    let manifest = SurrogateManifest {
        version: STORAGE_VERSION,
        kind,
        interp: INTERP.into(),
        lf_source,
        spec: spec.clone(),
        lf_net,
        net: save_net(dir, &format!("{name}_params.mfwn"), net)?,
    };
    fs::write(dir.join(format!("{name}.toml")), toml::to_string(&manifest)?)?;
    Ok(())
}

pub fn load_surrogate(dir: &Path, name: &str) -> Result<Surrogate> {
    let m: SurrogateManifest = toml::from_str(&fs::read_to_string(dir.join(format!("{name}.toml")))?)?;
    if m.version != STORAGE_VERSION || m.interp != INTERP {
        return Err(HarnessError::Config(format!("surrogate {name} uses an unsupported format")));
    }
    let net = load_net(dir, &m.net)?;
    Ok(match m.kind {
        SurrogateKind::HfOnly => Surrogate::HfOnly(net),
        SurrogateKind::Mf => {
            let lf = match (m.lf_source, &m.lf_net) {
                (Some(LfSourceKind::Analytic), None) => LfSource::Analytic(m.spec.clone()),
                (Some(LfSourceKind::Solver), None) => LfSource::Solver(m.spec.clone()),
                (Some(LfSourceKind::Wno), Some(e)) => LfSource::Wno(Arc::new(load_net(dir, e)?)),
                _ => return Err(HarnessError::Config(format!("surrogate {name} has an inconsistent low-fidelity source"))),
            };
            Surrogate::Mf(MfSurrogate { lf, net })
        }
    })
}
