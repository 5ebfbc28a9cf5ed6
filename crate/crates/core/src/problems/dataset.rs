use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::allen_cahn::{self, periodic_grid, AllenCahnSpec};
use super::benchmarks::{b5_design, BenchFidelity, Benchmark};
use super::grf::GaussianField;
use super::grid::{Axis, Grid, GridFunction};
use super::heat::{heat_grid, solve_heat_fv};
use super::poisson::{poisson_grid, solve_poisson_fd};
use super::{ProblemError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    B1,
    B2,
    B3,
    B4,
    B5,
    Poisson,
    Heat,
    AllenCahn,
}

impl ProblemId {
    pub const ALL: [ProblemId; 8] = [
        ProblemId::B1,
        ProblemId::B2,
        ProblemId::B3,
        ProblemId::B4,
        ProblemId::B5,
        ProblemId::Poisson,
        ProblemId::Heat,
        ProblemId::AllenCahn,
    ];

    pub fn benchmark(self) -> Option<Benchmark> {
        match self {
            ProblemId::B1 => Some(Benchmark::B1),
            ProblemId::B2 => Some(Benchmark::B2),
            ProblemId::B3 => Some(Benchmark::B3),
            ProblemId::B4 => Some(Benchmark::B4),
            ProblemId::B5 => Some(Benchmark::B5),
            _ => None,
        }
    }

    /// Dataset sizes swept for this problem's results table.
    pub fn sweep_sizes(self) -> &'static [usize] {
        match self {
            ProblemId::B1 => &[2, 4, 6, 10],
            ProblemId::B2 => &[2, 6, 8, 10],
            ProblemId::B3 => &[4, 6, 10, 15],
            ProblemId::B4 | ProblemId::B5 => &[10],
            ProblemId::Poisson => &[5, 10, 20, 25],
            ProblemId::Heat => &[5, 10, 20, 25],
            ProblemId::AllenCahn => &[20],
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemId::B1 => "b1",
            ProblemId::B2 => "b2",
            ProblemId::B3 => "b3",
            ProblemId::B4 => "b4",
            ProblemId::B5 => "b5",
            ProblemId::Poisson => "poisson",
            ProblemId::Heat => "heat",
            ProblemId::AllenCahn => "allen-cahn",
        };
        f.write_str(s)
    }
}

impl FromStr for ProblemId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown problem `{s}`"))
    }
}

/// Everything needed to regenerate a problem's data. Fields that do not apply
/// to a problem keep their defaults and are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub problem: ProblemId,
    /// Points per axis of the high-fidelity grid.
    pub hf_extent: usize,
    /// Points per axis of the low-fidelity grid.
    pub lf_extent: usize,
    /// Benchmark parameter interval.
    pub k_range: [f64; 2],
    /// Squared-exponential lengthscale of the random input field.
    pub lengthscale: f64,
    pub allen_cahn: AllenCahnSpec,
}

impl ProblemSpec {
    pub fn new(problem: ProblemId) -> Self {
        let (hf, lf) = match problem {
            ProblemId::B2 => (32, 32),
            ProblemId::Poisson => (100, 10),
            ProblemId::Heat => (32, 6),
            ProblemId::AllenCahn => (65, 33),
            _ => (128, 128),
        };
        let k = problem.benchmark().map(|b| b.k_range()).unwrap_or((0.0, 0.0));
        Self {
            problem,
            hf_extent: hf,
            lf_extent: lf,
            k_range: [k.0, k.1],
            lengthscale: if problem == ProblemId::Heat { 0.25 } else { 0.1 },
            allen_cahn: AllenCahnSpec {
                nodes: hf,
                ..AllenCahnSpec::default()
            },
        }
    }

    /// Allen–Cahn spec on `nodes` points per side with the matching coarse grid.
    pub fn allen_cahn_with_nodes(nodes: usize) -> Self {
        let mut s = Self::new(ProblemId::AllenCahn);
        s.hf_extent = nodes;
        s.lf_extent = nodes / 2 + 1;
        s.allen_cahn.nodes = nodes;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProblemError::Invalid(m));
        match self.problem {
            ProblemId::Poisson => {
                if self.lf_extent < 3 || (self.hf_extent - 1) % (self.lf_extent - 1) != 0 {
                    return bad(format!(
                        "Poisson coarse nodes ({}) must nest in the fine nodes ({})",
                        self.lf_extent, self.hf_extent
                    ));
                }
            }
            ProblemId::AllenCahn => {
                self.allen_cahn.validate()?;
                if self.allen_cahn.nodes != self.hf_extent || self.lf_extent != self.hf_extent / 2 + 1 {
                    return bad("Allen-Cahn extents must be nodes and nodes/2 + 1".into());
                }
            }
            ProblemId::Heat => {}
            _ => {
                if self.hf_extent != self.lf_extent {
                    return bad("benchmark fidelities share one grid".into());
                }
                if !(self.k_range[0] < self.k_range[1]) {
                    return bad(format!("empty k range {:?}", self.k_range));
                }
            }
        }
        if self.hf_extent < 2 || self.lf_extent < 2 {
            return bad("grids need at least two points per axis".into());
        }
        Ok(())
    }

    pub fn spatial_dim(&self) -> usize {
        match self.problem {
            ProblemId::B2 | ProblemId::Heat | ProblemId::AllenCahn => 2,
            _ => 1,
        }
    }

    /// Channels of the raw input field `a` (before coordinates are appended).
    pub fn input_channels(&self) -> usize {
        self.problem.benchmark().map_or(1, Benchmark::input_channels)
    }

    /// Number of low-fidelity solution channels.
    pub fn lf_channels(&self) -> usize {
        self.problem.benchmark().map_or(1, Benchmark::lf_count)
    }

    pub fn hf_grid(&self) -> Grid {
        self.grid(self.hf_extent)
    }

    pub fn lf_grid(&self) -> Grid {
        self.grid(self.lf_extent)
    }

    fn grid(&self, n: usize) -> Grid {
        match self.problem {
            ProblemId::Poisson => poisson_grid(n),
            ProblemId::Heat => heat_grid(n),
            ProblemId::AllenCahn => periodic_grid(n, self.allen_cahn.length),
            ProblemId::B2 => Grid::new(vec![Axis::nodes(0.0, 1.0, n), Axis::nodes(0.0, 1.0, n)]),
            p => {
                let (lo, hi) = p.benchmark().unwrap().domain();
                Grid::new(vec![Axis::nodes(lo, hi, n)])
            }
        }
    }

    fn bench_k(&self, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        rand_chacha::ChaCha8Rng::seed_from_u64(seed).random_range(self.k_range[0]..self.k_range[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    High,
    Low,
}

/// One input/output pair. `lf_input` is the low-fidelity counterpart of
/// `input`, present on high-fidelity samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: GridFunction,
    pub output: GridFunction,
    pub lf_input: Option<GridFunction>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub fidelity: Fidelity,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn tag<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| ProblemError::Sample {
        index,
        source: Box::new(e),
    })
}

fn bench_input(b: Benchmark, spec: &ProblemSpec, grid: &Grid, design: &[f64], seed: u64) -> Result<GridFunction> {
    let k = spec.bench_k(seed);
    let c = b.input_channels();
    let n = grid.len();
    let mut values = vec![0.0; c * n];
    for p in 0..n {
        let d = design.get(p * c..(p + 1) * c);
        for (ch, v) in b.input(k, &grid.point(p), d).into_iter().enumerate() {
            values[ch * n + p] = v;
        }
    }
    GridFunction::new(grid.clone(), c, values)
}

fn bench_eval(b: Benchmark, fids: &[BenchFidelity], a: &GridFunction) -> Result<GridFunction> {
    let n = a.points();
    let mut values = vec![0.0; fids.len() * n];
    let mut av = vec![0.0; a.channels];
    for p in 0..n {
        for (c, v) in av.iter_mut().enumerate() {
            *v = a.values[c * n + p];
        }
        let x = a.grid.point(p);
        for (ch, &f) in fids.iter().enumerate() {
            values[ch * n + p] = b.eval(f, &av, &x)?;
        }
    }
    GridFunction::new(a.grid.clone(), fids.len(), values)
}

fn lf_fidelities(b: Benchmark) -> Vec<BenchFidelity> {
    (0..b.lf_count()).map(BenchFidelity::Low).collect()
}

/// Low-fidelity solution(s) for a low-fidelity input, on that input's grid.
pub fn lf_solution(spec: &ProblemSpec, lf_input: &GridFunction) -> Result<GridFunction> {
    match spec.problem {
        ProblemId::Poisson => solve_poisson_fd(lf_input),
        ProblemId::Heat => solve_heat_fv(&lf_input.map(f64::exp)),
        ProblemId::AllenCahn => {
            let ac = &spec.allen_cahn;
            allen_cahn::step_allen_cahn(lf_input, ac.epsilon, ac.dt * ac.subsample as f64)
        }
        p => {
            let b = p.benchmark().unwrap();
            bench_eval(b, &lf_fidelities(b), lf_input)
        }
    }
}

fn points(grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.len()).map(|p| grid.point(p)).collect()
}

fn split(grid: &Grid, values: &[f64]) -> Result<GridFunction> {
    GridFunction::new(grid.clone(), 1, values.to_vec())
}

/// High-fidelity dataset of `n` samples (for Allen–Cahn, `n` trajectories).
/// Every sample carries its low-fidelity input.
pub fn make_dataset(spec: &ProblemSpec, n: usize, base_seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(ProblemError::Invalid("a dataset needs at least one sample".into()));
    }
    let hf = spec.hf_grid();
    let lf = spec.lf_grid();
    let seed = |j: usize| base_seed.wrapping_add(j as u64);
    let mut samples = Vec::with_capacity(n);
    match spec.problem {
        ProblemId::Poisson => {
            let field = GaussianField::new(&points(&hf), &[spec.lengthscale])?;
            let stride = (spec.hf_extent - 1) / (spec.lf_extent - 1);
            for j in 0..n {
                let g = split(&hf, &field.sample(seed(j)))?;
                let coarse: Vec<f64> = g.values.iter().step_by(stride).copied().collect();
                let u = tag(j, solve_poisson_fd(&g))?;
                samples.push(Sample {
                    lf_input: Some(split(&lf, &coarse)?),
                    input: g,
                    output: u,
                });
            }
        }
        ProblemId::Heat => {
            let mut pts = points(&hf);
            pts.extend(points(&lf));
            let field = GaussianField::new(&pts, &[spec.lengthscale, spec.lengthscale])?;
            let m = hf.len();
            for j in 0..n {
                let z = field.sample(seed(j));
                let log_a = split(&hf, &z[..m])?;
                let u = tag(j, solve_heat_fv(&log_a.map(f64::exp)))?;
                samples.push(Sample {
                    input: log_a,
                    output: u,
                    lf_input: Some(split(&lf, &z[m..])?),
                });
            }
        }
        ProblemId::AllenCahn => {
            let ac = &spec.allen_cahn;
            for j in 0..n {
                let u0 = allen_cahn::sample_initial_condition(ac, seed(j))?;
                let snaps = tag(j, allen_cahn::rollout_allen_cahn(&u0, ac))?;
                let mut prev = u0;
                for next in snaps {
                    samples.push(Sample {
                        lf_input: Some(allen_cahn::subsample_state(&prev, &lf)?),
                        input: prev,
                        output: next.clone(),
                    });
                    prev = next;
                }
            }
        }
        p => {
            let b = p.benchmark().unwrap();
            let design = if b == Benchmark::B5 { b5_design(hf.len()) } else { Vec::new() };
            for j in 0..n {
                let a = bench_input(b, spec, &hf, &design, seed(j))?;
                let u = tag(j, bench_eval(b, &[BenchFidelity::High], &a))?;
                samples.push(Sample {
                    lf_input: Some(a.clone()),
                    input: a,
                    output: u,
                });
            }
        }
    }
    Ok(Dataset {
        fidelity: Fidelity::High,
        samples,
    })
}

/// Low-fidelity dataset of `n` samples on the low-fidelity grid, for training
/// a surrogate of the low-fidelity solver. Allen–Cahn yields one-step pairs
/// from `n` coarse trajectories.
pub fn make_lf_dataset(spec: &ProblemSpec, n: usize, base_seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(ProblemError::Invalid("a dataset needs at least one sample".into()));
    }
    let lf = spec.lf_grid();
    let seed = |j: usize| base_seed.wrapping_add(j as u64);
    let mut samples = Vec::with_capacity(n);
    let mut push = |j: usize, input: GridFunction| -> Result<()> {
        let output = tag(j, lf_solution(spec, &input))?;
        samples.push(Sample {
            input,
            output,
            lf_input: None,
        });
        Ok(())
    };
    match spec.problem {
        ProblemId::Poisson | ProblemId::Heat => {
            let ls = vec![spec.lengthscale; spec.spatial_dim()];
            let field = GaussianField::new(&points(&lf), &ls)?;
            for j in 0..n {
                push(j, split(&lf, &field.sample(seed(j)))?)?;
            }
        }
        ProblemId::AllenCahn => {
            let ac = &spec.allen_cahn;
            let coarse = AllenCahnSpec {
                nodes: spec.lf_extent,
                dt: ac.dt * ac.subsample as f64,
                subsample: 1,
                ..ac.clone()
            };
            for j in 0..n {
                let u0 = allen_cahn::sample_initial_condition(ac, seed(j))?;
                let c0 = allen_cahn::subsample_state(&u0, &lf)?;
                let snaps = tag(j, allen_cahn::rollout_allen_cahn(&c0, &coarse))?;
                push(j, c0)?;
                for s in &snaps[..snaps.len() - 1] {
                    push(j, s.clone())?;
                }
            }
        }
        p => {
            let b = p.benchmark().unwrap();
            let design = if b == Benchmark::B5 { b5_design(lf.len()) } else { Vec::new() };
            for j in 0..n {
                push(j, bench_input(b, spec, &lf, &design, seed(j))?)?;
            }
        }
    }
    Ok(Dataset {
        fidelity: Fidelity::Low,
        samples,
    })
}
