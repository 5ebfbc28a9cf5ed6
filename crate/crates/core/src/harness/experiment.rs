use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::storage::{load_dataset, load_surrogate, save_dataset, save_surrogate, DataManifest};
use super::{HarnessError, Result};
use crate::metrics::{mse, EvalReport};
use crate::mf::{
    fit_linear_ar, linear_ar_pairs, plain_input, train_hf_only, train_lf_wno, train_mf, LfSource, LfSourceKind,
    Surrogate, TrainOutcome,
};
use crate::problems::allen_cahn::{rollout_allen_cahn, sample_initial_condition, subsample_state};
use crate::problems::{make_dataset, make_lf_dataset, Dataset, GridFunction, ProblemId, ProblemSpec};

pub const RESULTS_FILE: &str = "results.csv";
pub const RESULTS_HEADER: &str = "dataset_size,mfsm_mse,hfsm_mse,mse_lf";
pub const REPORT_FILE: &str = "report.csv";
pub const EXTRAS_FILE: &str = "extras.csv";
pub const FAILED_MARKER: &str = "FAILED";
const DATA_DIR: &str = "data";

/// One row of a results table. Missing surrogates leave their column empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsRow {
    pub dataset_size: usize,
    pub mfsm_mse: Option<f64>,
    pub hfsm_mse: Option<f64>,
    pub mse_lf: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ResultsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:e}",
            self.dataset_size,
            cell(self.mfsm_mse),
            cell(self.hfsm_mse),
            self.mse_lf
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || HarnessError::Config(format!("malformed results row `{line}`"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        Ok(Self {
            dataset_size: f[0].parse().map_err(|_| bad())?,
            mfsm_mse: opt(f[1])?,
            hfsm_mse: opt(f[2])?,
            mse_lf: f[3].parse().map_err(|_| bad())?,
        })
    }
}

pub fn write_results(path: &Path, rows: &[ResultsRow]) -> Result<()> {
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultsRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(HarnessError::Config(format!("{} lacks the results header", path.display())));
    }
    lines.filter(|l| !l.trim().is_empty()).map(ResultsRow::parse).collect()
}

/// The generated (or loaded) data of one experiment.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub hf: Dataset,
    pub test: Dataset,
    /// Low-fidelity pairs, present when a low-fidelity network is trained.
    pub lf: Option<Dataset>,
}

pub fn generate_data(config: &ExperimentConfig) -> Result<Datasets> {
    let seeds = config.data_seeds();
    let spec = &config.spec;
    Ok(Datasets {
        hf: make_dataset(spec, config.n_hf, seeds.hf)?,
        test: make_dataset(spec, config.n_test, seeds.test)?,
        lf: if config.lf_source == LfSourceKind::Wno {
            Some(make_lf_dataset(spec, config.n_lf, seeds.lf)?)
        } else {
            None
        },
    })
}

pub fn save_data(dir: &Path, config: &ExperimentConfig, data: &Datasets) -> Result<()> {
    fs::create_dir_all(dir)?;
    let seeds = config.data_seeds();
    let mut manifest = DataManifest::new(&config.spec);
    manifest.sets.push(save_dataset(dir, "hf_train", &data.hf, seeds.hf)?);
    manifest.sets.push(save_dataset(dir, "test", &data.test, seeds.test)?);
    if let Some(lf) = &data.lf {
        manifest.sets.push(save_dataset(dir, "lf_train", lf, seeds.lf)?);
    }
    manifest.save(dir)
}

pub fn load_data(dir: &Path) -> Result<(ProblemSpec, Datasets)> {
    let m = DataManifest::load(dir)?;
    let get = |name: &str| -> Result<Dataset> {
        let entry = m
            .set(name)
            .ok_or_else(|| HarnessError::Config(format!("{} has no `{name}` set", dir.display())))?;
        load_dataset(dir, &m.spec, entry)
    };
    let lf = match m.set("lf_train") {
        Some(e) => Some(load_dataset(dir, &m.spec, e)?),
        None => None,
    };
    let data = Datasets {
        hf: get("hf_train")?,
        test: get("test")?,
        lf,
    };
    Ok((m.spec, data))
}

fn data_dir(config: &ExperimentConfig) -> PathBuf {
    config.data_dir.clone().unwrap_or_else(|| config.out.join(DATA_DIR))
}

/// Uses `data_dir` when configured, otherwise generates and stores the data.
fn obtain_data(config: &ExperimentConfig) -> Result<Datasets> {
    let Some(dir) = &config.data_dir else {
        let data = generate_data(config)?;
        save_data(&data_dir(config), config, &data)?;
        return Ok(data);
    };
    let (spec, data) = load_data(dir)?;
    if spec != config.spec {
        return Err(HarnessError::Config(format!("{} was generated for a different problem spec", dir.display())));
    }
    let lf_ok = config.lf_source != LfSourceKind::Wno || data.lf.as_ref().is_some_and(|d| d.len() == config.n_lf);
    if data.hf.len() != config.n_hf * samples_per_draw(config) || data.test.len() != config.n_test * samples_per_draw(config) || !lf_ok {
        return Err(HarnessError::Config(format!("{} holds different sample counts than configured", dir.display())));
    }
    Ok(data)
}

/// Allen–Cahn turns each drawn trajectory into one pair per snapshot.
fn samples_per_draw(config: &ExperimentConfig) -> usize {
    if config.problem == ProblemId::AllenCahn {
        config.spec.allen_cahn.steps() / config.spec.allen_cahn.subsample
    } else {
        1
    }
}

/// Mean squared discrepancy between the native low-fidelity model, moved
/// onto the high-fidelity grid, and the exact outputs.
pub fn mse_lf(spec: &ProblemSpec, test: &Dataset) -> Result<f64> {
    let pairs = linear_ar_pairs(test, &LfSource::native(spec))?;
    let (lf, hf): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(mse(&lf, &hf)?)
}

fn outputs(d: &Dataset) -> Vec<GridFunction> {
    d.samples.iter().map(|s| s.output.clone()).collect()
}

fn evaluate_surrogate(s: &Surrogate, test: &Dataset) -> Result<EvalReport> {
    Ok(EvalReport::compute(&s.predict_dataset(test)?, &outputs(test), false)?)
}

/// Autoregressive prediction of `steps` snapshots from `u0`.
pub fn rollout(s: &Surrogate, spec: &ProblemSpec, u0: &GridFunction, steps: usize) -> Result<Vec<GridFunction>> {
    let lf_grid = spec.lf_grid();
    let mut u = u0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        u = match s {
            Surrogate::Mf(mf) => mf.predict(&u, &subsample_state(&u, &lf_grid)?)?,
            Surrogate::HfOnly(net) => net.predict_one(&plain_input(&u)?)?,
        };
        out.push(u.clone());
    }
    Ok(out)
}

/// Rollout MSE over `n` unseen initial conditions, against the fine solver.
pub fn rollout_mse(s: &Surrogate, config: &ExperimentConfig, n: usize) -> Result<f64> {
    let ac = &config.spec.allen_cahn;
    let base = config.data_seeds().rollout;
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for i in 0..n {
        let u0 = sample_initial_condition(ac, base.wrapping_add(i as u64))?;
        let exact = rollout_allen_cahn(&u0, ac)?;
        match rollout(s, &config.spec, &u0, exact.len()) {
            Ok(p) => pred.extend(p),
            Err(e) => {
                log::warn!("rollout from initial condition {i} broke down: {e}");
                return Ok(f64::INFINITY);
            }
        }
        truth.extend(exact);
    }
    let m = mse(&pred, &truth)?;
    Ok(if m.is_finite() { m } else { f64::INFINITY })
}

/// Everything an experiment computed.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub row: ResultsRow,
    pub mf: Option<(Surrogate, TrainOutcome, EvalReport)>,
    pub hf: Option<(Surrogate, TrainOutcome, EvalReport)>,
    /// Test MSE of the trained low-fidelity network against the native model.
    pub lf_wno_mse: Option<f64>,
    pub linear_ar_mse: Option<f64>,
    pub mf_rollout_mse: Option<f64>,
    pub hf_rollout_mse: Option<f64>,
}

impl ExperimentOutcome {
    /// Named scalar results beyond the table row, in a fixed order.
    pub fn extras(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut push = |k, v: Option<f64>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("mfsm_r2", self.mf.as_ref().map(|m| m.2.r2));
        push("hfsm_r2", self.hf.as_ref().map(|m| m.2.r2));
        push("lf_wno_mse", self.lf_wno_mse);
        push("linear_ar_mse", self.linear_ar_mse);
        push("mfsm_rollout_mse", self.mf_rollout_mse);
        push("hfsm_rollout_mse", self.hf_rollout_mse);
        out
    }
}

fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,loss")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(f, "{i},{l:e}")?;
    }
    Ok(())
}

fn run_inner(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let out = &config.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    let started = Instant::now();
    let data = obtain_data(config)?;
    let spec = &config.spec;
    log::info!("{}: data ready after {:.1?}", config.problem, started.elapsed());

    let native = LfSource::native(spec);
    let (lf, lf_wno_mse) = if config.lf_source == LfSourceKind::Wno {
        let lf_data = data.lf.as_ref().expect("low-fidelity set is generated for wno sources");
        let (source, outcome) = train_lf_wno(lf_data, &config.lf_net, &config.lf_train)?;
        write_history(&out.join("lf_loss.csv"), &outcome.history)?;
        let probes: Vec<_> = data.test.samples.iter().filter_map(|s| s.lf_input.clone()).collect();
        let got = probes.iter().map(|p| source.query(p)).collect::<Result<Vec<_>, _>>()?;
        let want = probes.iter().map(|p| native.query(p)).collect::<Result<Vec<_>, _>>()?;
        let m = mse(&got, &want)?;
        log::info!("{}: low-fidelity network test MSE {m:e}", config.problem);
        (source, Some(m))
    } else {
        (native.clone(), None)
    };

    let mse_lf = mse_lf(spec, &data.test)?;
    let mf = if config.ablation.is_none() {
        let (s, outcome) = train_mf(&data.hf, lf, &config.hf_net, &config.train)?;
        let s = Surrogate::Mf(s);
        let report = evaluate_surrogate(&s, &data.test)?;
        log::info!("{}: MFSM test MSE {:e} after {:.1?}", config.problem, report.mse, started.elapsed());
        Some((s, outcome, report))
    } else {
        None
    };
    let hf = {
        let outcome = train_hf_only(&data.hf, &config.hf_net, &config.train)?;
        let s = Surrogate::HfOnly(outcome.model.clone());
        let report = evaluate_surrogate(&s, &data.test)?;
        log::info!("{}: HFSM test MSE {:e} after {:.1?}", config.problem, report.mse, started.elapsed());
        Some((s, outcome, report))
    };
    let linear_ar_mse = if data.hf.len() >= 2 {
        let model = fit_linear_ar(&linear_ar_pairs(&data.hf, &native)?)?;
        let pairs = linear_ar_pairs(&data.test, &native)?;
        let pred = pairs.iter().map(|(l, _)| model.predict(l)).collect::<Result<Vec<_>, _>>()?;
        let truth: Vec<_> = pairs.into_iter().map(|(_, h)| h).collect();
        Some(mse(&pred, &truth)?)
    } else {
        None
    };
    let (mut mf_rollout_mse, mut hf_rollout_mse) = (None, None);
    if config.problem == ProblemId::AllenCahn && config.rollout_ics > 0 {
        if let Some((s, ..)) = &mf {
            mf_rollout_mse = Some(rollout_mse(s, config, config.rollout_ics)?);
        }
        if let Some((s, ..)) = &hf {
            hf_rollout_mse = Some(rollout_mse(s, config, config.rollout_ics)?);
        }
    }

    let outcome = ExperimentOutcome {
        row: ResultsRow {
            dataset_size: config.n_hf,
            mfsm_mse: mf.as_ref().map(|m| m.2.mse),
            hfsm_mse: hf.as_ref().map(|m| m.2.mse),
            mse_lf,
        },
        mf,
        hf,
        lf_wno_mse,
        linear_ar_mse,
        mf_rollout_mse,
        hf_rollout_mse,
    };
    for (name, entry) in [("mfsm", &outcome.mf), ("hfsm", &outcome.hf)] {
        if let Some((s, train, report)) = entry {
            save_surrogate(out, name, s, spec)?;
            write_history(&out.join(format!("{name}_loss.csv")), &train.history)?;
            report.write_csv(fs::File::create(out.join(format!("{name}_eval.csv")))?)?;
        }
    }
    let mut extras = String::from("metric,value\n");
    for (k, v) in outcome.extras() {
        extras.push_str(&format!("{k},{v:e}\n"));
    }
    fs::write(out.join(EXTRAS_FILE), extras)?;
    write_results(&out.join(RESULTS_FILE), std::slice::from_ref(&outcome.row))?;
    log::info!("{}: finished in {:.1?}", config.problem, started.elapsed());
    Ok(outcome)
}

/// Generates or loads data, trains the configured surrogates, evaluates them
/// on the held-out set and writes the results row, evaluation tables and
/// serialized surrogates under `config.out`.
///
/// On failure the results row is removed and a `FAILED` marker holding the
/// error is left in the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let _ = fs::remove_file(config.out.join(FAILED_MARKER));
    match run_inner(config) {
        Ok(o) => Ok(o),
        Err(e) => {
            let _ = fs::remove_file(config.out.join(RESULTS_FILE));
            if fs::create_dir_all(&config.out).is_ok() {
                let _ = fs::write(config.out.join(FAILED_MARKER), format!("{e}\n"));
            }
            Err(e)
        }
    }
}

/// Recomputes a finished run's results row from its stored config, data and
/// surrogates.
pub fn evaluate_run(out: &Path) -> Result<ResultsRow> {
    let config = ExperimentConfig::load(&out.join("config.toml"))?;
    let dir = config.data_dir.clone().unwrap_or_else(|| out.join(DATA_DIR));
    let (spec, data) = load_data(&dir)?;
    let score = |name: &str| -> Result<Option<f64>> {
        if !out.join(format!("{name}.toml")).exists() {
            return Ok(None);
        }
        let s = load_surrogate(out, name)?;
        Ok(Some(evaluate_surrogate(&s, &data.test)?.mse))
    };
    Ok(ResultsRow {
        dataset_size: config.n_hf,
        mfsm_mse: score("mfsm")?,
        hfsm_mse: score("hfsm")?,
        mse_lf: mse_lf(&spec, &data.test)?,
    })
}

/// Collects the results rows under `dir` into `report.csv`, ordered by
/// dataset size. Runs in subdirectories take precedence over a row in `dir`.
pub fn report(dir: &Path) -> Result<Vec<ResultsRow>> {
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(RESULTS_FILE).is_file())
        .collect();
    subdirs.sort();
    let mut rows = Vec::new();
    for d in &subdirs {
        rows.extend(read_results(&d.join(RESULTS_FILE))?);
    }
    if rows.is_empty() && dir.join(RESULTS_FILE).is_file() {
        rows = read_results(&dir.join(RESULTS_FILE))?;
    }
    if rows.is_empty() {
        return Err(HarnessError::Config(format!("no finished runs under {}", dir.display())));
    }
    rows.sort_by_key(|r| r.dataset_size);
    write_results(&dir.join(REPORT_FILE), &rows)?;
    Ok(rows)
}

/// Runs one experiment per high-fidelity dataset size, each in `out/n<size>`,
/// then writes the combined report.
pub fn sweep(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<ResultsRow>> {
    if sizes.is_empty() {
        return Err(HarnessError::Config("no dataset sizes to sweep".into()));
    }
    for &n in sizes {
        let run = ExperimentConfig {
            n_hf: n,
            n_lf: config.n_lf.max(n),
            out: config.out.join(format!("n{n}")),
            ..config.clone()
        };
        run_experiment(&run)?;
    }
    report(&config.out)
}
