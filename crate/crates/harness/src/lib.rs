//! Experiment runner around `netopt-core`: JSON configs, metric files and
//! parameter sweeps.
//!
//! Every run writes a metrics CSV with one row per slot and a summary JSON
//! whose numbers can all be recomputed from that CSV.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use netopt_core::admm::{reference_solve, AdmmParams, AdmmSolver, Reference, ReferenceOptions};
use netopt_core::baselines::{ProximalParams, ProximalSolver, QcaParams, QcaSolver};
use netopt_core::driver::{
    fit_linear_rate, run, IterationMetrics, RunOptions, RunOutcome, SlotAlgorithm, StopRule,
};
use netopt_core::network::{generate_er_instance, ErParams, NetworkInstance};
use netopt_core::queue::QueueTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: [&str; 8] = [
    "slot",
    "rel_err",
    "residual",
    "util_gap",
    "lyapunov",
    "kkt_res",
    "virt_queue",
    "phys_queue",
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("diverged at slot {slot}: norm {norm:e}")]
    Diverged { slot: usize, norm: f64 },
    #[error("did not converge within {slots} slots (last error {last:e})")]
    NotConverged { slots: usize, last: f64 },
    #[error(transparent)]
    Core(netopt_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<netopt_core::Error> for HarnessError {
    fn from(e: netopt_core::Error) -> Self {
        use netopt_core::Error as E;
        match e {
            E::Slot { source, .. } => (*source).into(),
            E::Diverged { slot, norm } => HarnessError::Diverged { slot, norm },
            E::NotConverged { slots, residual } => HarnessError::NotConverged {
                slots,
                last: residual,
            },
            E::InvalidParameter(msg) => HarnessError::Config(msg),
            other => HarnessError::Core(other),
        }
    }
}

impl HarnessError {
    /// 2 for bad configs, 3 for divergence, 4 for an exhausted budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Diverged { .. } => 3,
            HarnessError::NotConverged { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    File(PathBuf),
    Generate(ErParams),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Admm,
    Qca,
    Proximal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum ReferencePolicy {
    /// Solve with the ADMM parameters of the config to `tight_tol`.
    Compute {
        #[serde(default)]
        options: ReferenceOptions,
    },
    Load {
        path: PathBuf,
    },
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum ChannelMode {
    #[default]
    Static,
    /// Each slot redraws every capacity uniformly on `[0, 2C_l]`.
    Fading { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_slots: usize,
    /// Relative error that counts as converged when a reference exists.
    pub target_rel_err: f64,
    /// Stop as soon as the target is met instead of running the full budget.
    pub stop_early: bool,
    /// Lyapunov value and KKT residual per slot (ADMM only).
    pub diagnostics: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_slots: 5000,
            target_rel_err: 1e-6,
            stop_early: false,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    /// Final `(x, r, λ)`.
    pub state: Option<PathBuf>,
    /// The reference actually used, for reuse with `load`.
    pub reference: Option<PathBuf>,
    /// Total and largest physical queue per slot.
    pub queues: Option<PathBuf>,
    /// Write every `(n, d)` queue per slot instead of the two aggregates.
    pub queues_wide: bool,
    /// One JSON line per slot with the time-sharing schedule (wireless ADMM).
    pub schedule: Option<PathBuf>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            metrics: "metrics.csv".into(),
            summary: "summary.json".into(),
            state: None,
            reference: None,
            queues: None,
            queues_wide: false,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub admm: AdmmParams,
    #[serde(default)]
    pub qca: QcaParams,
    #[serde(default)]
    pub proximal: ProximalParams,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub reference: ReferencePolicy,
    #[serde(default)]
    pub channel: ChannelMode,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InstanceSource::File(p) = &mut self.instance {
            fix(p);
        }
        if let ReferencePolicy::Load { path } = &mut self.reference {
            fix(path);
        }
        let o = &mut self.outputs;
        fix(&mut o.metrics);
        fix(&mut o.summary);
        for p in [
            &mut o.state,
            &mut o.reference,
            &mut o.queues,
            &mut o.schedule,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.run.max_slots == 0 {
            return bad("run.max_slots must be positive");
        }
        if !(self.run.target_rel_err > 0.0) {
            return bad("run.target_rel_err must be positive");
        }
        self.admm.validate()?;
        if !(self.qca.k > 0.0) {
            return bad("qca.k must be positive");
        }
        if !(self.proximal.rho > 0.0) {
            return bad("proximal.rho must be positive");
        }
        if self.outputs.schedule.is_some() && self.algorithm != Algorithm::Admm {
            return bad("outputs.schedule is only produced by the admm algorithm");
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<NetworkInstance> {
        Ok(match &self.instance {
            InstanceSource::File(p) => NetworkInstance::load(p)?,
            InstanceSource::Generate(params) => generate_er_instance(params)?,
        })
    }

    /// Overrides one numeric parameter by name, for sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "tau" => self.admm.tau = value,
            "rho" => {
                self.admm.rho = value;
                self.proximal.rho = value;
            }
            "k" => self.qca.k = value,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown sweep parameter {other:?}; expected tau, rho or k"
                )))
            }
        }
        self.validate()
    }
}

/// Headline numbers of a run, all derivable from its metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// First slot with `rel_err <= target`, or with `residual <= tol_residual`
    /// when the run had no reference.
    pub slots_to_tol: Option<usize>,
    /// Utility gap of the last slot, or its residual without a reference.
    pub final_gap: f64,
    /// Largest total physical queue.
    pub max_queue: f64,
    pub fitted_slope: Option<f64>,
    pub fit_r2: Option<f64>,
}

/// Recomputes the summary from metric rows.
pub fn summarize(metrics: &[IterationMetrics], target_rel_err: f64, tol_residual: f64) -> Summary {
    let has_reference = metrics.iter().any(|m| !m.rel_err.is_nan());
    let slots_to_tol = if has_reference {
        metrics.iter().find(|m| m.rel_err <= target_rel_err)
    } else {
        metrics.iter().find(|m| m.residual <= tol_residual)
    }
    .map(|m| m.slot);
    let final_gap = metrics.last().map_or(f64::NAN, |m| {
        if has_reference {
            m.util_gap
        } else {
            m.residual
        }
    });
    let max_queue = metrics.iter().map(|m| m.phys_queue).fold(0.0, f64::max);
    let fit = if has_reference {
        let pts: Vec<(usize, f64)> = metrics.iter().map(|m| (m.slot, m.rel_err)).collect();
        fit_linear_rate(&pts).ok()
    } else {
        None
    };
    Summary {
        slots_to_tol,
        final_gap,
        max_queue,
        fitted_slope: fit.map(|f| f.0),
        fit_r2: fit.map(|f| f.1),
    }
}

pub fn write_metrics(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != METRICS_HEADER {
        return Err(HarnessError::Config(format!(
            "{}: unexpected metrics header {header:?}",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(HarnessError::from))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub algorithm: String,
    pub slots: usize,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
}

/// Artifacts of one finished run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub outcome: RunOutcome,
    pub reference: Option<Reference>,
}

fn obtain_reference(cfg: &ExperimentConfig, inst: &NetworkInstance) -> Result<Option<Reference>> {
    let reference = match &cfg.reference {
        ReferencePolicy::None => return Ok(None),
        ReferencePolicy::Compute { options } => reference_solve(inst, &cfg.admm, *options)?,
        ReferencePolicy::Load { path } => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let r: Reference = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            if r.x.len() != inst.n_flows()
                || r.r.len() != inst.n_link_vars()
                || r.lambda.len() != inst.n_rows()
            {
                return Err(HarnessError::Config(format!(
                    "{}: reference does not match the instance dimensions",
                    path.display()
                )));
            }
            r
        }
    };
    Ok(Some(reference))
}

fn solver_for(cfg: &ExperimentConfig, inst: NetworkInstance) -> Result<Box<dyn SlotAlgorithm>> {
    Ok(match cfg.algorithm {
        Algorithm::Admm => Box::new(AdmmSolver::new(inst, cfg.admm.clone())?),
        Algorithm::Qca => Box::new(QcaSolver::new(inst, cfg.qca.clone())?),
        Algorithm::Proximal => Box::new(ProximalSolver::new(inst, cfg.proximal.clone())?),
    })
}

/// Seeded per-slot capacity redraw on `[0, 2C_l]`.
pub fn fading_channel(base: Vec<f64>, seed: u64) -> impl FnMut(usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |_slot| base.iter().map(|&c| 2.0 * c * rng.gen::<f64>()).collect()
}

/// Runs one experiment and writes its artifacts. Errors carry the exit code
/// through [`HarnessError::exit_code`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let inst = cfg.build_instance()?;
    let reference = obtain_reference(cfg, &inst)?;
    if let (Some(path), Some(r)) = (&cfg.outputs.reference, &reference) {
        write_json(path, r)?;
    }
    let mut solver = solver_for(cfg, inst.clone())?;

    let stop = match (&reference, cfg.run.stop_early) {
        (_, false) => StopRule::Never,
        (Some(_), true) => StopRule::Relative {
            tol: cfg.run.target_rel_err,
        },
        (None, true) => StopRule::Residual {
            tol_residual: cfg.admm.tol_residual,
            tol_x: cfg.admm.tol_x,
        },
    };
    let mut schedule_out = match &cfg.outputs.schedule {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => None,
    };
    let mut opts = RunOptions::new(cfg.run.max_slots, stop);
    opts.reference = reference.as_ref();
    opts.diagnostics = cfg.run.diagnostics;
    opts.queue_history = cfg.outputs.queues.is_some() && cfg.outputs.queues_wide;
    if let ChannelMode::Fading { seed } = cfg.channel {
        opts.channel = Some(Box::new(fading_channel(inst.capacities().to_vec(), seed)));
    }
    if let Some(w) = schedule_out.as_mut() {
        opts.on_slot = Some(Box::new(move |alg: &dyn SlotAlgorithm| {
            let line = match alg.last_schedule().and_then(|i| i.schedule.as_ref()) {
                Some(s) => s.to_json()?,
                None => "null".to_owned(),
            };
            writeln!(w, "{line}")?;
            Ok(())
        }));
    }
    let outcome = run(solver.as_mut(), opts)?;
    if let (Some(mut w), Some(p)) = (schedule_out, &cfg.outputs.schedule) {
        w.flush().map_err(io_err(p))?;
    }

    write_metrics(&cfg.outputs.metrics, &outcome.metrics)?;
    let summary = summarize(
        &outcome.metrics,
        cfg.run.target_rel_err,
        cfg.admm.tol_residual,
    );
    write_json(&cfg.outputs.summary, &summary)?;
    if let Some(p) = &cfg.outputs.state {
        write_json(
            p,
            &FinalState {
                algorithm: outcome.algorithm.to_owned(),
                slots: outcome.metrics.last().map_or(0, |m| m.slot),
                x: outcome.final_x.clone(),
                r: outcome.final_r.clone(),
                lambda: outcome.final_lambda.clone(),
            },
        )?;
    }
    if let Some(p) = &cfg.outputs.queues {
        write_queues(p, &inst, cfg.outputs.queues_wide, &outcome.queues)?;
    }

    if summary.slots_to_tol.is_none() {
        let last = outcome.metrics.last();
        return Err(HarnessError::NotConverged {
            slots: cfg.run.max_slots,
            last: last.map_or(f64::NAN, |m| {
                if reference.is_some() {
                    m.rel_err
                } else {
                    m.residual
                }
            }),
        });
    }
    Ok(ExperimentResult {
        summary,
        outcome,
        reference,
    })
}

fn write_queues(path: &Path, inst: &NetworkInstance, wide: bool, trace: &QueueTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if wide {
        let mut header = vec!["slot".to_owned()];
        for row in 0..inst.n_rows() {
            let (n, k) = inst.row_node(row);
            header.push(format!("q_{n}_{}", inst.destinations()[k]));
        }
        w.write_record(&header)?;
        for (t, q) in trace.history.iter().enumerate() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(q.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    } else {
        w.write_record(["slot", "total", "max"])?;
        for (t, (total, max)) in trace.totals.iter().zip(&trace.max_queue).enumerate() {
            w.write_record([(t + 1).to_string(), total.to_string(), max.to_string()])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Runs `base` once per value of `param`; metric and summary files get a
/// `_<param><value>` suffix.
pub fn run_sweep(
    base: &ExperimentConfig,
    param: &str,
    values: &[f64],
) -> Result<Vec<(f64, Result<ExperimentResult>)>> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        cfg.set_param(param, v)?;
        let tag = format!("{param}{v}");
        let o = &mut cfg.outputs;
        o.metrics = suffixed(&o.metrics, &tag);
        o.summary = suffixed(&o.summary, &tag);
        for p in [
            &mut o.state,
            &mut o.reference,
            &mut o.queues,
            &mut o.schedule,
        ]
        .into_iter()
        .flatten()
        {
            *p = suffixed(p, &tag);
        }
        out.push((v, run_experiment(&cfg)));
    }
    Ok(out)
}

/// `dir/name.ext` to `dir/name_tag.ext`.
pub fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

/// Fits the linear rate of a metrics file.
pub fn fit_metrics(path: &Path) -> Result<(f64, f64)> {
    let metrics = read_metrics(path)?;
    let pts: Vec<(usize, f64)> = metrics.iter().map(|m| (m.slot, m.rel_err)).collect();
    Ok(fit_linear_rate(&pts)?)
}
