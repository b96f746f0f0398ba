//! Generic slot loop with per-slot metrics and queue simulation.

use serde::{Deserialize, Serialize};

use crate::admm::{kkt_residual, lyapunov_value, total_utility, AdmmSolver, Reference, SlotInfo};
use crate::baselines::{ProximalSolver, QcaSolver};
use crate::capacity::{CapacityRegion, OracleKind};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::queue::{QueueSimulator, QueueTrace};

/// Anything that advances `(x, r)` one slot at a time.
pub trait SlotAlgorithm {
    fn name(&self) -> &'static str;
    fn instance(&self) -> &NetworkInstance;
    fn step(&mut self) -> Result<()>;
    fn slot(&self) -> usize;
    fn x(&self) -> &[f64];
    fn r(&self) -> &[f64];
    /// Virtual queues, when the method keeps them.
    fn lambda(&self) -> Option<&[f64]> {
        None
    }
    /// `(ρ, τ)` of the dual step, when there is one.
    fn dual_step(&self) -> Option<(f64, f64)> {
        None
    }
    fn lyapunov(&self, _reference: &Reference) -> Option<Result<f64>> {
        None
    }
    fn kkt(&self, _x_star: &[f64]) -> Option<Result<f64>> {
        None
    }
    fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()>;
    /// Scheduling output of the last slot, if any.
    fn last_schedule(&self) -> Option<&SlotInfo> {
        None
    }
}

impl SlotAlgorithm for AdmmSolver {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn instance(&self) -> &NetworkInstance {
        AdmmSolver::instance(self)
    }

    fn step(&mut self) -> Result<()> {
        AdmmSolver::step(self).map(|_| ())
    }

    fn slot(&self) -> usize {
        self.state().slot
    }

    fn x(&self) -> &[f64] {
        &self.state().x
    }

    fn r(&self) -> &[f64] {
        &self.state().r
    }

    fn lambda(&self) -> Option<&[f64]> {
        Some(&self.state().lambda)
    }

    fn dual_step(&self) -> Option<(f64, f64)> {
        Some((self.params().rho, self.params().tau))
    }

    fn lyapunov(&self, reference: &Reference) -> Option<Result<f64>> {
        let s = self.state();
        Some(lyapunov_value(
            AdmmSolver::instance(self),
            &s.x,
            &s.r,
            &s.lambda,
            reference,
            self.params(),
            self.beta(),
        ))
    }

    fn kkt(&self, x_star: &[f64]) -> Option<Result<f64>> {
        let s = self.state();
        Some(kkt_residual(
            AdmmSolver::instance(self),
            self.region(),
            &s.x,
            &s.r,
            &s.lambda,
            x_star,
        ))
    }

    fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        AdmmSolver::set_capacities(self, capacities)
    }

    fn last_schedule(&self) -> Option<&SlotInfo> {
        Some(self.last_info())
    }
}

impl SlotAlgorithm for ProximalSolver {
    fn name(&self) -> &'static str {
        "proximal"
    }

    fn instance(&self) -> &NetworkInstance {
        ProximalSolver::instance(self)
    }

    fn step(&mut self) -> Result<()> {
        ProximalSolver::step(self)
    }

    fn slot(&self) -> usize {
        self.state().slot
    }

    fn x(&self) -> &[f64] {
        &self.state().x
    }

    fn r(&self) -> &[f64] {
        &self.state().r
    }

    fn lambda(&self) -> Option<&[f64]> {
        Some(&self.state().lambda)
    }

    fn dual_step(&self) -> Option<(f64, f64)> {
        Some((self.params().rho, 1.0))
    }

    fn kkt(&self, x_star: &[f64]) -> Option<Result<f64>> {
        let inst = ProximalSolver::instance(self);
        let s = self.state();
        Some(
            CapacityRegion::for_instance(inst, OracleKind::Enumerated)
                .and_then(|region| kkt_residual(inst, &region, &s.x, &s.r, &s.lambda, x_star)),
        )
    }

    fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        ProximalSolver::set_capacities(self, capacities)
    }
}

impl SlotAlgorithm for QcaSolver {
    fn name(&self) -> &'static str {
        "qca"
    }

    fn instance(&self) -> &NetworkInstance {
        QcaSolver::instance(self)
    }

    fn step(&mut self) -> Result<()> {
        QcaSolver::step(self)
    }

    fn slot(&self) -> usize {
        self.state().slot
    }

    fn x(&self) -> &[f64] {
        &self.state().x
    }

    fn r(&self) -> &[f64] {
        &self.state().r
    }

    fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        QcaSolver::set_capacities(self, capacities)
    }
}

/// One row of the metrics stream. Fields without a defined value are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub slot: usize,
    /// `‖x − x*‖ / ‖x*‖`
    pub rel_err: f64,
    /// `‖Bx + Ar‖`
    pub residual: f64,
    /// `|ΣU(x) − ΣU(x*)|`
    pub util_gap: f64,
    pub lyapunov: f64,
    pub kkt_res: f64,
    /// `Σ|λ|`
    pub virt_queue: f64,
    /// `ΣQ`
    pub phys_queue: f64,
}

/// When a run ends before `max_slots`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StopRule {
    /// Run the full horizon.
    Never,
    /// `‖Bx + Ar‖ <= tol_residual` and `‖x[t] − x[t−1]‖/max(1, ‖x[t]‖) <= tol_x`.
    Residual { tol_residual: f64, tol_x: f64 },
    /// Relative error to the reference at most `tol`.
    Relative { tol: f64 },
}

/// Per-slot capacity source for fading experiments.
pub type ChannelFn<'a> = Box<dyn FnMut(usize) -> Vec<f64> + 'a>;

/// Observer called after every slot.
pub type SlotHook<'a> = Box<dyn FnMut(&dyn SlotAlgorithm) -> Result<()> + 'a>;

pub struct RunOptions<'a> {
    pub max_slots: usize,
    pub stop: StopRule,
    pub reference: Option<&'a Reference>,
    /// Compute the Lyapunov value and KKT residual each slot.
    pub diagnostics: bool,
    /// Keep every queue of every slot in the trace.
    pub queue_history: bool,
    pub channel: Option<ChannelFn<'a>>,
    /// Called after every slot, e.g. to dump schedules.
    pub on_slot: Option<SlotHook<'a>>,
}

impl<'a> RunOptions<'a> {
    pub fn new(max_slots: usize, stop: StopRule) -> Self {
        Self {
            max_slots,
            stop,
            reference: None,
            diagnostics: true,
            queue_history: false,
            channel: None,
            on_slot: None,
        }
    }

    pub fn with_reference(mut self, reference: &'a Reference) -> Self {
        self.reference = Some(reference);
        self
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub algorithm: &'static str,
    pub metrics: Vec<IterationMetrics>,
    pub queues: QueueTrace,
    /// `max_t max |λ[t]|`, zero without virtual queues.
    pub max_abs_lambda: f64,
    /// Slot at which the stop rule fired.
    pub stopped_at: Option<usize>,
    pub final_x: Vec<f64>,
    pub final_r: Vec<f64>,
    pub final_lambda: Option<Vec<f64>>,
}

impl RunOutcome {
    /// First slot with relative error at most `tol`.
    pub fn slots_to(&self, tol: f64) -> Option<usize> {
        self.metrics
            .iter()
            .find(|m| m.rel_err <= tol)
            .map(|m| m.slot)
    }

    pub fn queue_totals(&self) -> &[f64] {
        &self.queues.totals
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs `alg` slot by slot, simulating physical queues alongside.
pub fn run(alg: &mut dyn SlotAlgorithm, mut opts: RunOptions<'_>) -> Result<RunOutcome> {
    if matches!(opts.stop, StopRule::Relative { .. }) && opts.reference.is_none() {
        return Err(Error::InvalidParameter(
            "relative-error stopping needs a reference".into(),
        ));
    }
    let reference_utility = match opts.reference {
        Some(r) => Some(r.utility(alg.instance())?),
        None => None,
    };
    let x_star_norm = opts.reference.map(|r| norm(&r.x));
    let mut sim = QueueSimulator::new(alg.instance());
    if opts.queue_history {
        sim = sim.with_history();
    }
    let mut metrics = Vec::with_capacity(opts.max_slots.min(1 << 16));
    let mut max_abs_lambda: f64 = 0.0;
    let mut stopped_at = None;
    let mut x_prev = alg.x().to_vec();

    for _ in 0..opts.max_slots {
        if let Some(channel) = opts.channel.as_mut() {
            let caps = channel(alg.slot() + 1);
            alg.set_capacities(caps)?;
        }
        alg.step()?;
        if let Some(cb) = opts.on_slot.as_mut() {
            cb(&*alg)?;
        }
        let inst = alg.instance();
        let (x, r) = (alg.x(), alg.r());
        sim.push(inst, x, r)?;
        let residual = norm(&inst.conservation_residual(x, r)?);
        let virt_queue = match alg.lambda() {
            Some(l) => {
                max_abs_lambda = l.iter().fold(max_abs_lambda, |m, v| m.max(v.abs()));
                l.iter().map(|v| v.abs()).sum()
            }
            None => f64::NAN,
        };
        let (rel_err, util_gap, lyapunov, kkt_res) = match opts.reference {
            Some(reference) => {
                let diff: Vec<f64> = x.iter().zip(&reference.x).map(|(a, b)| a - b).collect();
                let rel = norm(&diff) / x_star_norm.unwrap_or(1.0);
                let gap = (total_utility(inst, x)? - reference_utility.unwrap_or(0.0)).abs();
                let (lyap, kkt) = if opts.diagnostics {
                    (
                        alg.lyapunov(reference).transpose()?.unwrap_or(f64::NAN),
                        alg.kkt(&reference.x).transpose()?.unwrap_or(f64::NAN),
                    )
                } else {
                    (f64::NAN, f64::NAN)
                };
                (rel, gap, lyap, kkt)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let m = IterationMetrics {
            slot: alg.slot(),
            rel_err,
            residual,
            util_gap,
            lyapunov,
            kkt_res,
            virt_queue,
            phys_queue: sim.state().total(),
        };
        metrics.push(m);
        if !m.residual.is_finite() {
            return Err(Error::Diverged {
                slot: m.slot,
                norm: m.residual,
            });
        }

        let done = match opts.stop {
            StopRule::Never => false,
            StopRule::Residual {
                tol_residual,
                tol_x,
            } => {
                let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
                residual <= tol_residual && norm(&dx) / norm(x).max(1.0) <= tol_x
            }
            StopRule::Relative { tol } => rel_err <= tol,
        };
        x_prev.clear();
        x_prev.extend_from_slice(x);
        if done {
            stopped_at = Some(m.slot);
            break;
        }
    }
    Ok(RunOutcome {
        algorithm: alg.name(),
        metrics,
        queues: sim.finish(),
        max_abs_lambda,
        stopped_at,
        final_x: alg.x().to_vec(),
        final_r: alg.r().to_vec(),
        final_lambda: alg.lambda().map(|l| l.to_vec()),
    })
}

/// Least-squares fit of `log(rel_err)` against slot over the contiguous
/// window from the first point below 1e-1 to the first point below 1e-8;
/// returns `(slope, R²)`.
pub fn fit_linear_rate(points: &[(usize, f64)]) -> Result<(f64, f64)> {
    let start = points
        .iter()
        .position(|p| p.1 < 1e-1)
        .unwrap_or(points.len());
    let end = points[start..]
        .iter()
        .position(|p| p.1 < 1e-8)
        .map_or(points.len(), |i| start + i + 1);
    let window: Vec<(f64, f64)> = points[start..end]
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|&(t, e)| (t as f64, e.ln()))
        .collect();
    if window.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "need at least 20 points between relative errors 1e-1 and 1e-8, got {}",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &window {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok((slope, r2))
}
