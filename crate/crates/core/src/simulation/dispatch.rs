//! Grid-world ride-hailing dispatch simulator.
//!
//! Orders appear on a `G x G` grid, wait for an idle driver, and cancel once
//! their patience runs out. Idle drivers are matched greedily by Chebyshev
//! pickup distance; a ride occupies its driver for pickup plus trip distance,
//! one cell per step. The outcome is driver income per step; treated steps add
//! `treatment_effect` to the income of every order matched in that step.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::designs::{generate_with, DesignSpec, TreatmentSequence};
use crate::error::{Error, Result};
use crate::panel::PanelData;
use crate::rng::{substream, streams};

const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncGauss {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncGauss {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let n = Normal::new(self.mean, self.sd).expect("validated sd");
        for _ in 0..MAX_REJECTIONS {
            let v = n.sample(rng);
            if v >= self.lower && v < self.upper {
                return v;
            }
        }
        self.mean.clamp(self.lower, self.upper - f64::EPSILON * self.upper.abs().max(1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component1d {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component2d {
    pub weight: f64,
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fare {
    pub base: f64,
    pub per_cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispatchConfig {
    pub grid: usize,
    pub steps_per_day: usize,
    pub n_drivers: usize,
    pub n_orders_per_day: usize,
    /// Order origins, in cell units over `[0, grid)^2`.
    pub origin_mixture: [Component2d; 2],
    /// Call times, in steps over `[0, steps_per_day)`.
    pub peak_times: [Component1d; 2],
    /// Patience in steps; an order cancels once it has waited longer.
    pub cancel_wait: TruncGauss,
    pub treatment_effect: f64,
    pub fare: Fare,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            grid: 9,
            steps_per_day: 20,
            n_drivers: 50,
            n_orders_per_day: 50,
            origin_mixture: [
                Component2d { weight: 0.6, mean: [2.5, 2.5], sd: [1.5, 1.5] },
                Component2d { weight: 0.4, mean: [6.0, 6.0], sd: [1.5, 1.5] },
            ],
            peak_times: [
                Component1d { weight: 0.5, mean: 5.0, sd: 2.0 },
                Component1d { weight: 0.5, mean: 14.0, sd: 2.0 },
            ],
            cancel_wait: TruncGauss { mean: 2.0, sd: 1.0, lower: 0.0, upper: 6.0 },
            treatment_effect: 0.5,
            fare: Fare { base: 2.0, per_cell: 1.0 },
        }
    }
}

impl DispatchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("dispatch config: {m}")));
        if self.grid == 0 || self.steps_per_day == 0 || self.n_orders_per_day == 0 {
            return bad("grid, steps_per_day and n_orders_per_day must be positive");
        }
        let w1: f64 = self.origin_mixture.iter().map(|c| c.weight).sum();
        let w2: f64 = self.peak_times.iter().map(|c| c.weight).sum();
        if (w1 - 1.0).abs() > 1e-9 || (w2 - 1.0).abs() > 1e-9 {
            return bad("mixture weights must sum to 1");
        }
        if self.origin_mixture.iter().any(|c| c.weight < 0.0) || self.peak_times.iter().any(|c| c.weight < 0.0) {
            return bad("mixture weights must be non-negative");
        }
        let sds = self
            .origin_mixture
            .iter()
            .flat_map(|c| c.sd)
            .chain(self.peak_times.iter().map(|c| c.sd))
            .chain([self.cancel_wait.sd]);
        if sds.into_iter().any(|s| !(s > 0.0)) {
            return bad("standard deviations must be positive");
        }
        if !(self.cancel_wait.lower < self.cancel_wait.upper) {
            return bad("cancel_wait bounds are empty");
        }
        if self.fare.base < 0.0 || self.fare.per_cell < 0.0 || self.treatment_effect < 0.0 {
            return bad("fares and treatment effect must be non-negative");
        }
        Ok(())
    }

    /// Interval length label, e.g. `"72min"` for 20 steps per day.
    pub fn dt_label(&self) -> String {
        format!("{}min", 24.0 * 60.0 / self.steps_per_day as f64)
    }
}

/// Conservation counters after each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub idle: usize,
    pub busy: usize,
    pub spawned: usize,
    pub matched: usize,
    pub completed: usize,
    pub cancelled: usize,
    pub waiting: usize,
    pub income: f64,
}

#[derive(Clone, Debug)]
pub struct DispatchOutput {
    pub panel: PanelData,
    pub trace: Vec<StepTrace>,
}

#[derive(Clone, Copy)]
struct Order {
    call: usize,
    origin: (usize, usize),
    dest: (usize, usize),
    patience: f64,
}

struct Driver {
    pos: (usize, usize),
    /// Step at which the current ride ends.
    busy_until: Option<usize>,
    dest: (usize, usize),
}

fn cheb(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T; 2], weight: impl Fn(&T) -> f64) -> &'a T {
    if rng.random::<f64>() < weight(&items[0]) {
        &items[0]
    } else {
        &items[1]
    }
}

fn spawn_day(cfg: &DispatchConfig, rng: &mut ChaCha8Rng, day: usize) -> Vec<Order> {
    let g = cfg.grid as f64;
    let mut orders: Vec<Order> = (0..cfg.n_orders_per_day)
        .map(|_| {
            let tc = pick(rng, &cfg.peak_times, |c| c.weight);
            let call = TruncGauss { mean: tc.mean, sd: tc.sd, lower: 0.0, upper: cfg.steps_per_day as f64 }.sample(rng);
            let oc = pick(rng, &cfg.origin_mixture, |c| c.weight);
            let ox = TruncGauss { mean: oc.mean[0], sd: oc.sd[0], lower: 0.0, upper: g }.sample(rng);
            let oy = TruncGauss { mean: oc.mean[1], sd: oc.sd[1], lower: 0.0, upper: g }.sample(rng);
            let dest = (rng.random_range(0..cfg.grid), rng.random_range(0..cfg.grid));
            let patience = cfg.cancel_wait.sample(rng);
            Order {
                call: day * cfg.steps_per_day + (call as usize).min(cfg.steps_per_day - 1),
                origin: ((ox as usize).min(cfg.grid - 1), (oy as usize).min(cfg.grid - 1)),
                dest,
                patience,
            }
        })
        .collect();
    orders.sort_by_key(|o| o.call);
    orders
}

/// Runs the simulator on a given treatment path (`days * steps_per_day` long).
///
/// The environment (drivers, orders, patience) uses only the environment
/// substream of `seed`, so runs with different treatment paths share it.
pub fn dispatch_run(cfg: &DispatchConfig, u: &TreatmentSequence, seed: u64) -> Result<DispatchOutput> {
    cfg.validate()?;
    let steps = u.len();
    if steps == 0 || !steps.is_multiple_of(cfg.steps_per_day) {
        return Err(Error::InvalidInput(format!(
            "treatment path of length {steps} is not a positive whole number of {}-step days",
            cfg.steps_per_day
        )));
    }
    let days = steps / cfg.steps_per_day;
    let mut rng = substream(seed, streams::ENVIRONMENT);
    let mut drivers: Vec<Driver> = (0..cfg.n_drivers)
        .map(|_| {
            let pos = (rng.random_range(0..cfg.grid), rng.random_range(0..cfg.grid));
            Driver { pos, busy_until: None, dest: pos }
        })
        .collect();
    let mut waiting: Vec<(usize, Order)> = Vec::new();
    let mut next_id = 0usize;
    let (mut spawned, mut matched, mut completed, mut cancelled) = (0, 0, 0, 0);
    let mut y = DMatrix::zeros(steps, 3);
    let mut trace = Vec::with_capacity(steps);
    let mut today: Vec<Order> = Vec::new();
    let mut cursor = 0;

    for t in 0..steps {
        if t % cfg.steps_per_day == 0 {
            today = spawn_day(cfg, &mut rng, t / cfg.steps_per_day);
            cursor = 0;
        }
        debug_assert!(t / cfg.steps_per_day < days);
        while cursor < today.len() && today[cursor].call == t {
            waiting.push((next_id, today[cursor]));
            next_id += 1;
            cursor += 1;
            spawned += 1;
        }
        for d in drivers.iter_mut() {
            if d.busy_until.is_some_and(|end| end <= t) {
                d.busy_until = None;
                d.pos = d.dest;
                completed += 1;
            }
        }
        let before = waiting.len();
        waiting.retain(|(_, o)| (t - o.call) as f64 <= o.patience);
        cancelled += before - waiting.len();

        // Observed state: the queue and free drivers the dispatcher faces.
        y[(t, 1)] = waiting.len() as f64;
        y[(t, 2)] = drivers.iter().filter(|d| d.busy_until.is_none()).count() as f64;

        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (di, d) in drivers.iter().enumerate() {
            if d.busy_until.is_none() {
                for (oi, (_, o)) in waiting.iter().enumerate() {
                    pairs.push((cheb(d.pos, o.origin), di, oi));
                }
            }
        }
        pairs.sort_unstable_by_key(|&(dist, di, oi)| (dist, di, waiting[oi].0));
        let mut driver_taken = vec![false; drivers.len()];
        let mut order_taken = vec![false; waiting.len()];
        let mut income = 0.0;
        for (dist, di, oi) in pairs {
            if driver_taken[di] || order_taken[oi] {
                continue;
            }
            driver_taken[di] = true;
            order_taken[oi] = true;
            let o = waiting[oi].1;
            let trip = cheb(o.origin, o.dest);
            drivers[di].busy_until = Some(t + (dist + trip).max(1));
            drivers[di].dest = o.dest;
            income += cfg.fare.base + cfg.fare.per_cell * trip as f64;
            if u.values()[t] == 1 {
                income += cfg.treatment_effect;
            }
            matched += 1;
        }
        let mut keep = order_taken.iter().map(|taken| !taken);
        waiting.retain(|_| keep.next().unwrap());

        let idle = drivers.iter().filter(|d| d.busy_until.is_none()).count();
        y[(t, 0)] = income;
        trace.push(StepTrace {
            idle,
            busy: drivers.len() - idle,
            spawned,
            matched,
            completed,
            cancelled,
            waiting: waiting.len(),
            income,
        });
    }
    let panel = PanelData::new(y, u.clone(), None, cfg.dt_label())?;
    Ok(DispatchOutput { panel, trace })
}

/// Panel with columns (income, unassigned orders, idle drivers); the counts are
/// taken after completions and cancellations but before matching.
pub fn dispatch_simulate(cfg: &DispatchConfig, design: &DesignSpec, days: usize, seed: u64) -> Result<PanelData> {
    if days == 0 {
        return Err(Error::InvalidInput("days must be positive".into()));
    }
    let u = generate_with(design, days * cfg.steps_per_day, &mut substream(seed, streams::DESIGN));
    Ok(dispatch_run(cfg, &u, seed)?.panel)
}

/// ATE from two constant-treatment runs sharing one environment.
///
/// Returns the mean daily difference in per-step income and its jackknife
/// standard error over days.
pub fn dispatch_oracle_ate(cfg: &DispatchConfig, days: usize, seed: u64) -> Result<(f64, f64)> {
    if days < 2 {
        return Err(Error::InvalidInput("oracle needs at least two days".into()));
    }
    let n = days * cfg.steps_per_day;
    let plus = dispatch_run(cfg, &TreatmentSequence::constant(1, n), seed)?.panel;
    let minus = dispatch_run(cfg, &TreatmentSequence::constant(-1, n), seed)?.panel;
    let s = cfg.steps_per_day;
    let diffs: Vec<f64> = (0..days)
        .map(|day| (day * s..(day + 1) * s).map(|t| plus.y[(t, 0)] - minus.y[(t, 0)]).sum::<f64>() / s as f64)
        .collect();
    let mean = diffs.iter().sum::<f64>() / days as f64;
    Ok((mean, jackknife_se_of_mean(&diffs)))
}

pub(crate) fn jackknife_se_of_mean(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let total: f64 = x.iter().sum();
    let loo: Vec<f64> = x.iter().map(|v| (total - v) / (n - 1.0)).collect();
    let m = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
}
