//! Optimal designs: the best balanced Markov design (constrained polynomial
//! minimization) and the best q-dependent deterministic policy (value
//! iteration, with an exhaustive oracle for small q).
//!
//! Both minimize the lag part of the asymptotic MSE,
//! `sum_{k=1..q} c_k lim avg E(U_t U_{t+k})`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::CkCoefficients;
use crate::designs::{cycle_lag_product, DesignSpec, PolicyTable};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest memory accepted by [`exhaustive_search`].
pub const EXHAUSTIVE_MAX_Q: usize = 4;
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub objective: f64,
}

fn markov_objective(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| (acc + ck) * x)
}

/// Global minimizer over `[0, 1]` of `f(alpha) = sum_k c_k (2 alpha - 1)^k`.
///
/// Candidates are both endpoints, the midpoint and every real critical point
/// inside the interval. Exact ties go to the smallest alpha; an identically
/// zero objective returns 0.5.
pub fn solve_alpha(ck: &CkCoefficients) -> AlphaSolution {
    let c = &ck.c;
    if c.iter().all(|&v| v == 0.0) {
        return AlphaSolution { alpha: 0.5, objective: 0.0 };
    }
    // f'(x) = sum_k k c_k x^{k-1}, ascending coefficients.
    let deriv: Vec<f64> = c.iter().enumerate().map(|(i, ck)| (i + 1) as f64 * ck).collect();
    let mut xs = vec![-1.0, 0.0, 1.0];
    xs.extend(linalg::real_poly_roots(&deriv).into_iter().filter(|x| *x > -1.0 && *x < 1.0));
    xs.sort_by(f64::total_cmp);
    let (x, objective) = xs
        .into_iter()
        .map(|x| (x, markov_objective(c, x)))
        .fold((f64::NAN, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best });
    AlphaSolution { alpha: ((x + 1.0) / 2.0).clamp(0.0, 1.0), objective }
}

/// Balanced Markov design at the CO optimum.
pub fn co_design(ck: &CkCoefficients) -> DesignSpec {
    let sol = solve_alpha(ck);
    DesignSpec::balanced_markov(sol.alpha)
        .expect("alpha lies in [0, 1]")
        .with_label(format!("CO(alpha={})", sol.alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub q: usize,
    /// `c_1..c_q`.
    pub c: Vec<f64>,
    pub gamma: f64,
    pub tol: f64,
}

impl MdpSpec {
    pub fn new(c: Vec<f64>, gamma: f64, tol: f64) -> Result<Self> {
        let q = c.len();
        if q == 0 || q > crate::designs::MAX_POLICY_Q {
            return Err(Error::InvalidInput(format!("MDP memory must be in 1..={}, got {q}", crate::designs::MAX_POLICY_Q)));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("discount must lie in (0, 1), got {gamma}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
        }
        Ok(MdpSpec { q, c, gamma, tol })
    }

    pub fn from_ck(ck: &CkCoefficients) -> Result<Self> {
        Self::new(ck.c.clone(), DEFAULT_GAMMA, DEFAULT_TOL)
    }

    /// `R(s, a) = -sum_k c_k a a_k` with `a_k = U_{t-k}` decoded from `s`.
    pub fn reward(&self, state: usize, action: i8) -> f64 {
        let a = f64::from(action);
        -(0..self.q)
            .map(|k| {
                let ak = if state >> k & 1 == 1 { 1.0 } else { -1.0 };
                self.c[k] * a * ak
            })
            .sum::<f64>()
    }

    pub fn max_reward(&self) -> f64 {
        self.c.iter().map(|c| c.abs()).sum()
    }

    /// `ceil(log(tol (1 - gamma) / R_max) / log gamma)`, at least 1.
    pub fn sweep_bound(&self) -> usize {
        let r = self.max_reward();
        if r == 0.0 {
            return 1;
        }
        let b = ((self.tol * (1.0 - self.gamma) / r).ln() / self.gamma.ln()).ceil();
        (b.max(1.0)) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViOutcome {
    pub policy: PolicyTable,
    pub values: Vec<f64>,
    pub sweeps: usize,
}

/// In-place Bellman sweeps until the largest value change drops below `tol`,
/// then the greedy policy; `-1` is chosen only when strictly better.
pub fn value_iteration_detailed(spec: &MdpSpec) -> ViOutcome {
    let n = 1usize << spec.q;
    let mut v = vec![0.0; n];
    let q_value = |v: &[f64], s: usize, a: i8| spec.reward(s, a) + spec.gamma * v[PolicyTable::next_state(spec.q, s, a)];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let best = q_value(&v, s, 1).max(q_value(&v, s, -1));
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < spec.tol {
            break;
        }
    }
    let scale = (spec.max_reward() / (1.0 - spec.gamma)).max(1.0);
    let table = (0..n)
        .map(|s| if q_value(&v, s, -1) > q_value(&v, s, 1) + TIE_TOL * scale { -1 } else { 1 })
        .collect();
    ViOutcome {
        policy: PolicyTable::new(spec.q, table).expect("table is total"),
        values: v,
        sweeps,
    }
}

pub fn value_iteration(spec: &MdpSpec) -> PolicyTable {
    value_iteration_detailed(spec).policy
}

/// q-dependent design from value iteration on `ck`.
///
/// With no lag terms every balanced design is optimal and UR is returned.
pub fn rl_design(ck: &CkCoefficients, gamma: f64, tol: f64) -> Result<DesignSpec> {
    if ck.c.is_empty() {
        return Ok(DesignSpec::ur().with_label("RL"));
    }
    let policy = value_iteration(&MdpSpec::new(ck.c.clone(), gamma, tol)?);
    Ok(DesignSpec::qdependent(policy).with_label("RL"))
}

/// Average over all initial states of the limit-cycle objective.
pub fn policy_objective(policy: &PolicyTable, ck: &CkCoefficients) -> f64 {
    let n = policy.n_states();
    (0..n)
        .map(|s| {
            let cycle = policy.limit_cycle(s);
            ck.c.iter().enumerate().map(|(i, c)| c * cycle_lag_product(&cycle, i + 1)).sum::<f64>()
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub policy: PolicyTable,
    pub objective: f64,
}

/// Scores every deterministic policy on `{-1, 1}^q`.
///
/// Tables are ordered lexicographically with `+1` before `-1`; among
/// objectives within `1e-12` of the minimum the first table wins.
pub fn exhaustive_search(ck: &CkCoefficients, q: usize) -> Result<SearchResult> {
    if q == 0 || q > EXHAUSTIVE_MAX_Q {
        return Err(Error::OrderTooLarge(format!("exhaustive search needs 1 <= q <= {EXHAUSTIVE_MAX_Q}, got {q}")));
    }
    let n = 1usize << q;
    let table_of = |idx: u64| -> Vec<i8> { (0..n).map(|i| if idx >> (n - 1 - i) & 1 == 0 { 1 } else { -1 }).collect() };
    let count = 1u64 << n;
    let objectives: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|idx| policy_objective(&PolicyTable::new(q, table_of(idx)).unwrap(), ck))
        .collect();
    let min = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let idx = objectives.iter().position(|&o| o <= min + TIE_TOL).expect("non-empty enumeration");
    Ok(SearchResult {
        policy: PolicyTable::new(q, table_of(idx as u64))?,
        objective: objectives[idx],
    })
}
