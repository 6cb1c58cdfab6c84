//! Observation-agnostic treatment-allocation designs.
//!
//! A design is sampled with [`generate`] and exposes the analytic moments
//! [`xi`] (limiting mean of `U_t`) and [`autocov`] (limiting lag-k covariance)
//! consumed by the asymptotic MSE formulas.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Largest policy memory accepted; keeps the table at most 2^16 entries.
pub const MAX_POLICY_Q: usize = 16;

/// A sequence of `+1` / `-1` treatment indicators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct TreatmentSequence {
    values: Vec<i8>,
}

impl TreatmentSequence {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidInput(format!(
                "treatment at index {i} is {}, expected -1 or 1",
                values[i]
            )));
        }
        Ok(TreatmentSequence { values })
    }

    pub fn constant(sign: i8, len: usize) -> Self {
        assert!(sign == 1 || sign == -1);
        TreatmentSequence { values: vec![sign; len] }
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.len() as f64
    }

    pub fn flipped(&self) -> Self {
        TreatmentSequence { values: self.values.iter().map(|v| -v).collect() }
    }

    /// Keeps the last `len` entries.
    pub fn tail(&self, len: usize) -> Self {
        TreatmentSequence { values: self.values[self.len() - len..].to_vec() }
    }

    /// `(1/T) sum_t (U_t - mean)(U_{t-k} - mean)`.
    pub fn empirical_autocov(&self, k: usize) -> f64 {
        let n = self.len();
        if k >= n {
            return 0.0;
        }
        let m = self.mean();
        (k..n)
            .map(|t| (f64::from(self.values[t]) - m) * (f64::from(self.values[t - k]) - m))
            .sum::<f64>()
            / n as f64
    }
}

impl TryFrom<Vec<i8>> for TreatmentSequence {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        TreatmentSequence::new(v)
    }
}

impl From<TreatmentSequence> for Vec<i8> {
    fn from(s: TreatmentSequence) -> Vec<i8> {
        s.values
    }
}

/// Deterministic map from the last `q` treatments to the next one.
///
/// State `(U_{t-1}, .., U_{t-q})` is encoded with `+1 -> 1`, `-1 -> 0`,
/// `U_{t-1}` as the least and `U_{t-q}` as the most significant bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolicyTable {
    q: usize,
    table: Vec<i8>,
}

impl PolicyTable {
    pub fn new(q: usize, table: Vec<i8>) -> Result<Self> {
        if q == 0 || q > MAX_POLICY_Q {
            return Err(Error::InvalidInput(format!("policy memory q must be in 1..={MAX_POLICY_Q}, got {q}")));
        }
        if table.len() != 1 << q {
            return Err(Error::InvalidInput(format!(
                "policy table for q={q} needs {} entries, got {}",
                1usize << q,
                table.len()
            )));
        }
        if table.iter().any(|&a| a != 1 && a != -1) {
            return Err(Error::InvalidInput("policy actions must be -1 or 1".into()));
        }
        Ok(PolicyTable { q, table })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn table(&self) -> &[i8] {
        &self.table
    }

    pub fn n_states(&self) -> usize {
        self.table.len()
    }

    pub fn action(&self, state: usize) -> i8 {
        self.table[state]
    }

    /// Encoding of the history where every past treatment was `+1`.
    pub fn seed_state(&self) -> usize {
        self.n_states() - 1
    }

    pub fn next_state(q: usize, state: usize, action: i8) -> usize {
        ((state << 1) | usize::from(action == 1)) & ((1 << q) - 1)
    }

    /// Decodes a state into `(U_{t-1}, .., U_{t-q})`.
    pub fn decode(q: usize, state: usize) -> Vec<i8> {
        (0..q).map(|k| if state >> k & 1 == 1 { 1 } else { -1 }).collect()
    }

    /// Actions along the cycle eventually reached from `start`, in order.
    pub fn limit_cycle(&self, start: usize) -> Vec<i8> {
        let mut first_visit = vec![usize::MAX; self.n_states()];
        let mut actions = Vec::new();
        let mut s = start;
        while first_visit[s] == usize::MAX {
            first_visit[s] = actions.len();
            let a = self.action(s);
            actions.push(a);
            s = Self::next_state(self.q, s, a);
        }
        actions.split_off(first_visit[s])
    }

    /// Average of `U_t U_{t+k}` around the cycle reached from `start`.
    pub fn cycle_lag_product(&self, start: usize, k: usize) -> f64 {
        cycle_lag_product(&self.limit_cycle(start), k)
    }
}

pub(crate) fn cycle_lag_product(cycle: &[i8], k: usize) -> f64 {
    let n = cycle.len();
    let s: i64 = (0..n).map(|t| i64::from(cycle[t] * cycle[(t + k) % n])).sum();
    s as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Switchback { m: usize },
    UniformRandom,
    Markov { alpha: f64, beta: f64 },
    QDependent(PolicyTable),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignFile", into = "DesignFile")]
pub struct DesignSpec {
    pub variant: Variant,
    pub label: String,
}

impl DesignSpec {
    pub fn new(variant: Variant, label: Option<String>) -> Result<Self> {
        match &variant {
            Variant::Switchback { m } if *m == 0 => {
                return Err(Error::InvalidInput("switchback period m must be positive".into()))
            }
            Variant::Markov { alpha, beta } if !((0.0..=1.0).contains(alpha) && (0.0..=1.0).contains(beta)) => {
                return Err(Error::InvalidInput(format!(
                    "markov probabilities must lie in [0,1], got alpha={alpha}, beta={beta}"
                )))
            }
            _ => {}
        }
        let label = label.unwrap_or_else(|| default_label(&variant));
        Ok(DesignSpec { variant, label })
    }

    pub fn switchback(m: usize) -> Result<Self> {
        Self::new(Variant::Switchback { m }, None)
    }

    /// Alternate every interval.
    pub fn at() -> Self {
        Self::new(Variant::Switchback { m: 1 }, Some("AT".into())).unwrap()
    }

    /// Hold each treatment for `tau` intervals.
    pub fn ad(tau: usize) -> Result<Self> {
        Self::new(Variant::Switchback { m: tau }, Some(format!("AD(tau={tau})")))
    }

    /// The `tau -> infinity` limit of AD: `U_t` never switches after the first draw.
    pub fn ad_limit() -> Self {
        Self::new(Variant::Markov { alpha: 1.0, beta: 0.0 }, Some("AD".into())).unwrap()
    }

    pub fn ur() -> Self {
        Self::new(Variant::UniformRandom, Some("UR".into())).unwrap()
    }

    pub fn markov(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Variant::Markov { alpha, beta }, None)
    }

    /// `Markov(alpha, 1 - alpha)`.
    pub fn balanced_markov(alpha: f64) -> Result<Self> {
        Self::markov(alpha, 1.0 - alpha)
    }

    pub fn qdependent(policy: PolicyTable) -> Self {
        Self::new(Variant::QDependent(policy), None).unwrap()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

fn default_label(v: &Variant) -> String {
    match v {
        Variant::Switchback { m: 1 } => "AT".into(),
        Variant::Switchback { m } => format!("switchback(m={m})"),
        Variant::UniformRandom => "UR".into(),
        Variant::Markov { alpha, beta } => format!("markov(alpha={alpha}, beta={beta})"),
        Variant::QDependent(p) => format!("qdependent(q={})", p.q()),
    }
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<i8>>,
}

impl TryFrom<DesignFile> for DesignSpec {
    type Error = Error;

    fn try_from(f: DesignFile) -> Result<Self> {
        let missing = |field: &str| Error::InvalidInput(format!("design '{}' requires field '{field}'", f.variant));
        let variant = match f.variant.as_str() {
            "switchback" => Variant::Switchback { m: f.m.ok_or_else(|| missing("m"))? },
            "ur" => Variant::UniformRandom,
            "markov" => {
                let alpha = f.alpha.ok_or_else(|| missing("alpha"))?;
                Variant::Markov { alpha, beta: f.beta.unwrap_or(1.0 - alpha) }
            }
            "qdependent" => Variant::QDependent(PolicyTable::new(
                f.q.ok_or_else(|| missing("q"))?,
                f.table.clone().ok_or_else(|| missing("table"))?,
            )?),
            other => return Err(Error::InvalidInput(format!("unknown design variant '{other}'"))),
        };
        DesignSpec::new(variant, f.label)
    }
}

impl From<DesignSpec> for DesignFile {
    fn from(d: DesignSpec) -> Self {
        let mut f = DesignFile {
            variant: String::new(),
            label: Some(d.label),
            m: None,
            alpha: None,
            beta: None,
            q: None,
            table: None,
        };
        match d.variant {
            Variant::Switchback { m } => {
                f.variant = "switchback".into();
                f.m = Some(m);
            }
            Variant::UniformRandom => f.variant = "ur".into(),
            Variant::Markov { alpha, beta } => {
                f.variant = "markov".into();
                f.alpha = Some(alpha);
                f.beta = Some(beta);
            }
            Variant::QDependent(p) => {
                f.variant = "qdependent".into();
                f.q = Some(p.q);
                f.table = Some(p.table);
            }
        }
        f
    }
}

fn coin(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Samples `len` treatments from an existing generator.
///
/// Every variant consumes one fair coin first, so the first draw is shared
/// across designs driven by the same stream.
pub fn generate_with(spec: &DesignSpec, len: usize, rng: &mut ChaCha8Rng) -> TreatmentSequence {
    let first = coin(rng);
    let mut values = Vec::with_capacity(len);
    match &spec.variant {
        Variant::Switchback { m } => {
            values.extend((0..len).map(|t| if (t / m) % 2 == 0 { first } else { -first }));
        }
        Variant::UniformRandom => {
            if len > 0 {
                values.push(first);
            }
            values.extend((1..len).map(|_| coin(rng)));
        }
        Variant::Markov { alpha, beta } => {
            let mut u = first;
            for t in 0..len {
                if t > 0 {
                    let p = if u == 1 { *alpha } else { *beta };
                    u = if rng.random::<f64>() < p { 1 } else { -1 };
                }
                values.push(u);
            }
        }
        Variant::QDependent(policy) => {
            let mut s = policy.seed_state();
            for _ in 0..len {
                let a = policy.action(s);
                values.push(a * first);
                s = PolicyTable::next_state(policy.q(), s, a);
            }
        }
    }
    TreatmentSequence { values }
}

/// Samples `len` treatments; a pure function of `(spec, len, seed)`.
pub fn generate(spec: &DesignSpec, len: usize, seed: u64) -> TreatmentSequence {
    generate_with(spec, len, &mut rng::substream(seed, streams::DESIGN))
}

/// Limiting mean of `U_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Xi {
    Defined(f64),
    /// `Markov(1, 0)` never leaves its first state; the fair first draw
    /// makes the mean zero.
    UndefinedBySymmetry,
}

impl Xi {
    pub fn value(self) -> f64 {
        match self {
            Xi::Defined(v) => v,
            Xi::UndefinedBySymmetry => 0.0,
        }
    }
}

pub fn xi(spec: &DesignSpec) -> Xi {
    match &spec.variant {
        Variant::Markov { alpha, beta } => {
            if *alpha == 1.0 && *beta == 0.0 {
                Xi::UndefinedBySymmetry
            } else {
                Xi::Defined((alpha + beta - 1.0) / (beta + 1.0 - alpha))
            }
        }
        _ => Xi::Defined(0.0),
    }
}

/// Limiting `Cov(U_t, U_{t-k})`; lag 0 gives `1 - xi^2`.
///
/// Switchback values are averaged over the position within a block. A
/// q-dependent policy uses the cycle reached from its seed state.
pub fn autocov(spec: &DesignSpec, k: usize) -> f64 {
    match &spec.variant {
        Variant::Switchback { m } => {
            let (n, r) = (k / m, k % m);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 - 2.0 * r as f64 / *m as f64)
        }
        Variant::UniformRandom => f64::from(u8::from(k == 0)),
        Variant::Markov { alpha, beta } => {
            let x = xi(spec).value();
            (1.0 - x * x) * (alpha - beta).powi(k as i32)
        }
        Variant::QDependent(policy) => policy.cycle_lag_product(policy.seed_state(), k),
    }
}
