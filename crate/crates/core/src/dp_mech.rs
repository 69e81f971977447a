//! Differential-privacy primitives: Laplace noise, Report Noisy Max, the
//! rejection-sampling driver, and a budget ledger.
//!
//! All randomness flows through an explicit [`DpRng`]; nothing reads global
//! state. Seeded generators exist for reproducible tests and are not
//! private in production (the seed fully determines the "noise").

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("Laplace scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("report_noisy_max needs at least one query")]
    EmptyQueries,
    #[error("rejection sampling needs T >= {required} for gamma={gamma}, eps0={eps0}; got {given}")]
    StepBoundViolated {
        required: u64,
        given: u64,
        gamma: f64,
        eps0: f64,
    },
    #[error("invalid rejection-sampling parameter: {0}")]
    InvalidParameter(String),
    #[error("budget spend must be positive, got {0}")]
    NonPositiveSpend(f64),
    #[error("spend {label:?} of {amount} would exceed budget: {spent} already spent of {total}")]
    OverBudget {
        label: String,
        amount: f64,
        spent: f64,
        total: f64,
    },
}

/// Scale parameter b of a Laplace(0, b) distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(b: f64) -> Result<Self, DpError> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(DpError::NonPositiveScale(b));
        }
        Ok(LaplaceScale(b))
    }

    pub fn b(&self) -> f64 {
        self.0
    }

    /// Standard deviation, sqrt(2)·b.
    pub fn sigma(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.0
    }

    /// The doubled standard deviation 2σ = sqrt(8)·b used as significance bar.
    pub fn significance_bar(&self) -> f64 {
        8.0f64.sqrt() * self.0
    }
}

/// How to seed the random generator for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomSource {
    /// OS entropy; the only mode with meaning under differential privacy.
    Secure,
    /// Fixed seed: same seed, same sample stream. Test/reproduction only.
    Seeded(u64),
}

impl RandomSource {
    pub fn rng(&self) -> DpRng {
        match self {
            RandomSource::Secure => DpRng(ChaCha20Rng::from_entropy()),
            RandomSource::Seeded(seed) => {
                log::warn!(
                    "seeded randomness (seed={seed}) is for tests and reproduction; \
                     the output is NOT differentially private"
                );
                DpRng(ChaCha20Rng::seed_from_u64(*seed))
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            RandomSource::Secure => None,
            RandomSource::Seeded(s) => Some(*s),
        }
    }
}

/// The generator handed to every mechanism. Single-owner per run.
pub struct DpRng(ChaCha20Rng);

impl DpRng {
    /// Uniform draw from (-1/2, 1/2), endpoints excluded.
    fn open_unit_interval(&mut self) -> f64 {
        loop {
            let r: f64 = self.0.gen(); // [0, 1)
            if r != 0.0 {
                return r - 0.5;
            }
        }
    }

    pub fn uniform_usize(&mut self, low: usize, high_inclusive: usize) -> usize {
        self.0.gen_range(low..=high_inclusive)
    }

    pub fn coin(&mut self, probability: f64) -> bool {
        self.0.gen::<f64>() < probability
    }

    /// Derives an independent generator, e.g. for concurrent repetitions.
    pub fn fork(&mut self) -> DpRng {
        DpRng(ChaCha20Rng::seed_from_u64(self.0.gen()))
    }
}

/// One draw from Laplace(0, b) by inverse CDF:
/// sample = -b · sign(u) · ln(1 - 2|u|) for u uniform on (-1/2, 1/2).
pub fn laplace_sample(rng: &mut DpRng, scale: LaplaceScale) -> f64 {
    let u = rng.open_unit_interval();
    -scale.b() * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Report Noisy Max: adds independent Laplace(0, 1/eps) noise to every
/// count and returns the key of the largest noisy value. Callers are
/// responsible for the 1-sensitivity of the counts. Ties (measure-zero
/// under continuous noise) keep the earliest key.
pub fn report_noisy_max<K: Clone>(
    rng: &mut DpRng,
    queries: &[(K, f64)],
    eps: f64,
) -> Result<K, DpError> {
    if queries.is_empty() {
        return Err(DpError::EmptyQueries);
    }
    if !(eps > 0.0) {
        return Err(DpError::InvalidParameter(format!(
            "report_noisy_max eps must be positive, got {eps}"
        )));
    }
    let scale = LaplaceScale::new(1.0 / eps)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, count)) in queries.iter().enumerate() {
        let noisy = count + laplace_sample(rng, scale);
        match best {
            Some((_, value)) if noisy <= value => {}
            _ => best = Some((i, noisy)),
        }
    }
    let (index, _) = best.expect("nonempty queries");
    Ok(queries[index].0.clone())
}

/// The smallest T admissible for the rejection sampler:
/// max(ceil((1/γ)·ln(2/ε₀)), ceil(1 + 1/(e·γ))).
pub fn rejection_step_bound(gamma: f64, eps0: f64) -> u64 {
    let a = ((1.0 / gamma) * (2.0 / eps0).ln()).ceil();
    let b = (1.0 + 1.0 / (std::f64::consts::E * gamma)).ceil();
    a.max(b).max(1.0) as u64
}

/// Outcome of a rejection-sampled selection: either an accepted candidate
/// with its score, or ⊥.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampled<C> {
    Accepted { candidate: C, score: f64 },
    Bottom,
}

impl<C> Sampled<C> {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Sampled::Accepted { .. })
    }
}

/// DP rejection sampling: runs `trial` up to T times, returns the first
/// candidate whose score reaches `t`; after each failed trial aborts with
/// probability `gamma`. The total privacy cost is 2ε₁ + ε₀ when the trial
/// is ε₁-DP.
pub fn rejection_sample<C>(
    rng: &mut DpRng,
    mut trial: impl FnMut(&mut DpRng) -> C,
    score_of: impl Fn(&C) -> f64,
    t: f64,
    gamma: f64,
    eps0: f64,
    steps: u64,
) -> Result<Sampled<C>, DpError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(DpError::InvalidParameter(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(DpError::InvalidParameter(format!(
            "eps0 must be in (0, 1], got {eps0}"
        )));
    }
    let required = rejection_step_bound(gamma, eps0);
    if steps < required {
        return Err(DpError::StepBoundViolated {
            required,
            given: steps,
            gamma,
            eps0,
        });
    }
    for _ in 0..steps {
        let candidate = trial(rng);
        let score = score_of(&candidate);
        if score >= t {
            return Ok(Sampled::Accepted { candidate, score });
        }
        if rng.coin(gamma) {
            return Ok(Sampled::Bottom);
        }
    }
    Ok(Sampled::Bottom)
}

/// A labeled spend entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub amount: f64,
}

/// Tracks ε spends against a fixed total. Spending past the total fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: f64,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(total: f64) -> Self {
        BudgetLedger {
            total,
            entries: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn spent(&self) -> f64 {
        self.entries.iter().map(|e| e.amount).sum()
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent()
    }

    /// Records a spend; fails when the running sum would exceed the total
    /// (beyond a small float tolerance).
    pub fn spend(&mut self, label: impl Into<String>, amount: f64) -> Result<(), DpError> {
        let label = label.into();
        if !(amount > 0.0) {
            return Err(DpError::NonPositiveSpend(amount));
        }
        let spent = self.spent();
        let slack = 1e-12 * self.total.abs().max(1.0);
        if spent + amount > self.total + slack {
            return Err(DpError::OverBudget {
                label,
                amount,
                spent,
                total: self.total,
            });
        }
        self.entries.push(LedgerEntry { label, amount });
        Ok(())
    }

    /// Sum of entries whose label starts with the prefix.
    pub fn spent_with_prefix(&self, prefix: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.label.starts_with(prefix))
            .map(|e| e.amount)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("ledger serializes")
    }
}
