//! Virtual queues and the per-round drift-plus-penalty objective.

use serde::{Deserialize, Serialize};

use crate::action::ActionPolicy;
use crate::error::{Error, Result};
use crate::round::RoundContext;
use crate::sghs::ObjectiveCoeffs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapConfig {
    /// Cost-versus-queue balance.
    pub v: f64,
    /// Fairness target; `None` uses `M / (M + N)`.
    pub delta: Option<f64>,
    /// Minimum C2C rate for UnRCs with their own QoS need (bit/s).
    pub r_min_c2c: f64,
}

impl Default for LyapConfig {
    fn default() -> Self {
        Self { v: 1.0, delta: None, r_min_c2c: 1e5 }
    }
}

impl LyapConfig {
    pub fn delta_for(&self, num_rc: usize, num_unrc: usize) -> f64 {
        self.delta.unwrap_or(num_rc as f64 / (num_rc + num_unrc) as f64)
    }

    pub fn validate(&self, num_rc: usize, num_unrc: usize) -> Result<()> {
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::InvalidConfig(format!("lyap.v must be finite and >= 0, got {}", self.v)));
        }
        let cap = num_rc as f64 / (num_rc + num_unrc) as f64;
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= cap) {
                return Err(Error::InvalidConfig(format!("lyap.delta must lie in (0, {cap}], got {d}")));
            }
        }
        if !(self.r_min_c2c >= 0.0 && self.r_min_c2c.is_finite()) {
            return Err(Error::InvalidConfig("lyap.r_min_c2c must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn update_gamma(gamma: f64, delta: f64, alpha_sum: f64) -> f64 {
    (gamma + delta - alpha_sum).max(0.0)
}

pub fn update_z(z: f64, recommended_active: bool, r_min: f64, r_achieved: f64) -> f64 {
    if recommended_active {
        (z + (r_min - r_achieved)).max(0.0)
    } else {
        z
    }
}

/// Fairness debt per RC and QoS debt per UnRC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueues {
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

impl VirtualQueues {
    pub fn new(num_rc: usize, num_unrc: usize) -> Self {
        Self { gamma: vec![0.0; num_rc], z: vec![0.0; num_unrc] }
    }

    /// Applies one round of updates for the chosen policy.
    pub fn update(&mut self, ctx: &RoundContext<'_>, policy: &ActionPolicy) {
        for (m, g) in self.gamma.iter_mut().enumerate() {
            *g = update_gamma(*g, ctx.delta, f64::from(policy.selected(m)));
        }
        for (m, n) in policy.referrals() {
            if let Some(c) = ctx.referral_cost(m, n) {
                self.z[n] = update_z(self.z[n], c.active, ctx.r_min_c2c, c.c2c_rate);
            }
        }
    }

    pub fn mean_gamma(&self) -> f64 {
        mean(&self.gamma)
    }

    pub fn mean_z(&self) -> f64 {
        mean(&self.z)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Queue-weighted part of the objective, independent of θ and V.
pub fn penalty_constant(ctx: &RoundContext<'_>, policy: &ActionPolicy, queues: &VirtualQueues) -> f64 {
    let fairness: f64 = (0..ctx.num_rc()).map(|m| queues.gamma[m] * (ctx.delta - f64::from(policy.selected(m)))).sum();
    let qos: f64 = policy
        .referrals()
        .filter_map(|(m, n)| ctx.referral_cost(m, n).map(|c| (n, c)))
        .filter(|(_, c)| c.active)
        .map(|(n, c)| queues.z[n] * (ctx.r_min_c2c - c.c2c_rate))
        .sum();
    fairness + qos
}

pub fn objective_coeffs(
    ctx: &RoundContext<'_>,
    policy: &ActionPolicy,
    queues: &VirtualQueues,
    v: f64,
) -> Result<ObjectiveCoeffs> {
    Ok(ObjectiveCoeffs { terms: ctx.participant_coeffs(policy)?, c: penalty_constant(ctx, policy, queues), v })
}

pub fn drift_penalty(
    v: f64,
    policy: &ActionPolicy,
    theta: f64,
    ctx: &RoundContext<'_>,
    queues: &VirtualQueues,
) -> Result<f64> {
    if policy.num_participants() == 0 {
        return Err(Error::EmptyParticipants);
    }
    crate::sghs::f_objective(theta, &objective_coeffs(ctx, policy, queues, v)?)
}

/// What one completed round contributed to the long-term constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0/1 per RC.
    pub selected: Vec<u8>,
    /// Per UnRC: referred while it had its own QoS need.
    pub recommended_active: Vec<bool>,
    /// Per UnRC: C2C rate achieved while referred (0 otherwise).
    pub c2c_rate: Vec<f64>,
}

impl RoundRecord {
    pub fn from_policy(ctx: &RoundContext<'_>, policy: &ActionPolicy) -> Self {
        let mut recommended_active = vec![false; ctx.num_unrc()];
        let mut c2c_rate = vec![0.0; ctx.num_unrc()];
        for (m, n) in policy.referrals() {
            if let Some(c) = ctx.referral_cost(m, n) {
                recommended_active[n] = c.active;
                c2c_rate[n] = c.c2c_rate;
            }
        }
        Self { selected: (0..ctx.num_rc()).map(|m| policy.selected(m)).collect(), recommended_active, c2c_rate }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionHistory {
    records: Vec<RoundRecord>,
}

impl SelectionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: RoundRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Time-average selection rate minus Δ, per RC.
    pub fairness: Vec<f64>,
    /// Mean C2C rate over recommended-active rounds minus R_min, per UnRC;
    /// `None` when the UnRC was never recommended while active.
    pub qos: Vec<Option<f64>>,
}

pub fn constraint_residuals(history: &SelectionHistory, delta: f64, r_min: f64) -> Result<Residuals> {
    let records = history.records();
    let Some(first) = records.first() else {
        return Err(Error::EmptyMetrics);
    };
    let rounds = records.len() as f64;
    let fairness = (0..first.selected.len())
        .map(|m| records.iter().map(|r| f64::from(r.selected[m])).sum::<f64>() / rounds - delta)
        .collect();
    let qos = (0..first.recommended_active.len())
        .map(|n| {
            let (count, total) = records
                .iter()
                .filter(|r| r.recommended_active[n])
                .fold((0usize, 0.0), |(c, s), r| (c + 1, s + r.c2c_rate[n]));
            (count > 0).then(|| total / count as f64 - r_min)
        })
        .collect();
    Ok(Residuals { fairness, qos })
}
