//! Self-adaptive global-best harmony search over the scalar local accuracy θ.
//!
//! ```text
//! for r in 0..NI:
//!     HMCR ~ N(mu_hmcr, sigma_hmcr), PAR ~ N(mu_par, sigma_par)   (clamped to [0, 1])
//!     if l1 < HMCR:  θ+ = θ_h ± l3 · BW(r);  if l2 < PAR: θ+ = best
//!     else:          θ+ = θ_min + l3 · (θ_max - θ_min)
//!     replace the worst memory entry when F(θ+) is strictly better
//!     every L improvisations: mu_* = mean of the rates that produced accepted entries
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost::CostCoeff;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SghsParams {
    /// Harmony memory size.
    pub hms: usize,
    /// Number of improvisations.
    pub ni: usize,
    /// Period (in improvisations) between HMCR/PAR mean updates.
    pub period: usize,
    pub bw_min: f64,
    pub bw_max: f64,
    pub mu_hmcr: f64,
    pub sigma_hmcr: f64,
    pub mu_par: f64,
    pub sigma_par: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for SghsParams {
    fn default() -> Self {
        Self {
            hms: 5,
            ni: 300,
            period: 100,
            bw_min: 5e-4,
            bw_max: 0.5,
            mu_hmcr: 0.95,
            sigma_hmcr: 0.01,
            mu_par: 0.3,
            sigma_par: 0.05,
            theta_min: 1e-6,
            theta_max: 0.999,
        }
    }
}

impl SghsParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(format!("sghs: {msg}")));
        if self.hms < 2 {
            return fail("hms must be at least 2");
        }
        if self.ni == 0 || self.period == 0 {
            return fail("ni and period must be positive");
        }
        if !(self.bw_min > 0.0 && self.bw_min <= self.bw_max) {
            return fail("need 0 < bw_min <= bw_max");
        }
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max < 1.0) {
            return fail("need 0 < theta_min < theta_max < 1");
        }
        if !(self.sigma_hmcr >= 0.0 && self.sigma_par >= 0.0) {
            return fail("standard deviations must be non-negative");
        }
        Ok(())
    }

    fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.theta_min, self.theta_max)
    }
}

/// Coefficients of the per-round θ objective
/// `F(θ) = V · max_i [ln(1/θ)·A_i + B_i] / (1 - θ) + C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCoeffs {
    /// One `(A, B)` pair per participant.
    pub terms: Vec<CostCoeff>,
    /// Queue penalty constant.
    pub c: f64,
    pub v: f64,
}

impl ObjectiveCoeffs {
    pub fn single(a: f64, b: f64, c: f64, v: f64) -> Self {
        Self { terms: vec![CostCoeff { a, b }], c, v }
    }

    /// Evaluates `F` without the domain check; callers keep θ inside `(0, 1)`.
    pub fn eval(&self, theta: f64) -> f64 {
        let iters = -theta.ln();
        let worst = self.terms.iter().map(|t| iters * t.a + t.b).fold(f64::NEG_INFINITY, f64::max);
        if self.terms.is_empty() {
            return self.c;
        }
        self.v * worst / (1.0 - theta) + self.c
    }
}

pub fn f_objective(theta: f64, coeffs: &ObjectiveCoeffs) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    Ok(coeffs.eval(theta))
}

/// Search bandwidth at improvisation `r`: linear decay over the first half, then `bw_min`.
pub fn bw_at(r: usize, params: &SghsParams) -> f64 {
    let ni = params.ni as f64;
    if (r as f64) < ni / 2.0 {
        params.bw_max - (params.bw_max - params.bw_min) * 2.0 * r as f64 / ni
    } else {
        params.bw_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonyMemory {
    entries: Vec<(f64, f64)>,
    hmcr_record: Vec<f64>,
    par_record: Vec<f64>,
}

impl HarmonyMemory {
    fn new(entries: Vec<(f64, f64)>) -> Self {
        Self { entries, hmcr_record: Vec::new(), par_record: Vec::new() }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn best_index(&self) -> usize {
        (0..self.entries.len())
            .min_by(|&a, &b| self.entries[a].1.total_cmp(&self.entries[b].1))
            .expect("non-empty memory")
    }

    pub fn worst_index(&self) -> usize {
        (0..self.entries.len())
            .max_by(|&a, &b| self.entries[a].1.total_cmp(&self.entries[b].1))
            .expect("non-empty memory")
    }

    pub fn best(&self) -> (f64, f64) {
        self.entries[self.best_index()]
    }

    pub fn worst(&self) -> (f64, f64) {
        self.entries[self.worst_index()]
    }
}

/// Memory envelope after one improvisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub best_theta: f64,
    pub best_value: f64,
    pub worst_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SghsOutcome {
    pub theta: f64,
    pub value: f64,
    pub trace: Vec<TracePoint>,
    pub memory: HarmonyMemory,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn draw_rate<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    let x = if std > 0.0 { Normal::new(mean, std).expect("finite std").sample(rng) } else { mean };
    x.clamp(0.0, 1.0)
}

pub fn sghs_minimize<F: FnMut(f64) -> f64>(objective: F, params: &SghsParams, seed: u64) -> SghsOutcome {
    sghs_minimize_from(objective, params, seed, &[])
}

/// Like [`sghs_minimize`], with `initial` thetas placed in the starting memory.
pub fn sghs_minimize_from<F: FnMut(f64) -> f64>(
    mut objective: F,
    params: &SghsParams,
    seed: u64,
    initial: &[f64],
) -> SghsOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = params.theta_max - params.theta_min;

    let entries = (0..params.hms)
        .map(|i| {
            let theta = match initial.get(i) {
                Some(&t) => params.clamp(t),
                None => params.theta_min + rng.random::<f64>() * span,
            };
            (theta, sanitize(objective(theta)))
        })
        .collect();
    let mut hm = HarmonyMemory::new(entries);

    let (mut mu_hmcr, mut mu_par) = (params.mu_hmcr, params.mu_par);
    let mut trace = Vec::with_capacity(params.ni);
    let mut since_update = 0;

    for r in 0..params.ni {
        let hmcr = draw_rate(&mut rng, mu_hmcr, params.sigma_hmcr);
        let par = draw_rate(&mut rng, mu_par, params.sigma_par);
        let bw = bw_at(r, params);
        let (l1, l2, l3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());

        let candidate = if l1 < hmcr {
            let h = rng.random_range(0..hm.entries.len());
            let step = if rng.random_bool(0.5) { l3 * bw } else { -l3 * bw };
            if l2 < par {
                hm.best().0
            } else {
                hm.entries[h].0 + step
            }
        } else {
            params.theta_min + l3 * span
        };
        let candidate = params.clamp(candidate);
        let value = sanitize(objective(candidate));

        let worst = hm.worst_index();
        if value < hm.entries[worst].1 {
            hm.entries[worst] = (candidate, value);
            hm.hmcr_record.push(hmcr);
            hm.par_record.push(par);
        }

        since_update += 1;
        if since_update == params.period {
            since_update = 0;
            if !hm.hmcr_record.is_empty() {
                let n = hm.hmcr_record.len() as f64;
                mu_hmcr = hm.hmcr_record.iter().sum::<f64>() / n;
                mu_par = hm.par_record.iter().sum::<f64>() / n;
                hm.hmcr_record.clear();
                hm.par_record.clear();
            }
        }

        let (best_theta, best_value) = hm.best();
        trace.push(TracePoint { best_theta, best_value, worst_value: hm.worst().1 });
    }

    let (theta, value) = hm.best();
    SghsOutcome { theta, value, trace, memory: hm }
}

/// Minimises `F` for the given coefficients.
pub fn minimize_coeffs(coeffs: &ObjectiveCoeffs, params: &SghsParams, seed: u64) -> SghsOutcome {
    sghs_minimize(|t| coeffs.eval(t), params, seed)
}
