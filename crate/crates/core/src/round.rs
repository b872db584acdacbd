//! Per-round evaluation context: every RC's direct and referral costs
//! precomputed from one network snapshot.

use crate::action::{ActionPolicy, Choice};
use crate::config::SimConfig;
use crate::cost::{
    c2c_rate, compute_cost, uplink_rate, upload_cost, CostBreakdown, CostCoeff, LinkParams, ResourceShare, WeightPair,
};
use crate::error::{Error, Result};
use crate::net::{derive_neighbor_sets, NeighborSets, NetworkState};

/// Cost profile of one RC-candidate pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateCost {
    pub breakdown: CostBreakdown,
    pub coeff: CostCoeff,
    pub share: ResourceShare,
    /// Trust toward the RC (1 for the RC itself).
    pub trust: f64,
    /// Referred UnRC has its own QoS need this round.
    pub active: bool,
    /// C2C rate the UnRC achieves while referred (0 when not active or unpaired).
    pub c2c_rate: f64,
    /// One local iteration fits within the computation-time bound.
    pub within_latency: bool,
}

#[derive(Debug, Clone)]
pub struct RoundContext<'a> {
    pub state: &'a NetworkState,
    pub sets: NeighborSets,
    pub weights: WeightPair,
    pub delta: f64,
    pub r_min_c2c: f64,
    pub t_max_cmp: f64,
    direct: Vec<CandidateCost>,
    /// `referral[m][n]`, `None` when untrusted or the link has zero rate.
    referral: Vec<Vec<Option<CandidateCost>>>,
}

impl<'a> RoundContext<'a> {
    pub fn new(state: &'a NetworkState, config: &SimConfig) -> Result<Self> {
        let sets = derive_neighbor_sets(state, config.sensing_radius);
        Self::with_sets(state, config, sets)
    }

    pub fn with_sets(state: &'a NetworkState, config: &SimConfig, sets: NeighborSets) -> Result<Self> {
        let weights = WeightPair::new(config.lambda_t, config.lambda_e)?;
        let n0 = config.noise_density();
        let bandwidth = config.bandwidth;

        let pair_cost = |client: usize, share: ResourceShare| -> Result<Option<(CostBreakdown, f64)>> {
            let c = &state.clients[client];
            let link = LinkParams { bandwidth, noise_density: n0, gain: state.uplink_gain[client], p_max: c.p_max };
            let rate = uplink_rate(&link, share);
            let Ok((t_com, e_com)) = upload_cost(c.model_size, rate, share.power, c.p_max) else {
                return Ok(None);
            };
            let Ok((t_cmp, e_cmp)) = compute_cost(state.samples[client], c.b, c.f, share.power, c.rho, config.zeta)
            else {
                return Ok(None);
            };
            Ok(Some((CostBreakdown { t_com, e_com, t_cmp, e_cmp }, rate)))
        };

        let mut direct = Vec::with_capacity(state.num_rc);
        for m in 0..state.num_rc {
            let (breakdown, _) = pair_cost(m, ResourceShare::FULL)?.ok_or(Error::InfeasibleLink)?;
            direct.push(CandidateCost {
                breakdown,
                coeff: breakdown.coeff(weights),
                share: ResourceShare::FULL,
                trust: 1.0,
                active: false,
                c2c_rate: 0.0,
                within_latency: breakdown.t_cmp <= config.t_max_cmp,
            });
        }

        let mut referral = vec![vec![None; state.num_unrc]; state.num_rc];
        for (m, row) in referral.iter_mut().enumerate() {
            let row_sum = state.trust.row_sum(m);
            for &n in &sets.trusted[m] {
                let w = state.trust.get(m, n);
                let active = state.active[n];
                let share = ResourceShare::referral(w, row_sum, active)?;
                let Some((breakdown, _)) = pair_cost(state.num_rc + n, share)? else {
                    continue;
                };
                let c2c = match (active, state.c2c_partner[n]) {
                    (true, Some(partner)) => {
                        c2c_rate(true, w, state.c2c_gain_between(n, partner), state.unrc(n).p_max, bandwidth, n0)
                    }
                    _ => 0.0,
                };
                row[n] = Some(CandidateCost {
                    breakdown,
                    coeff: breakdown.coeff(weights),
                    share,
                    trust: w,
                    active,
                    c2c_rate: c2c,
                    within_latency: breakdown.t_cmp <= config.t_max_cmp,
                });
            }
        }

        Ok(Self {
            state,
            sets,
            weights,
            delta: config.delta(),
            r_min_c2c: config.lyap.r_min_c2c,
            t_max_cmp: config.t_max_cmp,
            direct,
            referral,
        })
    }

    pub fn num_rc(&self) -> usize {
        self.state.num_rc
    }

    pub fn num_unrc(&self) -> usize {
        self.state.num_unrc
    }

    pub fn is_idle(&self, m: usize) -> bool {
        self.state.idle[m]
    }

    pub fn direct_cost(&self, m: usize) -> &CandidateCost {
        &self.direct[m]
    }

    pub fn referral_cost(&self, m: usize, n: usize) -> Option<&CandidateCost> {
        self.referral[m][n].as_ref()
    }

    pub fn candidate(&self, m: usize, choice: Choice) -> Option<&CandidateCost> {
        match choice {
            Choice::Abstain => None,
            Choice::Direct => Some(&self.direct[m]),
            Choice::Refer(n) => self.referral_cost(m, n),
        }
    }

    /// A referral is feasible when the link carries data and one local
    /// iteration meets the computation-time bound.
    pub fn referral_feasible(&self, m: usize, n: usize) -> bool {
        self.referral_cost(m, n).is_some_and(|c| c.within_latency)
    }

    /// Builds a validated policy from per-RC choices.
    pub fn policy(&self, choices: Vec<Choice>) -> Result<ActionPolicy> {
        ActionPolicy::new(choices, &self.state.active)
    }

    /// Cost coefficients of every participant in `policy`.
    pub fn participant_coeffs(&self, policy: &ActionPolicy) -> Result<Vec<CostCoeff>> {
        policy
            .participants()
            .map(|(m, c)| self.candidate(m, c).map(|cc| cc.coeff).ok_or(Error::InfeasibleLink))
            .collect()
    }
}
