//! Comparison selectors sharing the centralized feasibility filter.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Choice, Selection};
use crate::central::{action_seed, feasible_actions_per_rc, noop_selection, optimize_theta};
use crate::error::Result;
use crate::lyap::drift_penalty;
use crate::lyap::VirtualQueues;
use crate::rng::{stream, Purpose};
use crate::round::RoundContext;
use crate::sghs::SghsParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    /// Highest-trust feasible candidate.
    Greedy,
    /// Uniform over feasible candidates.
    Random,
    /// Uniform over feasible candidates with their own QoS need.
    SQoS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThetaMode {
    Sghs,
    RandomTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BaselineKind {
    pub selector: Selector,
    pub theta_mode: ThetaMode,
}

impl BaselineKind {
    pub const fn new(selector: Selector, theta_mode: ThetaMode) -> Self {
        Self { selector, theta_mode }
    }

    pub fn name(&self) -> &'static str {
        match (self.selector, self.theta_mode) {
            (Selector::Greedy, ThetaMode::Sghs) => "greedy-sghs",
            (Selector::Random, ThetaMode::Sghs) => "random-sghs",
            (Selector::SQoS, ThetaMode::Sghs) => "sqos-sghs",
            (Selector::Greedy, ThetaMode::RandomTheta) => "greedy-random",
            (Selector::Random, ThetaMode::RandomTheta) => "random-random",
            (Selector::SQoS, ThetaMode::RandomTheta) => "sqos-random",
        }
    }
}

/// Per-RC choices of a baseline; RCs are served in ascending order and
/// later RCs only see candidates nobody has taken yet.
pub fn baseline_choices(selector: Selector, ctx: &RoundContext<'_>, seed: u64) -> Vec<Choice> {
    let fs = feasible_actions_per_rc(ctx);
    let mut rng = stream(seed, ctx.state.round as u64, Purpose::Selector, 0);
    let mut taken = vec![false; ctx.num_unrc()];
    fs.options
        .iter()
        .enumerate()
        .map(|(m, options)| {
            if fs.idle[m] {
                return Choice::Direct;
            }
            let open: Vec<usize> = options
                .iter()
                .filter_map(|c| match *c {
                    Choice::Refer(n) if !taken[n] => Some(n),
                    _ => None,
                })
                .filter(|&n| selector != Selector::SQoS || ctx.state.active[n])
                .collect();
            let pick = match selector {
                Selector::Greedy => open
                    .iter()
                    .copied()
                    .max_by(|&a, &b| ctx.state.trust.get(m, a).total_cmp(&ctx.state.trust.get(m, b)).then(b.cmp(&a))),
                Selector::Random | Selector::SQoS => open.choose(&mut rng).copied(),
            };
            match pick {
                Some(n) => {
                    taken[n] = true;
                    Choice::Refer(n)
                }
                None => Choice::Abstain,
            }
        })
        .collect()
}

pub fn baseline_select(
    kind: BaselineKind,
    ctx: &RoundContext<'_>,
    queues: &VirtualQueues,
    v: f64,
    params: &SghsParams,
    seed: u64,
) -> Result<Selection> {
    let policy = ctx.policy(baseline_choices(kind.selector, ctx, seed))?;
    if policy.num_participants() == 0 {
        return Ok(noop_selection(ctx, queues));
    }
    match kind.theta_mode {
        ThetaMode::Sghs => optimize_theta(ctx, policy, queues, v, params, action_seed(seed, ctx.state.round, 0), &[]),
        ThetaMode::RandomTheta => {
            let mut rng = stream(seed, ctx.state.round as u64, Purpose::Selector, 1);
            let theta = rng.random_range(params.theta_min..=params.theta_max);
            let objective = drift_penalty(v, &policy, theta, ctx, queues)?;
            Ok(Selection { policy, theta, objective, noop: false })
        }
    }
}
