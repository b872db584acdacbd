//! Exhaustive centralized selector: per-RC feasible options, one-to-one
//! joint-action enumeration, and an SGHS solve for θ per joint action.

use serde::{Deserialize, Serialize};

use crate::action::{ActionPolicy, Choice, Selection};
use crate::error::{Error, Result};
use crate::lyap::{objective_coeffs, penalty_constant, VirtualQueues};
use crate::rng::{stream_seed, Purpose};
use crate::round::RoundContext;
use crate::sghs::{sghs_minimize_from, SghsParams};

/// θ reported for a round in which nobody participates.
pub const NOOP_THETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleSets {
    pub idle: Vec<bool>,
    /// Options per RC in enumeration order: `[Direct]` for idle RCs,
    /// `[Abstain, Refer(n)...]` (ascending `n`) for busy ones.
    pub options: Vec<Vec<Choice>>,
}

/// Idle RCs train themselves; busy RCs may abstain or refer any sensed
/// UnRC whose link carries data and whose local iteration meets `T_max`.
pub fn feasible_actions_per_rc(ctx: &RoundContext<'_>) -> FeasibleSets {
    let idle: Vec<bool> = (0..ctx.num_rc()).map(|m| ctx.is_idle(m)).collect();
    let options = idle
        .iter()
        .enumerate()
        .map(|(m, &is_idle)| {
            if is_idle {
                return vec![Choice::Direct];
            }
            std::iter::once(Choice::Abstain)
                .chain(ctx.sets.sensed[m].iter().filter(|&&n| ctx.referral_feasible(m, n)).map(|&n| Choice::Refer(n)))
                .collect()
        })
        .collect();
    FeasibleSets { idle, options }
}

/// Product of the option counts: an upper bound on the joint-action count.
pub fn joint_action_bound(fs: &FeasibleSets) -> u128 {
    fs.options.iter().map(|o| o.len() as u128).product()
}

/// Visits every one-to-one joint action in lexicographic order.
/// Stops early when `visit` returns `false`.
pub fn for_each_joint_action<F: FnMut(&[Choice]) -> bool>(fs: &FeasibleSets, num_unrc: usize, mut visit: F) {
    fn go<F: FnMut(&[Choice]) -> bool>(
        fs: &FeasibleSets,
        m: usize,
        current: &mut Vec<Choice>,
        taken: &mut [bool],
        visit: &mut F,
    ) -> bool {
        if m == fs.options.len() {
            return visit(current);
        }
        for &choice in &fs.options[m] {
            if let Choice::Refer(n) = choice {
                if taken[n] {
                    continue;
                }
                taken[n] = true;
            }
            current.push(choice);
            let more = go(fs, m + 1, current, taken, visit);
            current.pop();
            if let Choice::Refer(n) = choice {
                taken[n] = false;
            }
            if !more {
                return false;
            }
        }
        true
    }
    let mut taken = vec![false; num_unrc];
    go(fs, 0, &mut Vec::with_capacity(fs.options.len()), &mut taken, &mut visit);
}

/// Exact number of joint actions, or an explosion error once it exceeds `cap`.
pub fn count_joint_actions(fs: &FeasibleSets, num_unrc: usize, cap: u64) -> Result<u64> {
    let mut count = 0u64;
    for_each_joint_action(fs, num_unrc, |_| {
        count += 1;
        count <= cap
    });
    if count > cap {
        return Err(Error::EnumerationExplosion { count: joint_action_bound(fs), cap });
    }
    Ok(count)
}

pub fn enumerate_joint_actions(fs: &FeasibleSets, num_unrc: usize, cap: u64) -> Result<Vec<Vec<Choice>>> {
    count_joint_actions(fs, num_unrc, cap)?;
    let mut out = Vec::new();
    for_each_joint_action(fs, num_unrc, |a| {
        out.push(a.to_vec());
        true
    });
    Ok(out)
}

/// Runs SGHS for θ on a fixed policy and evaluates the drift-plus-penalty value.
pub fn optimize_theta(
    ctx: &RoundContext<'_>,
    policy: ActionPolicy,
    queues: &VirtualQueues,
    v: f64,
    params: &SghsParams,
    seed: u64,
    initial: &[f64],
) -> Result<Selection> {
    if policy.num_participants() == 0 {
        return Ok(noop_selection(ctx, queues));
    }
    let coeffs = objective_coeffs(ctx, &policy, queues, v)?;
    let out = sghs_minimize_from(|t| coeffs.eval(t), params, seed, initial);
    Ok(Selection { policy, theta: out.theta, objective: out.value, noop: false })
}

/// The all-abstain selection, valued at its queue penalty.
pub fn noop_selection(ctx: &RoundContext<'_>, queues: &VirtualQueues) -> Selection {
    let policy = ActionPolicy::noop(ctx.num_rc());
    let objective = penalty_constant(ctx, &policy, queues);
    Selection { policy, theta: NOOP_THETA, objective, noop: true }
}

/// SGHS seed of the `index`-th solve in this round.
pub fn action_seed(seed: u64, round: usize, index: u64) -> u64 {
    stream_seed(seed, round as u64, Purpose::Sghs, index)
}

/// Exhaustive argmin over joint actions; ties keep the earliest action.
///
/// Every action shares one SGHS seed, so actions whose objectives coincide
/// get identical values and the tie really goes to enumeration order.
pub fn centralized_select(
    ctx: &RoundContext<'_>,
    queues: &VirtualQueues,
    v: f64,
    params: &SghsParams,
    cap: u64,
    seed: u64,
) -> Result<Selection> {
    let fs = feasible_actions_per_rc(ctx);
    count_joint_actions(&fs, ctx.num_unrc(), cap)?;

    let mut best: Option<Selection> = None;
    let mut failure = None;
    let sghs_seed = action_seed(seed, ctx.state.round, 0);
    for_each_joint_action(&fs, ctx.num_unrc(), |choices| {
        // The all-abstain action has no participant cost and is worth its queue penalty.
        let result = if choices.iter().any(Choice::participates) {
            ctx.policy(choices.to_vec())
                .and_then(|policy| optimize_theta(ctx, policy, queues, v, params, sghs_seed, &[]))
        } else {
            Ok(noop_selection(ctx, queues))
        };
        match result {
            Ok(sel) => {
                if best.as_ref().is_none_or(|b| sel.objective < b.objective) {
                    best = Some(sel);
                }
                true
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(best.unwrap_or_else(|| noop_selection(ctx, queues)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::lyap::drift_penalty;
    use crate::net::{init_topology, NetworkState};

    fn fs(options: Vec<Vec<Choice>>) -> FeasibleSets {
        FeasibleSets { idle: options.iter().map(|o| o == &[Choice::Direct]).collect(), options }
    }

    #[test]
    fn shared_candidate_gives_three_actions() {
        let f = fs(vec![vec![Choice::Abstain, Choice::Refer(0)], vec![Choice::Abstain, Choice::Refer(0)]]);
        let all = enumerate_joint_actions(&f, 1, 100).unwrap();
        assert_eq!(
            all,
            vec![
                vec![Choice::Abstain, Choice::Abstain],
                vec![Choice::Abstain, Choice::Refer(0)],
                vec![Choice::Refer(0), Choice::Abstain],
            ]
        );
    }

    #[test]
    fn all_idle_single_action() {
        let f = fs(vec![vec![Choice::Direct]; 4]);
        assert_eq!(enumerate_joint_actions(&f, 3, 10).unwrap(), vec![vec![Choice::Direct; 4]]);
    }

    #[test]
    fn cap_triggers_explosion() {
        let opts: Vec<Choice> = std::iter::once(Choice::Abstain).chain((0..9).map(Choice::Refer)).collect();
        let f = fs(vec![opts; 4]);
        let err = count_joint_actions(&f, 9, 100).unwrap_err();
        assert!(matches!(err, Error::EnumerationExplosion { cap: 100, .. }));
    }

    #[test]
    fn count_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = 4;
            let options: Vec<Vec<Choice>> = (0..3)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        vec![Choice::Direct]
                    } else {
                        std::iter::once(Choice::Abstain)
                            .chain((0..n).filter(|_| rng.random_bool(0.6)).map(Choice::Refer))
                            .collect()
                    }
                })
                .collect();
            let f = fs(options.clone());
            // Cartesian product, then filter duplicates.
            let mut brute = 0;
            for a in &options[0] {
                for b in &options[1] {
                    for c in &options[2] {
                        let refs: Vec<usize> = [a, b, c]
                            .iter()
                            .filter_map(|x| if let Choice::Refer(k) = x { Some(*k) } else { None })
                            .collect();
                        let mut dedup = refs.clone();
                        dedup.sort();
                        dedup.dedup();
                        if dedup.len() == refs.len() {
                            brute += 1;
                        }
                    }
                }
            }
            let counted = count_joint_actions(&f, n, 1_000).unwrap();
            assert_eq!(counted, brute);
            assert!(u128::from(counted) <= joint_action_bound(&f));
        }
    }

    fn desk() -> (SimConfig, NetworkState) {
        let config = SimConfig {
            num_rc: 2,
            num_unrc: 3,
            trust_link_probability: 1.0,
            sensing_radius: 1e3,
            ..SimConfig::default()
        };
        let mut state = init_topology(&config, 8).unwrap();
        state.idle = vec![false, false];
        state.active = vec![true, false, false];
        (config, state)
    }

    #[test]
    fn feasible_sets_follow_idle_and_latency() {
        let (config, mut state) = desk();
        state.idle[1] = true;
        let ctx = RoundContext::new(&state, &config).unwrap();
        let f = feasible_actions_per_rc(&ctx);
        assert_eq!(f.options[1], vec![Choice::Direct]);
        assert_eq!(f.options[0][0], Choice::Abstain);
        for c in &f.options[0][1..] {
            let Choice::Refer(n) = *c else { panic!() };
            assert!(ctx.referral_cost(0, n).unwrap().breakdown.t_cmp <= config.t_max_cmp);
        }

        let strict = SimConfig { t_max_cmp: 1e-9, ..config };
        let ctx = RoundContext::new(&state, &strict).unwrap();
        assert_eq!(feasible_actions_per_rc(&ctx).options[0], vec![Choice::Abstain]);
    }

    #[test]
    fn matches_action_theta_grid_oracle() {
        let (config, state) = desk();
        let ctx = RoundContext::new(&state, &config).unwrap();
        let queues = VirtualQueues { gamma: vec![0.4, 1.3], z: vec![2e-6, 0.0, 0.0] };
        let v = 0.7;
        let sel = centralized_select(&ctx, &queues, v, &SghsParams::default(), 1_000, 3).unwrap();

        let fs = feasible_actions_per_rc(&ctx);
        let actions = enumerate_joint_actions(&fs, 3, 1_000).unwrap();
        assert!(actions.len() > 2);
        let mut oracle = f64::INFINITY;
        for a in actions {
            let policy = ctx.policy(a).unwrap();
            if policy.num_participants() == 0 {
                oracle = oracle.min(crate::lyap::penalty_constant(&ctx, &policy, &queues));
                continue;
            }
            let mut theta = 1e-6;
            while theta <= 0.999 {
                oracle = oracle.min(drift_penalty(v, &policy, theta, &ctx, &queues).unwrap());
                theta += 1e-4;
            }
        }
        assert!(sel.objective <= oracle + 1e-6 * oracle.abs(), "{} vs {}", sel.objective, oracle);
        let again = centralized_select(&ctx, &queues, v, &SghsParams::default(), 1_000, 3).unwrap();
        assert_eq!(sel, again);
    }

    #[test]
    fn single_action_returned_unchanged() {
        let (config, mut state) = desk();
        state.idle = vec![true, true];
        let ctx = RoundContext::new(&state, &config).unwrap();
        let sel = centralized_select(&ctx, &VirtualQueues::new(2, 3), 1.0, &SghsParams::default(), 10, 0).unwrap();
        assert_eq!(sel.policy.choices(), &[Choice::Direct, Choice::Direct]);
    }

    #[test]
    fn nobody_feasible_is_noop() {
        let (mut config, state) = desk();
        config.t_max_cmp = 1e-12;
        let ctx = RoundContext::new(&state, &config).unwrap();
        let sel = centralized_select(&ctx, &VirtualQueues::new(2, 3), 1.0, &SghsParams::default(), 10, 0).unwrap();
        assert!(sel.noop);
        assert_eq!(sel.policy.num_participants(), 0);
    }

    #[test]
    fn empty_queues_make_abstaining_optimal() {
        let (config, state) = desk();
        let ctx = RoundContext::new(&state, &config).unwrap();
        let sel = centralized_select(&ctx, &VirtualQueues::new(2, 3), 1.0, &SghsParams::default(), 1_000, 0).unwrap();
        assert!(sel.noop);
        assert_eq!(sel.objective, 0.0);
    }
}
