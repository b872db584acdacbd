//! Distributed selector: RC-proposing deferred acceptance over local
//! utilities, alternated with an SGHS solve for θ.

use serde::{Deserialize, Serialize};

use crate::action::{Choice, Selection};
use crate::central::{action_seed, noop_selection, optimize_theta};
use crate::error::{Error, Result};
use crate::lyap::{objective_coeffs, VirtualQueues};
use crate::round::RoundContext;
use crate::sghs::SghsParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingParams {
    pub max_outer_iterations: usize,
    /// Relative objective change that ends the alternation.
    pub tolerance: f64,
    pub initial_theta: f64,
    /// Drop partners the RC likes less than abstaining.
    pub individual_rationality: bool,
}

impl Default for MatchingParams {
    fn default() -> Self {
        Self { max_outer_iterations: 10, tolerance: 1e-6, initial_theta: 0.5, individual_rationality: true }
    }
}

impl MatchingParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidConfig("matching.max_outer_iterations must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("matching.tolerance must be >= 0".into()));
        }
        if !(self.initial_theta > 0.0 && self.initial_theta < 1.0) {
            return Err(Error::InvalidConfig("matching.initial_theta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Local utility of RC `m` for `choice` at accuracy `theta`;
/// `None` marks an unacceptable partner (untrusted, out of range or too slow).
pub fn utility(
    ctx: &RoundContext<'_>,
    m: usize,
    choice: Choice,
    theta: f64,
    queues: &VirtualQueues,
    v: f64,
) -> Result<Option<f64>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    let Some(cost) = ctx.candidate(m, choice) else {
        return Ok(None);
    };
    if !cost.within_latency {
        return Ok(None);
    }
    if let Choice::Refer(n) = choice {
        if !ctx.sets.sensed[m].contains(&n) {
            return Ok(None);
        }
    }
    let wset = (-theta.ln() * cost.coeff.a + cost.coeff.b) / (1.0 - theta);
    let mut penalty = queues.gamma[m] * (ctx.delta - 1.0);
    if let Choice::Refer(n) = choice {
        if cost.active {
            penalty += queues.z[n] * (ctx.r_min_c2c - cost.c2c_rate);
        }
    }
    Ok(Some(-(v * wset + penalty)))
}

/// Finite-utility partners ordered best first; absent partners are unacceptable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceList {
    pub owner: usize,
    pub entries: Vec<(usize, f64)>,
}

impl PreferenceList {
    fn new(owner: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self { owner, entries }
    }

    /// Position of `partner`, lower is better; `None` when unacceptable.
    pub fn rank(&self, partner: usize) -> Option<usize> {
        self.entries.iter().position(|&(p, _)| p == partner)
    }

    /// Strictly prefers `a` to the current partner (`None` = unmatched).
    pub fn prefers(&self, a: usize, current: Option<usize>) -> bool {
        match (self.rank(a), current.map(|c| self.rank(c))) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(_), Some(None)) => true,
            (Some(ra), Some(Some(rc))) => ra < rc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    /// One list per RC over UnRCs (empty for idle RCs).
    pub rc: Vec<PreferenceList>,
    /// One list per UnRC over RCs.
    pub unrc: Vec<PreferenceList>,
}

impl Preferences {
    /// Both sides rank a pair by the same value `u[m][n]`.
    pub fn from_utility_matrix(u: &[Vec<Option<f64>>], num_unrc: usize) -> Self {
        let unrc_view: Vec<Vec<Option<f64>>> = (0..num_unrc).map(|n| u.iter().map(|row| row[n]).collect()).collect();
        Self::from_matrices(u, &unrc_view)
    }

    /// `rc_u[m][n]` ranks UnRCs for RC `m`; `unrc_u[n][m]` ranks RCs for UnRC `n`.
    pub fn from_matrices(rc_u: &[Vec<Option<f64>>], unrc_u: &[Vec<Option<f64>>]) -> Self {
        let list = |owner: usize, row: &[Option<f64>]| {
            PreferenceList::new(owner, row.iter().enumerate().filter_map(|(p, u)| u.map(|u| (p, u))).collect())
        };
        Self {
            rc: rc_u.iter().enumerate().map(|(m, row)| list(m, row)).collect(),
            unrc: unrc_u.iter().enumerate().map(|(n, row)| list(n, row)).collect(),
        }
    }
}

/// Utility of an RC that refers nobody: only its fairness term remains.
pub fn abstain_utility(ctx: &RoundContext<'_>, m: usize, queues: &VirtualQueues) -> f64 {
    -queues.gamma[m] * ctx.delta
}

/// Utility matrix over busy RCs and their sensed UnRCs at `theta`. With
/// `individual_rationality`, partners not strictly better than abstaining are dropped.
pub fn utility_matrix(
    ctx: &RoundContext<'_>,
    theta: f64,
    queues: &VirtualQueues,
    v: f64,
    individual_rationality: bool,
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut u = vec![vec![None; ctx.num_unrc()]; ctx.num_rc()];
    for (m, row) in u.iter_mut().enumerate() {
        if ctx.is_idle(m) {
            continue;
        }
        let floor = abstain_utility(ctx, m, queues);
        for &n in &ctx.sets.sensed[m] {
            row[n] =
                utility(ctx, m, Choice::Refer(n), theta, queues, v)?.filter(|&x| !individual_rationality || x > floor);
        }
    }
    Ok(u)
}

pub fn build_preferences(
    ctx: &RoundContext<'_>,
    theta: f64,
    queues: &VirtualQueues,
    v: f64,
    individual_rationality: bool,
) -> Result<Preferences> {
    let u = utility_matrix(ctx, theta, queues, v, individual_rationality)?;
    Ok(Preferences::from_utility_matrix(&u, ctx.num_unrc()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub rc_partner: Vec<Option<usize>>,
    pub unrc_partner: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(num_rc: usize, num_unrc: usize) -> Self {
        Self { rc_partner: vec![None; num_rc], unrc_partner: vec![None; num_unrc] }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rc_partner.iter().enumerate().filter_map(|(m, p)| p.map(|n| (m, n)))
    }

    /// Builds a matching from `(rc, unrc)` pairs; rejects reuse of either side.
    pub fn from_pairs(num_rc: usize, num_unrc: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut out = Self::empty(num_rc, num_unrc);
        for &(m, n) in pairs {
            if out.rc_partner[m].is_some() || out.unrc_partner[n].is_some() {
                return Err(Error::InvalidAction(format!("pair ({m}, {n}) reuses a client")));
            }
            out.rc_partner[m] = Some(n);
            out.unrc_partner[n] = Some(m);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matching: Matching,
    pub proposals: usize,
    /// Minimum over held pairs of the proposer's negated utility, after each
    /// proposal round (`inf` while nothing is held).
    pub trace: Vec<f64>,
}

/// RC-proposing deferred acceptance in synchronous rounds.
pub fn deferred_acceptance(prefs: &Preferences) -> MatchOutcome {
    let (num_rc, num_unrc) = (prefs.rc.len(), prefs.unrc.len());
    let mut matching = Matching::empty(num_rc, num_unrc);
    let mut next = vec![0usize; num_rc];
    let mut proposals = 0;
    let mut trace = Vec::new();

    loop {
        let free: Vec<usize> =
            (0..num_rc).filter(|&m| matching.rc_partner[m].is_none() && next[m] < prefs.rc[m].entries.len()).collect();
        if free.is_empty() {
            break;
        }
        for m in free {
            let (n, _) = prefs.rc[m].entries[next[m]];
            next[m] += 1;
            proposals += 1;
            let holder = matching.unrc_partner[n];
            if prefs.unrc[n].prefers(m, holder) {
                if let Some(old) = holder {
                    matching.rc_partner[old] = None;
                }
                matching.unrc_partner[n] = Some(m);
                matching.rc_partner[m] = Some(n);
            }
        }
        let held = matching
            .pairs()
            .filter_map(|(m, n)| prefs.rc[m].entries.iter().find(|e| e.0 == n).map(|e| -e.1))
            .fold(f64::INFINITY, f64::min);
        trace.push(held);
    }
    MatchOutcome { matching, proposals, trace }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Blocking { rc: usize, unrc: usize },
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Stable)
    }
}

pub fn is_stable(matching: &Matching, prefs: &Preferences) -> Stability {
    for (m, list) in prefs.rc.iter().enumerate() {
        for &(n, _) in &list.entries {
            if list.prefers(n, matching.rc_partner[m]) && prefs.unrc[n].prefers(m, matching.unrc_partner[n]) {
                return Stability::Blocking { rc: m, unrc: n };
            }
        }
    }
    Stability::Stable
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributedTrace {
    /// Deferred-acceptance trace of each outer iteration.
    pub stage1: Vec<Vec<f64>>,
    /// `(F(θ_prev), F(θ_new))` for the matched action of each outer iteration.
    pub stage2: Vec<(f64, f64)>,
    pub proposals: Vec<usize>,
    pub objectives: Vec<f64>,
}

impl DistributedTrace {
    pub fn iterations(&self) -> usize {
        self.objectives.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedOutcome {
    pub selection: Selection,
    pub trace: DistributedTrace,
}

/// Alternates matching at fixed θ with SGHS on the matched action until the
/// objective settles; returns the best iterate.
pub fn distributed_select(
    ctx: &RoundContext<'_>,
    queues: &VirtualQueues,
    v: f64,
    sghs: &SghsParams,
    params: &MatchingParams,
    seed: u64,
) -> Result<DistributedOutcome> {
    let mut theta = params.initial_theta;
    let mut trace = DistributedTrace::default();
    let mut best: Option<Selection> = None;
    let mut previous: Option<f64> = None;

    for r in 0..params.max_outer_iterations {
        let prefs = build_preferences(ctx, theta, queues, v, params.individual_rationality)?;
        let outcome = deferred_acceptance(&prefs);
        trace.stage1.push(outcome.trace);
        trace.proposals.push(outcome.proposals);

        let choices = (0..ctx.num_rc())
            .map(|m| match (ctx.is_idle(m), outcome.matching.rc_partner[m]) {
                (true, _) => Choice::Direct,
                (false, Some(n)) => Choice::Refer(n),
                (false, None) => Choice::Abstain,
            })
            .collect();
        let policy = ctx.policy(choices)?;
        if policy.num_participants() == 0 {
            let sel = noop_selection(ctx, queues);
            trace.objectives.push(sel.objective);
            best.get_or_insert(sel);
            break;
        }
        let before = objective_coeffs(ctx, &policy, queues, v)?.eval(theta);
        let sel = optimize_theta(ctx, policy, queues, v, sghs, action_seed(seed, ctx.state.round, r as u64), &[theta])?;
        trace.stage2.push((before, sel.objective));
        trace.objectives.push(sel.objective);

        let value = sel.objective;
        theta = sel.theta;
        if best.as_ref().is_none_or(|b| value < b.objective) {
            best = Some(sel);
        }
        if let Some(prev) = previous {
            if (value - prev).abs() <= params.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        previous = Some(value);
    }

    Ok(DistributedOutcome { selection: best.unwrap_or_else(|| noop_selection(ctx, queues)), trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::net::init_topology;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every one-to-one matching over acceptable pairs.
    fn all_matchings(prefs: &Preferences) -> Vec<Matching> {
        let (nr, nu) = (prefs.rc.len(), prefs.unrc.len());
        let mut out = Vec::new();
        fn go(
            m: usize,
            prefs: &Preferences,
            cur: &mut Vec<(usize, usize)>,
            out: &mut Vec<Matching>,
            nr: usize,
            nu: usize,
        ) {
            if m == nr {
                out.push(Matching::from_pairs(nr, nu, cur).unwrap());
                return;
            }
            go(m + 1, prefs, cur, out, nr, nu);
            for n in 0..nu {
                if cur.iter().any(|p| p.1 == n) {
                    continue;
                }
                if prefs.rc[m].rank(n).is_none() || prefs.unrc[n].rank(m).is_none() {
                    continue;
                }
                cur.push((m, n));
                go(m + 1, prefs, cur, out, nr, nu);
                cur.pop();
            }
        }
        go(0, prefs, &mut Vec::new(), &mut out, nr, nu);
        out
    }

    /// Blocking-pair check written directly from the definition.
    fn brute_stable(m: &Matching, rc_u: &[Vec<Option<f64>>], unrc_u: &[Vec<Option<f64>>]) -> bool {
        let better = |u: Option<f64>, cur: Option<Option<f64>>, id: usize, cur_id: Option<usize>| match (u, cur) {
            (None, _) => false,
            (Some(_), None) | (Some(_), Some(None)) => true,
            (Some(a), Some(Some(b))) => a > b || (a == b && id < cur_id.unwrap()),
        };
        for (i, row) in rc_u.iter().enumerate() {
            for (j, &u) in row.iter().enumerate() {
                let rc_cur = m.rc_partner[i].map(|n| rc_u[i][n]);
                let un_cur = m.unrc_partner[j].map(|k| unrc_u[j][k]);
                if better(u, rc_cur, j, m.rc_partner[i]) && better(unrc_u[j][i], un_cur, i, m.unrc_partner[j]) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn two_by_two_contested_first_choice() {
        // Both RCs rank u0 first; u0 holds RC 1 (higher utility).
        let u = vec![vec![Some(-1.0), Some(-2.0)], vec![Some(-0.5), Some(-3.0)]];
        let prefs = Preferences::from_utility_matrix(&u, 2);
        let out = deferred_acceptance(&prefs);
        assert_eq!(out.matching.rc_partner, vec![Some(1), Some(0)]);
        assert!(is_stable(&out.matching, &prefs).is_stable());
        let all = all_matchings(&prefs);
        assert_eq!(all.len(), 7);
        let unrc_u: Vec<Vec<Option<f64>>> = (0..2).map(|n| u.iter().map(|r| r[n]).collect()).collect();
        let stable: Vec<&Matching> = all.iter().filter(|m| brute_stable(m, &u, &unrc_u)).collect();
        assert!(stable.contains(&&out.matching));
        for m in &all {
            assert_eq!(is_stable(m, &prefs).is_stable(), brute_stable(m, &u, &unrc_u));
        }
    }

    #[test]
    fn empty_lists_leave_everyone_unmatched() {
        let prefs = Preferences::from_utility_matrix(&[vec![None, None], vec![None, None]], 2);
        let out = deferred_acceptance(&prefs);
        assert_eq!(out.matching, Matching::empty(2, 2));
        assert_eq!(out.proposals, 0);
    }

    #[test]
    fn ordering_and_ties() {
        let l = PreferenceList::new(0, vec![(2, -5.0), (1, -3.0), (0, -5.0)]);
        assert_eq!(l.entries, vec![(1, -3.0), (0, -5.0), (2, -5.0)]);
    }

    #[test]
    fn swapped_pairs_are_blocked() {
        let u = vec![vec![Some(-1.0), Some(-2.0)], vec![Some(-2.0), Some(-1.0)]];
        let prefs = Preferences::from_utility_matrix(&u, 2);
        let swapped = Matching::from_pairs(2, 2, &[(0, 1), (1, 0)]).unwrap();
        assert!(matches!(is_stable(&swapped, &prefs), Stability::Blocking { .. }));
        let empty = Matching::empty(2, 2);
        assert_eq!(
            is_stable(&Matching::empty(1, 1), &Preferences::from_utility_matrix(&[vec![Some(-1.0)]], 1)),
            Stability::Blocking { rc: 0, unrc: 0 }
        );
        assert!(!is_stable(&empty, &prefs).is_stable());
    }

    #[test]
    fn random_instances_stable_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let nr = rng.random_range(1..=5);
            let nu = rng.random_range(1..=10);
            let rc_u: Vec<Vec<Option<f64>>> = (0..nr)
                .map(|_| (0..nu).map(|_| rng.random_bool(0.7).then(|| -rng.random::<f64>())).collect())
                .collect();
            let unrc_u: Vec<Vec<Option<f64>>> =
                (0..nu).map(|n| (0..nr).map(|m| rc_u[m][n].map(|_| -rng.random::<f64>())).collect()).collect();
            for prefs in [Preferences::from_matrices(&rc_u, &unrc_u), Preferences::from_utility_matrix(&rc_u, nu)] {
                let out = deferred_acceptance(&prefs);
                assert!(out.proposals <= nr * nu);
                assert!(is_stable(&out.matching, &prefs).is_stable());
            }
            let shared = Preferences::from_utility_matrix(&rc_u, nu);
            let out = deferred_acceptance(&shared);
            assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    fn desk(m: usize, n: usize, seed: u64) -> (SimConfig, crate::net::NetworkState) {
        let config = SimConfig {
            num_rc: m,
            num_unrc: n,
            trust_link_probability: 1.0,
            sensing_radius: 1e3,
            ..SimConfig::default()
        };
        let mut state = init_topology(&config, seed).unwrap();
        state.idle = vec![false; m];
        (config, state)
    }

    #[test]
    fn utility_without_queues_is_scaled_wset() {
        let (config, state) = desk(1, 3, 2);
        let ctx = RoundContext::new(&state, &config).unwrap();
        let q = VirtualQueues::new(1, 3);
        let n = (0..3).find(|&n| ctx.referral_feasible(0, n)).expect("a feasible candidate");
        let c = ctx.referral_cost(0, n).unwrap();
        let theta: f64 = 0.3;
        let wset = (theta.recip().ln() * c.coeff.a + c.coeff.b) / (1.0 - theta);
        assert_eq!(utility(&ctx, 0, Choice::Refer(n), theta, &q, 1.0).unwrap(), Some(-wset));

        let q = VirtualQueues { gamma: vec![2.0], z: vec![1e-5; 3] };
        let qos = if c.active { 1e-5 * (config.lyap.r_min_c2c - c.c2c_rate) } else { 0.0 };
        let expect = -(0.5 * wset + 2.0 * (ctx.delta - 1.0) + qos);
        let got = utility(&ctx, 0, Choice::Refer(n), theta, &q, 0.5).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
        assert!(utility(&ctx, 0, Choice::Refer(n), 1.0, &q, 0.5).is_err());
    }

    #[test]
    fn slow_candidate_is_unacceptable() {
        let (mut config, state) = desk(1, 3, 2);
        config.t_max_cmp = 1e-12;
        let ctx = RoundContext::new(&state, &config).unwrap();
        for n in 0..3 {
            assert_eq!(utility(&ctx, 0, Choice::Refer(n), 0.5, &VirtualQueues::new(1, 3), 1.0).unwrap(), None);
        }
    }

    #[test]
    fn idle_rc_selects_itself() {
        let (config, mut state) = desk(1, 3, 2);
        state.idle = vec![true];
        let ctx = RoundContext::new(&state, &config).unwrap();
        let q = VirtualQueues::new(1, 3);
        let out = distributed_select(&ctx, &q, 1.0, &SghsParams::default(), &MatchingParams::default(), 0).unwrap();
        assert_eq!(out.selection.policy.choices(), &[Choice::Direct]);
        let central = crate::central::centralized_select(&ctx, &q, 1.0, &SghsParams::default(), 100, 0).unwrap();
        assert_eq!(central.policy, out.selection.policy);
        assert!((central.objective - out.selection.objective).abs() <= 1e-6 * central.objective.abs());
    }

    #[test]
    fn alternation_traces_are_monotone_and_deterministic() {
        for seed in 0..5 {
            let (config, state) = desk(2, 3, seed);
            let ctx = RoundContext::new(&state, &config).unwrap();
            let q = VirtualQueues { gamma: vec![0.5, 0.1], z: vec![1e-6; 3] };
            let a =
                distributed_select(&ctx, &q, 1.0, &SghsParams::default(), &MatchingParams::default(), seed).unwrap();
            let b =
                distributed_select(&ctx, &q, 1.0, &SghsParams::default(), &MatchingParams::default(), seed).unwrap();
            assert_eq!(a.selection, b.selection);
            assert!(a.trace.iterations() <= 10);
            for s in &a.trace.stage1 {
                assert!(s.windows(2).all(|w| w[1] <= w[0]));
            }
            for &(before, after) in &a.trace.stage2 {
                assert!(after <= before);
            }
            let central =
                crate::central::centralized_select(&ctx, &q, 1.0, &SghsParams::default(), 1000, seed).unwrap();
            assert!(a.selection.objective >= central.objective - 1e-6 * central.objective.abs());
        }
    }

    #[test]
    fn individual_rationality_drops_partners_worse_than_abstaining() {
        let (config, state) = desk(1, 3, 2);
        let ctx = RoundContext::new(&state, &config).unwrap();
        // Without queue pressure every referral costs more than abstaining.
        let q = VirtualQueues::new(1, 3);
        let prefs = build_preferences(&ctx, 0.5, &q, 1.0, true).unwrap();
        assert!(prefs.rc[0].entries.is_empty());
        let plain = build_preferences(&ctx, 0.5, &q, 1.0, false).unwrap();
        assert!(!plain.rc[0].entries.is_empty());

        // A large fairness queue makes every feasible referral worthwhile.
        let q = VirtualQueues { gamma: vec![1e3], z: vec![0.0; 3] };
        let u = utility_matrix(&ctx, 0.5, &q, 1.0, true).unwrap();
        let floor = abstain_utility(&ctx, 0, &q);
        for (n, &cell) in u[0].iter().enumerate() {
            let raw = utility(&ctx, 0, Choice::Refer(n), 0.5, &q, 1.0).unwrap();
            assert_eq!(cell, raw.filter(|&x| x > floor));
            assert_eq!(cell.is_some(), raw.is_some());
        }
    }
}
