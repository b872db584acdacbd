//! Fixtures shared by the benchmarks in `benches/`.

use fedref_core::harness::{advance, select};
use fedref_core::{init_topology, Method, NetworkState, SimConfig, VirtualQueues};

/// A round state reached after `warmup` rounds of matching, so the queues
/// carry realistic pressure.
pub fn warmed_round(
    num_rc: usize,
    num_unrc: usize,
    warmup: usize,
    seed: u64,
) -> (SimConfig, NetworkState, VirtualQueues) {
    let config = SimConfig { num_rc, num_unrc, method: Method::Matching, seed, ..SimConfig::default() };
    let mut state = init_topology(&config, seed).expect("valid config");
    let mut queues = VirtualQueues::new(num_rc, num_unrc);
    for t in 1..=warmup {
        advance(&mut state, &config, t);
        let ctx = fedref_core::RoundContext::new(&state, &config).expect("round context");
        let sel = select(&config, &ctx, &queues).expect("selection");
        queues.update(&ctx, &sel.policy);
    }
    advance(&mut state, &config, warmup + 1);
    (config, state, queues)
}
