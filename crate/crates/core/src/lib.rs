//! Trust-aware federated client selection with learner referral.
//!
//! Registered clients (RCs) either train themselves or refer a trusted
//! unregistered client (UnRC). Each round a selector picks the referrals and
//! the local accuracy θ by minimising a drift-plus-penalty objective that
//! trades the weighted time/energy cost against fairness and QoS queues.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod baselines;
pub mod central;
pub mod config;
pub mod cost;
pub mod error;
pub mod harness;
pub mod lyap;
pub mod matching;
pub mod net;
pub mod rng;
pub mod round;
pub mod sghs;

pub use action::{ActionPolicy, Choice, ReferralMode, Selection};
pub use baselines::{baseline_select, BaselineKind, Selector, ThetaMode};
pub use central::{centralized_select, enumerate_joint_actions, feasible_actions_per_rc, FeasibleSets};
pub use config::{Method, SimConfig};
pub use cost::{CostBreakdown, CostCoeff, WeightPair};
pub use error::{Error, Result};
pub use harness::{run_simulation, sweep, write_outputs, RoundMetrics, SimulationRun, SweepParam};
pub use lyap::{drift_penalty, LyapConfig, SelectionHistory, VirtualQueues};
pub use matching::{deferred_acceptance, distributed_select, is_stable, MatchingParams, Preferences};
pub use net::{init_topology, MobilityParams, NeighborSets, NetworkState, TrustMatrix};
pub use round::RoundContext;
pub use sghs::{sghs_minimize, ObjectiveCoeffs, SghsParams};
