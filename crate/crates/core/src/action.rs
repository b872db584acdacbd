//! Joint participation and referral decisions for one round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a single RC does in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    /// No referral this round.
    Abstain,
    /// The RC trains itself.
    Direct,
    /// The RC recommends UnRC `n` (local UnRC index).
    Refer(usize),
}

impl Choice {
    pub fn participates(&self) -> bool {
        !matches!(self, Choice::Abstain)
    }
}

/// Resource mode of a referral: the UnRC either keeps part of its
/// resources for its own QoS need (partial) or gives them all (full).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReferralMode {
    Partial,
    Full,
}

/// One-to-one assignment of RCs to themselves or to referred UnRCs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionPolicy {
    choices: Vec<Choice>,
    modes: Vec<Option<ReferralMode>>,
}

impl ActionPolicy {
    /// Validates the one-to-one constraints and derives each referral's mode
    /// from the referred UnRC's activity flag.
    pub fn new(choices: Vec<Choice>, active: &[bool]) -> Result<Self> {
        let mut taken = vec![false; active.len()];
        let mut modes = Vec::with_capacity(choices.len());
        for (m, choice) in choices.iter().enumerate() {
            let mode = match *choice {
                Choice::Refer(n) => {
                    if n >= active.len() {
                        return Err(Error::InvalidAction(format!("RC {m} refers unknown UnRC {n}")));
                    }
                    if std::mem::replace(&mut taken[n], true) {
                        return Err(Error::InvalidAction(format!("UnRC {n} assigned twice")));
                    }
                    Some(if active[n] { ReferralMode::Partial } else { ReferralMode::Full })
                }
                _ => None,
            };
            modes.push(mode);
        }
        Ok(Self { choices, modes })
    }

    /// Every RC abstains.
    pub fn noop(num_rc: usize) -> Self {
        Self { choices: vec![Choice::Abstain; num_rc], modes: vec![None; num_rc] }
    }

    pub fn choices(&self) -> &[Choice] {
        &self.choices
    }

    pub fn choice(&self, m: usize) -> Choice {
        self.choices[m]
    }

    /// Participation mode flag: `true` when the RC trains directly.
    pub fn phi(&self, m: usize) -> bool {
        self.choices[m] == Choice::Direct
    }

    pub fn mode(&self, m: usize) -> Option<ReferralMode> {
        self.modes[m]
    }

    /// Number of clients RC `m` put forward this round (0 or 1).
    pub fn selected(&self, m: usize) -> u8 {
        u8::from(self.choices[m].participates())
    }

    pub fn num_participants(&self) -> usize {
        self.choices.iter().filter(|c| c.participates()).count()
    }

    /// `(rc, choice)` for every participating RC.
    pub fn participants(&self) -> impl Iterator<Item = (usize, Choice)> + '_ {
        self.choices.iter().copied().enumerate().filter(|(_, c)| c.participates())
    }

    /// `(rc, unrc)` for every referral.
    pub fn referrals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.choices.iter().enumerate().filter_map(|(m, c)| match c {
            Choice::Refer(n) => Some((m, *n)),
            _ => None,
        })
    }
}

/// Output of a selector for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub policy: ActionPolicy,
    pub theta: f64,
    pub objective: f64,
    /// Set when nobody could participate and the policy is the no-op.
    pub noop: bool,
}
