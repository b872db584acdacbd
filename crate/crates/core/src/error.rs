use thiserror::Error;

/// Errors raised by the simulator and its selectors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("local accuracy {0} outside the open interval (0, 1)")]
    ThetaOutOfDomain(f64),

    #[error("infeasible link: achievable rate is zero")]
    InfeasibleLink,

    #[error("infeasible computation: resource fraction is zero")]
    InfeasibleCompute,

    #[error("RC {0} has no trusted candidates")]
    NoTrustedCandidates(usize),

    #[error("action has no participating client")]
    EmptyParticipants,

    #[error("action violates one-to-one assignment: {0}")]
    InvalidAction(String),

    #[error(
        "joint action space exceeds the enumeration cap ({count} > {cap}); \
         use the distributed matching selector instead"
    )]
    EnumerationExplosion { count: u128, cap: u64 },

    #[error("trust heterogeneity undefined: RC {0} has an empty candidate row")]
    UndefinedHeterogeneity(usize),

    #[error("empty action space")]
    EmptyActionSpace,

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no metrics to write")]
    EmptyMetrics,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
