//! Simulation configuration.
//!
//! Parsed from TOML. Every struct rejects unknown keys, and missing keys fall
//! back to the reference scenario (10 RCs, 60 UnRCs, 50 m community).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, Selector, ThetaMode};
use crate::error::{Error, Result};
use crate::lyap::LyapConfig;
use crate::matching::MatchingParams;
use crate::net::MobilityParams;
use crate::sghs::SghsParams;

/// Client-selection method driven by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Centralized,
    Matching,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Centralized,
        Method::Matching,
        Method::Baseline(BaselineKind::new(Selector::Greedy, ThetaMode::Sghs)),
        Method::Baseline(BaselineKind::new(Selector::Random, ThetaMode::Sghs)),
        Method::Baseline(BaselineKind::new(Selector::SQoS, ThetaMode::Sghs)),
        Method::Baseline(BaselineKind::new(Selector::Greedy, ThetaMode::RandomTheta)),
        Method::Baseline(BaselineKind::new(Selector::Random, ThetaMode::RandomTheta)),
        Method::Baseline(BaselineKind::new(Selector::SQoS, ThetaMode::RandomTheta)),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Centralized => "centralized",
            Method::Matching => "matching",
            Method::Baseline(kind) => kind.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Number of registered clients (RCs).
    pub num_rc: usize,
    /// Number of unregistered clients (UnRCs).
    pub num_unrc: usize,
    /// Radius of the circular community around the server (m).
    pub area_radius: f64,
    /// RC sensing radius for referral candidacy (m).
    pub sensing_radius: f64,
    /// Maximum client-to-client link distance (m).
    pub c2c_range: f64,
    /// Uplink bandwidth (Hz).
    pub bandwidth: f64,
    /// Carrier frequency (Hz). Recorded only; the path-loss model is reference-distance based.
    pub carrier_frequency: f64,
    /// Thermal noise spectral density (dBm/Hz).
    pub noise_density_dbm_hz: f64,
    /// Attenuation at the 1 m reference distance (dB).
    pub path_loss_ref_db: f64,
    pub path_loss_exponent: f64,
    /// Transmit power budget of RCs (W).
    pub p_rc_max: f64,
    /// Transmit power budget of UnRCs (W).
    pub p_urc_max: f64,
    /// CPU frequency of RCs (cycles/s).
    pub f_rc: f64,
    /// CPU frequency of UnRCs (cycles/s).
    pub f_urc: f64,
    /// Effective switched capacitance.
    pub rho: f64,
    /// Computation power exponent, must exceed 2.
    pub zeta: f64,
    /// Poisson mean of per-round training samples per client.
    pub q_mean: f64,
    /// CPU cycles per training sample.
    pub cycles_per_sample: f64,
    /// Size of a local model update (bit).
    pub model_size_bits: f64,
    /// Upper bound on one local iteration's computation time (s).
    pub t_max_cmp: f64,
    pub lambda_t: f64,
    pub lambda_e: f64,
    /// Probability that an RC has spare resources in a round.
    pub idle_probability: f64,
    /// Probability that an UnRC has its own QoS need in a round.
    pub active_probability: f64,
    /// Probability of an RC-UnRC social link.
    pub trust_link_probability: f64,
    /// Lower end of the trust weight range; weights are drawn from `(trust_floor, 1]`.
    pub trust_floor: f64,
    /// Maximum joint actions the centralized selector may enumerate.
    pub enumeration_cap: u64,
    /// Number of rounds to simulate.
    pub horizon: usize,
    pub method: Method,
    pub seed: u64,
    pub lyap: LyapConfig,
    pub sghs: SghsParams,
    pub mobility: MobilityParams,
    pub matching: MatchingParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_rc: 10,
            num_unrc: 60,
            area_radius: 50.0,
            sensing_radius: 18.0,
            c2c_range: 5.0,
            bandwidth: 2e5,
            carrier_frequency: 2.3e9,
            noise_density_dbm_hz: -174.0,
            path_loss_ref_db: 30.0,
            path_loss_exponent: 3.0,
            p_rc_max: 0.5,
            p_urc_max: 0.3,
            f_rc: 2e8,
            f_urc: 2e7,
            rho: 1e-27,
            zeta: 3.0,
            q_mean: 1e4,
            cycles_per_sample: 10.0,
            model_size_bits: 1e5,
            t_max_cmp: 0.1,
            lambda_t: 1.0 / 6.0,
            lambda_e: 5.0 / 6.0,
            idle_probability: 0.5,
            active_probability: 0.5,
            trust_link_probability: 0.3,
            trust_floor: 0.0,
            enumeration_cap: 10_000_000,
            horizon: 300,
            method: Method::Matching,
            seed: 0,
            lyap: LyapConfig::default(),
            sghs: SghsParams::default(),
            mobility: MobilityParams::default(),
            matching: MatchingParams::default(),
        }
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")))
    }
}

fn probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {value}")))
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SimConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_rc == 0 || self.num_unrc == 0 {
            return Err(Error::InvalidConfig("num_rc and num_unrc must both be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        for (name, value) in [
            ("area_radius", self.area_radius),
            ("sensing_radius", self.sensing_radius),
            ("c2c_range", self.c2c_range),
            ("bandwidth", self.bandwidth),
            ("carrier_frequency", self.carrier_frequency),
            ("path_loss_exponent", self.path_loss_exponent),
            ("p_rc_max", self.p_rc_max),
            ("p_urc_max", self.p_urc_max),
            ("f_rc", self.f_rc),
            ("f_urc", self.f_urc),
            ("rho", self.rho),
            ("q_mean", self.q_mean),
            ("cycles_per_sample", self.cycles_per_sample),
            ("model_size_bits", self.model_size_bits),
            ("t_max_cmp", self.t_max_cmp),
        ] {
            positive(name, value)?;
        }
        if !self.noise_density_dbm_hz.is_finite() || !self.path_loss_ref_db.is_finite() {
            return Err(Error::InvalidConfig("noise density and path loss must be finite".into()));
        }
        if !(self.zeta > 2.0) {
            return Err(Error::InvalidConfig(format!("zeta must exceed 2, got {}", self.zeta)));
        }
        probability("lambda_t", self.lambda_t)?;
        probability("lambda_e", self.lambda_e)?;
        if (self.lambda_t + self.lambda_e - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("lambda_t + lambda_e must equal 1".into()));
        }
        probability("idle_probability", self.idle_probability)?;
        probability("active_probability", self.active_probability)?;
        probability("trust_link_probability", self.trust_link_probability)?;
        if !(0.0..1.0).contains(&self.trust_floor) {
            return Err(Error::InvalidConfig("trust_floor must lie in [0, 1)".into()));
        }
        if self.enumeration_cap == 0 {
            return Err(Error::InvalidConfig("enumeration_cap must be positive".into()));
        }
        self.lyap.validate(self.num_rc, self.num_unrc)?;
        self.sghs.validate()?;
        self.mobility.validate()?;
        self.matching.validate()?;
        Ok(())
    }

    pub fn num_clients(&self) -> usize {
        self.num_rc + self.num_unrc
    }

    /// Noise spectral density in W/Hz.
    pub fn noise_density(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz)
    }

    /// Fairness target, `M / (M + N)` unless overridden.
    pub fn delta(&self) -> f64 {
        self.lyap.delta_for(self.num_rc, self.num_unrc)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
