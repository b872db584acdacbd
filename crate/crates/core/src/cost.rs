//! Per-round physical-layer and learning-cost formulas.
//!
//! Shannon rates are in bit/s (base-2 logarithm). Local-iteration counts use
//! the natural logarithm, `ln(1/θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an RC takes part in a training round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// The RC trains itself (DParM).
    Direct,
    /// The RC recommends a trusted UnRC (LRefM).
    Referral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Noise spectral density (W/Hz).
    pub noise_density: f64,
    /// Linear channel power gain.
    pub gain: f64,
    /// Transmit power budget (W).
    pub p_max: f64,
}

/// Fractions of bandwidth and of power/CPU granted to the FL task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceShare {
    /// Bandwidth fraction (Ξ).
    pub bandwidth: f64,
    /// Transmit-power and CPU fraction (Π).
    pub power: f64,
}

impl ResourceShare {
    pub const FULL: ResourceShare = ResourceShare { bandwidth: 1.0, power: 1.0 };

    /// Share for a referred UnRC with trust `w` toward its RC.
    pub fn referral(w: f64, trust_row_sum: f64, active: bool) -> Result<Self> {
        Ok(Self { bandwidth: xi_fraction(w, active), power: pi_fraction(w, trust_row_sum, active)? })
    }

    pub fn for_mode(mode: Mode, w: f64, trust_row_sum: f64, active: bool) -> Result<Self> {
        match mode {
            Mode::Direct => Ok(Self::FULL),
            Mode::Referral => Self::referral(w, trust_row_sum, active),
        }
    }
}

/// Relative weights of time and energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub lambda_t: f64,
    pub lambda_e: f64,
}

impl WeightPair {
    pub fn new(lambda_t: f64, lambda_e: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&lambda_t)
            && (0.0..=1.0).contains(&lambda_e)
            && (lambda_t + lambda_e - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "weights must lie in [0, 1] and sum to 1, got ({lambda_t}, {lambda_e})"
            )));
        }
        Ok(Self { lambda_t, lambda_e })
    }

    pub fn combine(&self, time: f64, energy: f64) -> f64 {
        self.lambda_t * time + self.lambda_e * energy
    }
}

/// Upload and one-iteration compute costs of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub t_com: f64,
    pub e_com: f64,
    pub t_cmp: f64,
    pub e_cmp: f64,
}

/// Weighted compute (`a`) and upload (`b`) coefficients of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoeff {
    pub a: f64,
    pub b: f64,
}

impl CostBreakdown {
    /// Time and energy of one global epoch at local accuracy `theta`.
    pub fn epoch(&self, theta: f64) -> Result<(f64, f64)> {
        epoch_cost(theta, self)
    }

    pub fn coeff(&self, weights: WeightPair) -> CostCoeff {
        CostCoeff { a: weights.combine(self.t_cmp, self.e_cmp), b: weights.combine(self.t_com, self.e_com) }
    }

    pub fn wset(&self, theta: f64, weights: WeightPair) -> Result<f64> {
        let (t, e) = self.epoch(theta)?;
        wset(theta, weights, t, e)
    }
}

/// Trust-aided bandwidth scheduler: `1 - w` for an UnRC with its own QoS need, else 1.
pub fn xi_fraction(w: f64, active: bool) -> f64 {
    if active {
        1.0 - w
    } else {
        1.0
    }
}

/// Trust-aided power/CPU scheduler: `w` when active, else `w` normalised over
/// the RC's trusted set.
pub fn pi_fraction(w: f64, trust_row_sum: f64, active: bool) -> Result<f64> {
    if active {
        return Ok(w);
    }
    if !(trust_row_sum > 0.0) {
        return Err(Error::InvalidConfig("trust row sum must be positive".into()));
    }
    Ok(w / trust_row_sum)
}

/// Achieved uplink rate (bit/s) under a resource share. Zero bandwidth gives zero rate.
pub fn uplink_rate(link: &LinkParams, share: ResourceShare) -> f64 {
    if share.bandwidth <= 0.0 {
        return 0.0;
    }
    let bw = share.bandwidth * link.bandwidth;
    let snr = link.gain * share.power * link.p_max / (link.noise_density * bw);
    bw * snr.ln_1p() / std::f64::consts::LN_2
}

/// Upload time and energy for a `model_size`-bit update.
pub fn upload_cost(model_size: f64, rate: f64, power_fraction: f64, p_max: f64) -> Result<(f64, f64)> {
    if !(rate > 0.0) {
        return Err(Error::InfeasibleLink);
    }
    let t = model_size / rate;
    Ok((t, power_fraction * p_max * t))
}

/// Time and energy of one local iteration at CPU fraction `fraction`.
pub fn compute_cost(
    samples: f64,
    cycles_per_sample: f64,
    f: f64,
    fraction: f64,
    rho: f64,
    zeta: f64,
) -> Result<(f64, f64)> {
    if !(fraction > 0.0) {
        return Err(Error::InfeasibleCompute);
    }
    let cycles = samples * cycles_per_sample;
    let freq = fraction * f;
    Ok((cycles / freq, rho * cycles * freq.powf(zeta - 1.0)))
}

/// Epoch time and energy: `ln(1/θ)` local iterations plus one upload.
pub fn epoch_cost(theta: f64, parts: &CostBreakdown) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    let iters = -theta.ln();
    Ok((iters * parts.t_cmp + parts.t_com, iters * parts.e_cmp + parts.e_com))
}

/// C2C link rate of a recommended UnRC that keeps `w` of the bandwidth and `1 - w` of its power.
pub fn c2c_rate(selected: bool, w: f64, gain: f64, p_max: f64, bandwidth: f64, noise_density: f64) -> f64 {
    if !selected || w <= 0.0 {
        return 0.0;
    }
    let bw = w * bandwidth;
    let snr = gain * (1.0 - w) * p_max / (noise_density * bw);
    bw * snr.ln_1p() / std::f64::consts::LN_2
}

/// Weighted sum of epoch time and energy scaled by the expected number of
/// global rounds `1 / (1 - θ)`.
pub fn wset(theta: f64, weights: WeightPair, t_epoch: f64, e_epoch: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    Ok(weights.combine(t_epoch, e_epoch) / (1.0 - theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const N0: f64 = 3.981_071_705_534_972e-21;

    fn link(gain: f64, p_max: f64) -> LinkParams {
        LinkParams { bandwidth: 2e5, noise_density: N0, gain, p_max }
    }

    #[test]
    fn xi_branches() {
        assert!((xi_fraction(0.3, true) - 0.7).abs() < 1e-15);
        assert_eq!(xi_fraction(0.3, false), 1.0);
        assert_eq!(xi_fraction(1.0, true), 0.0);
    }

    #[test]
    fn pi_branches() {
        assert_eq!(pi_fraction(0.3, 99.0, true).unwrap(), 0.3);
        assert!((pi_fraction(0.2, 1.0, false).unwrap() - 0.2).abs() < 1e-15);
        assert!(pi_fraction(0.2, 0.0, false).is_err());
        let row = [0.1, 0.25, 0.4, 0.05];
        let sum: f64 = row.iter().sum();
        let total: f64 = row.iter().map(|&w| pi_fraction(w, sum, false).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn direct_rate_with_snr_three() {
        let l = LinkParams { bandwidth: 2e5, noise_density: 1e-20, gain: 3.0 * 1e-20 * 2e5, p_max: 1.0 };
        let r = uplink_rate(&l, ResourceShare::FULL);
        assert!((r - 4e5).abs() < 1e-6, "{r}");
    }

    #[test]
    fn inactive_referral_is_direct_with_scaled_power() {
        let l = link(1e-7, 0.3);
        let share = ResourceShare::referral(0.2, 0.8, false).unwrap();
        assert_eq!(share.bandwidth, 1.0);
        let scaled = LinkParams { p_max: 0.3 * share.power, ..l };
        assert!((uplink_rate(&l, share) - uplink_rate(&scaled, ResourceShare::FULL)).abs() < 1e-6);
    }

    #[test]
    fn active_referral_rate_matches_reference() {
        // Reference value evaluated independently with 50-digit arithmetic:
        // 0.5*2e5*log2(1 + 1e-7*0.5*0.3/(N0*0.5*2e5)).
        let share = ResourceShare::referral(0.5, 2.0, true).unwrap();
        let r = uplink_rate(&link(1e-7, 0.3), share);
        let expected = 2_516_723.044_117_745_3;
        assert!(((r - expected) / expected).abs() < 1e-12, "{r}");
    }

    #[test]
    fn full_trust_active_referral_has_zero_rate() {
        let share = ResourceShare::referral(1.0, 2.0, true).unwrap();
        assert_eq!(uplink_rate(&link(1e-7, 0.3), share), 0.0);
        assert!(matches!(upload_cost(1e5, 0.0, 1.0, 0.3), Err(Error::InfeasibleLink)));
    }

    #[test]
    fn upload_arithmetic() {
        let (t, e) = upload_cost(1e5, 4e5, 1.0, 0.5).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(e, 0.125);
    }

    #[test]
    fn compute_arithmetic() {
        let (t, _) = compute_cost(1e4, 10.0, 2e7, 1.0, 1e-27, 3.0).unwrap();
        assert!((t - 5e-3).abs() < 1e-15);
        let (_, e) = compute_cost(1e4, 10.0, 2e8, 1.0, 1e-27, 3.0).unwrap();
        assert!((e - 4e-6).abs() < 1e-18);
        let (t1, e1) = compute_cost(1e4, 10.0, 2e8, 1.0, 1e-27, 3.0).unwrap();
        let (t2, e2) = compute_cost(1e4, 10.0, 2e8, 0.5, 1e-27, 3.0).unwrap();
        assert!((t2 / t1 - 2.0).abs() < 1e-12);
        assert!((e2 / e1 - 0.25).abs() < 1e-12);
        assert!(matches!(compute_cost(1e4, 10.0, 2e8, 0.0, 1e-27, 3.0), Err(Error::InfeasibleCompute)));
    }

    #[test]
    fn epoch_composition() {
        let parts = CostBreakdown { t_com: 0.25, e_com: 0.1, t_cmp: 5e-3, e_cmp: 1e-6 };
        let (t, e) = epoch_cost((-1f64).exp(), &parts).unwrap();
        assert!((t - 0.255).abs() < 1e-15);
        assert!((e - (0.1 + 1e-6)).abs() < 1e-15);
        let (t, _) = epoch_cost(0.5, &parts).unwrap();
        // 0.25 + 0.005 * ln 2
        assert!((t - 0.253_465_735_902_799_7).abs() < 1e-15, "{t}");
        let (t, _) = epoch_cost(1.0 - 1e-12, &parts).unwrap();
        assert!((t - 0.25).abs() < 1e-12);
        assert!(epoch_cost(0.0, &parts).is_err());
        assert!(epoch_cost(1.0, &parts).is_err());
    }

    #[test]
    fn c2c_rate_cases() {
        assert_eq!(c2c_rate(false, 0.5, 1.0, 0.3, 2e5, N0), 0.0);
        // w = 0.5 and g(1-w)p/(N0 w B) = 3  =>  rate = 0.5 B log2(4) = B.
        let g = 3.0 * N0 * 0.5 * 2e5 / (0.5 * 0.3);
        let r = c2c_rate(true, 0.5, g, 0.3, 2e5, N0);
        assert!((r - 2e5).abs() < 1e-6, "{r}");
        assert_eq!(c2c_rate(true, 0.0, g, 0.3, 2e5, N0), 0.0);
    }

    #[test]
    fn c2c_rate_matches_reference() {
        // 0.3*2e5*log2(1 + 7.94e-6*0.7*0.3/(N0*0.3*2e5)), evaluated with 50-digit arithmetic.
        let r = c2c_rate(true, 0.3, 7.94e-6, 0.3, 2e5, N0);
        let expected = 1_962_041.395_601_181_2;
        assert!(((r - expected) / expected).abs() < 1e-12, "{r}");
    }

    #[test]
    fn wset_cases() {
        let w = WeightPair::new(1.0 / 6.0, 5.0 / 6.0).unwrap();
        let g = wset(0.5, w, 0.25, 4e-6).unwrap();
        assert!((g - 0.083_34).abs() < 1e-12, "{g}");
        assert_eq!(wset(0.0, w, 0.25, 4e-6).unwrap(), w.combine(0.25, 4e-6));
        assert!((wset(0.3, w, 0.5, 8e-6).unwrap() - 2.0 * wset(0.3, w, 0.25, 4e-6).unwrap()).abs() < 1e-15);
        assert!(wset(1.0, w, 0.25, 4e-6).is_err());
        assert!(WeightPair::new(0.5, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn resource_split_closes(w in 0.0f64..=1.0) {
            let share = ResourceShare::referral(w, 3.0, true).unwrap();
            prop_assert!((share.bandwidth + w - 1.0).abs() < 1e-12);
            prop_assert!((share.power + (1.0 - w) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rate_monotone_in_gain_and_power(
            g in 1e-10f64..1e-4, dg in 1.01f64..10.0,
            p in 1e-3f64..10.0, dp in 1.01f64..10.0,
        ) {
            let base = uplink_rate(&link(g, p), ResourceShare::FULL);
            prop_assert!(uplink_rate(&link(g * dg, p), ResourceShare::FULL) > base);
            prop_assert!(uplink_rate(&link(g, p * dp), ResourceShare::FULL) > base);
            let (t1, _) = upload_cost(1e5, base, 1.0, p).unwrap();
            let (t2, _) = upload_cost(1e5, base * dg, 1.0, p).unwrap();
            prop_assert!(t2 < t1);
        }

        #[test]
        fn compute_homogeneity(frac in 0.01f64..=1.0, zeta in 2.1f64..4.0) {
            let (t1, e1) = compute_cost(1e4, 10.0, 2e7, 1.0, 1e-27, zeta).unwrap();
            let (t2, e2) = compute_cost(1e4, 10.0, 2e7, frac, 1e-27, zeta).unwrap();
            prop_assert!((t2 * frac / t1 - 1.0).abs() < 1e-12);
            prop_assert!((e2 / (e1 * frac.powf(zeta - 1.0)) - 1.0).abs() < 1e-12);
        }
    }
}
