//! Service-time distributions, their moments, and the closed-form average AoI
//! of both links under zero-wait updating.
//!
//! Time is measured in blocks. A load `x` is the mean number of extra blocks a
//! packet needs beyond the first, so service time is `1 + Poisson(x)`.
//! Unbounded results (a starved link) are `f64::INFINITY`.

use statrs::function::gamma::ln_gamma;

use crate::model::{self, derive_constants, SystemParams};
use crate::{Error, Result};

/// First and second raw moments of a service time, in blocks and blocks².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub m1: f64,
    pub m2: f64,
}

impl MomentPair {
    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }
}

/// Average AoI of both links and their weighted sum at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiBreakdown {
    pub downlink: f64,
    pub uplink: f64,
    /// `(1 - w) * downlink + w * uplink`, with a zero weight masking an
    /// unbounded term.
    pub weighted: f64,
    pub rho: f64,
    pub w: f64,
}

/// Which closed form [`avg_uplink_aoi`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UplinkForm {
    /// Renewal formula applied to the compound service moments. Matches the
    /// simulated sample-path average.
    #[default]
    Renewal,
    /// The reduced expression in `(ul_load, eta)` as commonly quoted for this
    /// model. It sits exactly 1/2 block below [`UplinkForm::Renewal`].
    Reduced,
}

fn check_load(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("load must be >= 0, got {x}")))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && !eta.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "harvest efficiency must be > 0, got {eta}"
        )))
    }
}

/// Poisson pmf evaluated in log space, safe for large loads and counts.
fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * mean.ln() - mean - ln_gamma(k + 1.0)).exp()
}

/// `Pr{S_D = j}` for the downlink service time: `x^(j-1) e^-x / (j-1)!`.
pub fn downlink_service_pmf(dl_load: f64, j: u64) -> Result<f64> {
    check_load(dl_load)?;
    if j == 0 {
        return Err(Error::domain("service time is at least one block (j >= 1)"));
    }
    if dl_load.is_infinite() {
        return Ok(0.0);
    }
    Ok(poisson_pmf(dl_load, j - 1))
}

/// Moments of the shifted-Poisson service time `1 + Poisson(x)`.
pub fn downlink_service_moments(dl_load: f64) -> Result<MomentPair> {
    check_load(dl_load)?;
    let x = dl_load;
    Ok(MomentPair {
        m1: 1.0 + x,
        m2: x * x + 3.0 * x + 1.0,
    })
}

/// Time-average AoI of a zero-wait renewal link: `m1 + 1/2 + m2 / (2 m1)`.
pub fn renewal_aoi(moments: MomentPair) -> Result<f64> {
    let MomentPair { m1, m2 } = moments;
    if m1.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if m1.is_nan() || m1 <= 0.0 || m2.is_nan() {
        return Err(Error::domain(format!(
            "renewal AoI needs a positive first moment, got m1 = {m1}"
        )));
    }
    Ok(m1 + 0.5 + m2 / (2.0 * m1))
}

/// Closed-form downlink AoI, `1 + x + (x^2 + 4x + 2) / (2(1 + x))`.
pub fn avg_downlink_aoi(dl_load: f64) -> Result<f64> {
    check_load(dl_load)?;
    if dl_load.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let x = dl_load;
    let aoi = 1.0 + x + (x * x + 4.0 * x + 2.0) / (2.0 * (1.0 + x));
    debug_assert!({
        let r = renewal_aoi(downlink_service_moments(x)?)?;
        ((aoi - r) / r).abs() < 1e-9
    });
    Ok(aoi)
}

/// `Pr{tau_H = j}`, the number of blocks whose cumulative harvest falls inside
/// one transmit-energy quantum: Poisson with mean `1/eta`.
pub fn harvest_slot_pmf(eta: f64, j: u64) -> Result<f64> {
    check_eta(eta)?;
    Ok(poisson_pmf(1.0 / eta, j))
}

/// `Pr{s = j}` for the blocks spent per uplink transmission, `s = max(1, tau_H)`.
pub fn charge_time_pmf(eta: f64, j: u64) -> Result<f64> {
    match j {
        0 => {
            check_eta(eta)?;
            Ok(0.0)
        }
        1 => Ok(harvest_slot_pmf(eta, 0)? + harvest_slot_pmf(eta, 1)?),
        _ => harvest_slot_pmf(eta, j),
    }
}

/// Moments of `s = max(1, tau_H)`: `1/eta + e^(-1/eta)` and
/// `1/eta^2 + 1/eta + e^(-1/eta)`.
pub fn harvest_slot_moments(eta: f64) -> Result<MomentPair> {
    check_eta(eta)?;
    let inv = 1.0 / eta;
    let p0 = (-inv).exp();
    Ok(MomentPair {
        m1: inv + p0,
        m2: inv * inv + inv + p0,
    })
}

/// Moments of the number of uplink transmit blocks a packet needs.
pub fn uplink_tx_count_moments(ul_load: f64) -> Result<MomentPair> {
    downlink_service_moments(ul_load)
}

/// Moments of the compound uplink service time `S_U = sum_{i=1}^{S} s_i`:
/// `E[S_U] = E[S] E[s]`, `E[S_U^2] = E[S] E[s^2] + E[S^2 - S] E[s]^2`.
pub fn uplink_service_moments(ul_load: f64, eta: f64) -> Result<MomentPair> {
    let count = uplink_tx_count_moments(ul_load)?;
    let slot = harvest_slot_moments(eta)?;
    Ok(MomentPair {
        m1: count.m1 * slot.m1,
        m2: count.m1 * slot.m2 + (count.m2 - count.m1) * slot.m1 * slot.m1,
    })
}

pub fn avg_uplink_aoi(ul_load: f64, eta: f64, form: UplinkForm) -> Result<f64> {
    check_load(ul_load)?;
    check_eta(eta)?;
    if ul_load.is_infinite() {
        return Ok(f64::INFINITY);
    }
    match form {
        UplinkForm::Renewal => renewal_aoi(uplink_service_moments(ul_load, eta)?),
        UplinkForm::Reduced => {
            let a = model::harvest_factor(eta);
            let s = 1.0 + ul_load;
            Ok(1.5 * s * a + 0.5 + 0.5 / (eta + eta * eta * (-1.0 / eta).exp()) - 0.5 * a / s)
        }
    }
}

/// `w * value` where a zero weight suppresses an unbounded value.
fn weigh(w: f64, value: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * value
    }
}

/// Weighted-sum AoI at split ratio `rho` and uplink weight `w`, using the
/// renewal uplink form.
pub fn weighted_sum_aoi(params: &SystemParams, rho: f64, w: f64) -> Result<AoiBreakdown> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("weight must lie in [0, 1], got {w}")));
    }
    let loads = derive_constants(params, rho)?;
    let downlink = avg_downlink_aoi(loads.dl_load)?;
    let uplink = avg_uplink_aoi(loads.ul_load, params.harvest_eff(), UplinkForm::Renewal)?;
    Ok(AoiBreakdown {
        downlink,
        uplink,
        weighted: weigh(1.0 - w, downlink) + weigh(w, uplink),
        rho,
        w,
    })
}

/// Zero-wait delivery rates in packets per block, `(1/E[S_D], 1/E[S_U])`.
/// A starved link has rate zero.
pub fn data_rates(params: &SystemParams, rho: f64) -> Result<(f64, f64)> {
    let loads = derive_constants(params, rho)?;
    let dl = downlink_service_moments(loads.dl_load)?;
    let ul = uplink_service_moments(loads.ul_load, params.harvest_eff())?;
    Ok((1.0 / dl.m1, 1.0 / ul.m1))
}

/// Weighted data rate `(1 - w) / E[S_D] + w / E[S_U]`.
pub fn weighted_rate(params: &SystemParams, rho: f64, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("weight must lie in [0, 1], got {w}")));
    }
    let (dl, ul) = data_rates(params, rho)?;
    Ok((1.0 - w) * dl + w * ul)
}

/// Energy-transfer share of a time-splitting access point that generates a
/// packet with probability `p` per block: `1 - p (1 + theta)`.
pub fn ts_equivalent_rho(p: f64, theta: f64) -> Result<f64> {
    let bound = 1.0 / (1.0 + theta);
    if !(0.0..=bound).contains(&p) {
        return Err(Error::Unstable { p, bound });
    }
    Ok((1.0 - p * (1.0 + theta)).clamp(0.0, 1.0))
}
