//! System parameters and the per-block physical primitives shared by the
//! closed-form analysis and the simulator.
//!
//! All quantities are SI: watts, hertz, meters, seconds, joules. Information
//! is measured in nats. The noise density is taken to be in W/Hz.

use crate::{Error, Result};

/// Validated physical and system constants.
///
/// Construct through [`SystemParams::builder`]; every range constraint is
/// checked in [`SystemParamsBuilder::build`] and violations are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    total_power: f64,
    split_ratio: f64,
    channel_rate: f64,
    distance: f64,
    pathloss_exp: f64,
    bandwidth: f64,
    noise_density: f64,
    block_len: f64,
    packet_nats: f64,
    harvest_eff: f64,
    weight_uplink: f64,
}

/// Unvalidated parameter set. [`Default`] gives the reference operating point:
/// `P_t = 0.01 W`, `lambda = 3`, `d = 1.5 m`, `alpha = 2`, `W = 1 MHz`,
/// `N0 = 4e-7 W/Hz`, `T_B = 1 ms`, `l = 100 nats`, `eta = 0.5`, with
/// `rho = w = 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParamsBuilder {
    pub total_power: f64,
    pub split_ratio: f64,
    pub channel_rate: f64,
    pub distance: f64,
    pub pathloss_exp: f64,
    pub bandwidth: f64,
    pub noise_density: f64,
    pub block_len: f64,
    pub packet_nats: f64,
    pub harvest_eff: f64,
    pub weight_uplink: f64,
}

impl Default for SystemParamsBuilder {
    fn default() -> Self {
        Self {
            total_power: 0.01,
            split_ratio: 0.5,
            channel_rate: 3.0,
            distance: 1.5,
            pathloss_exp: 2.0,
            bandwidth: 1e6,
            noise_density: 4e-7,
            block_len: 1e-3,
            packet_nats: 100.0,
            harvest_eff: 0.5,
            weight_uplink: 0.5,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            field,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl SystemParamsBuilder {
    pub fn total_power(mut self, v: f64) -> Self {
        self.total_power = v;
        self
    }
    pub fn split_ratio(mut self, v: f64) -> Self {
        self.split_ratio = v;
        self
    }
    pub fn channel_rate(mut self, v: f64) -> Self {
        self.channel_rate = v;
        self
    }
    pub fn distance(mut self, v: f64) -> Self {
        self.distance = v;
        self
    }
    pub fn pathloss_exp(mut self, v: f64) -> Self {
        self.pathloss_exp = v;
        self
    }
    pub fn bandwidth(mut self, v: f64) -> Self {
        self.bandwidth = v;
        self
    }
    pub fn noise_density(mut self, v: f64) -> Self {
        self.noise_density = v;
        self
    }
    pub fn block_len(mut self, v: f64) -> Self {
        self.block_len = v;
        self
    }
    pub fn packet_nats(mut self, v: f64) -> Self {
        self.packet_nats = v;
        self
    }
    pub fn harvest_eff(mut self, v: f64) -> Self {
        self.harvest_eff = v;
        self
    }
    pub fn weight_uplink(mut self, v: f64) -> Self {
        self.weight_uplink = v;
        self
    }

    pub fn build(self) -> Result<SystemParams> {
        positive("total_power", self.total_power)?;
        unit_interval("split_ratio", self.split_ratio)?;
        positive("channel_rate", self.channel_rate)?;
        positive("distance", self.distance)?;
        positive("pathloss_exp", self.pathloss_exp)?;
        positive("bandwidth", self.bandwidth)?;
        positive("noise_density", self.noise_density)?;
        positive("block_len", self.block_len)?;
        // Zero-length packets are admitted: they model the degenerate
        // one-block service used as a sanity anchor.
        if !(self.packet_nats.is_finite() && self.packet_nats >= 0.0) {
            return Err(Error::param(
                "packet_nats",
                format!("must be finite and >= 0, got {}", self.packet_nats),
            ));
        }
        if !(self.harvest_eff > 0.0 && self.harvest_eff <= 1.0) {
            return Err(Error::param(
                "harvest_eff",
                format!("must lie in (0, 1], got {}", self.harvest_eff),
            ));
        }
        unit_interval("weight_uplink", self.weight_uplink)?;
        Ok(SystemParams {
            total_power: self.total_power,
            split_ratio: self.split_ratio,
            channel_rate: self.channel_rate,
            distance: self.distance,
            pathloss_exp: self.pathloss_exp,
            bandwidth: self.bandwidth,
            noise_density: self.noise_density,
            block_len: self.block_len,
            packet_nats: self.packet_nats,
            harvest_eff: self.harvest_eff,
            weight_uplink: self.weight_uplink,
        })
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParamsBuilder::default()
            .build()
            .expect("reference parameters are valid")
    }
}

impl SystemParams {
    pub fn builder() -> SystemParamsBuilder {
        SystemParamsBuilder::default()
    }

    pub fn to_builder(&self) -> SystemParamsBuilder {
        SystemParamsBuilder {
            total_power: self.total_power,
            split_ratio: self.split_ratio,
            channel_rate: self.channel_rate,
            distance: self.distance,
            pathloss_exp: self.pathloss_exp,
            bandwidth: self.bandwidth,
            noise_density: self.noise_density,
            block_len: self.block_len,
            packet_nats: self.packet_nats,
            harvest_eff: self.harvest_eff,
            weight_uplink: self.weight_uplink,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }
    pub fn split_ratio(&self) -> f64 {
        self.split_ratio
    }
    pub fn channel_rate(&self) -> f64 {
        self.channel_rate
    }
    pub fn distance(&self) -> f64 {
        self.distance
    }
    pub fn pathloss_exp(&self) -> f64 {
        self.pathloss_exp
    }
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
    pub fn noise_density(&self) -> f64 {
        self.noise_density
    }
    pub fn block_len(&self) -> f64 {
        self.block_len
    }
    pub fn packet_nats(&self) -> f64 {
        self.packet_nats
    }
    pub fn harvest_eff(&self) -> f64 {
        self.harvest_eff
    }
    pub fn weight_uplink(&self) -> f64 {
        self.weight_uplink
    }

    /// Path loss `d^alpha`.
    pub fn path_loss(&self) -> f64 {
        self.distance.powf(self.pathloss_exp)
    }

    /// `theta = lambda * l * N0 * d^alpha / (P_t * T_B)`.
    pub fn theta(&self) -> f64 {
        self.channel_rate * self.packet_nats * self.noise_density * self.path_loss()
            / (self.total_power * self.block_len)
    }

    /// Derived loads at the stored split ratio.
    pub fn loads(&self) -> DerivedLoads {
        derive_constants(self, self.split_ratio).expect("stored split ratio is validated")
    }
}

/// Dimensionless quantities that drive every closed form.
///
/// Loads at a starved boundary (`rho = 1` downlink, `rho = 0` uplink) are
/// `f64::INFINITY`; the corresponding AoI is unbounded rather than an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedLoads {
    pub theta: f64,
    /// Mean number of downlink blocks beyond the first, `theta / (1 - rho)`.
    pub dl_load: f64,
    /// Mean number of uplink transmit blocks beyond the first,
    /// `lambda * theta * d^alpha / rho`.
    pub ul_load: f64,
    /// Mean blocks per uplink transmit opportunity, `1/eta + exp(-1/eta)`.
    pub harvest_factor: f64,
}

pub(crate) fn check_ratio(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "split ratio must lie in [0, 1], got {rho}"
        )))
    }
}

/// `a = 1/eta + exp(-1/eta)`, the mean of `max(1, Poisson(1/eta))`.
pub fn harvest_factor(eta: f64) -> f64 {
    1.0 / eta + (-1.0 / eta).exp()
}

pub fn derive_constants(params: &SystemParams, rho: f64) -> Result<DerivedLoads> {
    check_ratio(rho)?;
    let theta = params.theta();
    let dl_load = if rho < 1.0 {
        theta / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    let ul_load = if rho > 0.0 {
        params.channel_rate * theta * params.path_loss() / rho
    } else {
        f64::INFINITY
    };
    Ok(DerivedLoads {
        theta,
        dl_load,
        ul_load,
        harvest_factor: harvest_factor(params.harvest_eff),
    })
}

/// How per-block capacity is computed from the received SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrMode {
    /// `T_B * W * ln(1 + snr)`.
    Exact,
    /// Low-SNR linearization `T_B * W * snr`, under which per-block nats are
    /// exponential and the closed forms are exact.
    #[default]
    Linear,
}

impl std::str::FromStr for SnrMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SnrMode::Exact),
            "linear" => Ok(SnrMode::Linear),
            _ => Err(Error::param(
                "snr_mode",
                format!("expected exact|linear, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for SnrMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SnrMode::Exact => "exact",
            SnrMode::Linear => "linear",
        })
    }
}

/// Nats delivered in one block by a transmitter of power `tx_power` whose
/// signal crosses the link once (`d^alpha` path loss) with power gain `gain`.
pub fn block_nats(params: &SystemParams, tx_power: f64, gain: f64, mode: SnrMode) -> f64 {
    let snr = tx_power * gain / (params.path_loss() * params.bandwidth * params.noise_density);
    let wt = params.block_len * params.bandwidth;
    match mode {
        SnrMode::Exact => wt * snr.ln_1p(),
        SnrMode::Linear => wt * snr,
    }
}

pub fn per_block_downlink_nats(params: &SystemParams, rho: f64, gain: f64, mode: SnrMode) -> f64 {
    block_nats(params, (1.0 - rho) * params.total_power, gain, mode)
}

/// Uplink transmit power `P_u = rho * P_t / (lambda * d^alpha)`, equal to the
/// mean power the device receives from the energy beam.
pub fn uplink_tx_power(params: &SystemParams, rho: f64) -> f64 {
    rho * params.total_power / (params.channel_rate * params.path_loss())
}

pub fn per_block_uplink_nats(params: &SystemParams, rho: f64, gain: f64, mode: SnrMode) -> f64 {
    block_nats(params, uplink_tx_power(params, rho), gain, mode)
}

/// Energy the device banks in one block when a fraction `rho` of the access
/// point's power is beamed at it.
pub fn harvested_energy(params: &SystemParams, rho: f64, gain: f64) -> f64 {
    params.harvest_eff * rho * params.total_power * params.block_len * gain / params.path_loss()
}

/// Energy one uplink transmit block costs, `P_u * T_B`.
pub fn uplink_energy_threshold(params: &SystemParams, rho: f64) -> f64 {
    uplink_tx_power(params, rho) * params.block_len
}
