//! Block-level Monte Carlo simulation of the two-way link.
//!
//! One replication walks `num_blocks` fading blocks. Channel gains for the
//! downlink, uplink and energy beam are drawn from independent streams; the
//! downlink packet drains by the per-block capacity, the device banks harvested
//! energy and spends one threshold per uplink transmit block. Both sides use
//! zero-wait updating, except the time-splitting access point which queues
//! Bernoulli arrivals.
//!
//! AoI convention: a block is charged the age reached at its end; a packet
//! finishing in block `n` is delivered at epoch `n + 1`, after which the age
//! equals that packet's system time. This makes a one-block service average to
//! exactly 2.
//!
//! Replications run in parallel and are aggregated in replication order, so a
//! report depends only on the configuration.

mod engine;
pub mod path;
pub mod rng;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::analytic::ts_equivalent_rho;
use crate::model::{SnrMode, SystemParams};
use crate::{Error, Result};

pub use path::{aoi_from_path, aoi_via_qk, zero_wait_path};
pub use rng::{sample_gain, RngStream, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    PowerSplit,
    TimeSplit,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_split" => Ok(Scheme::PowerSplit),
            "time_split" => Ok(Scheme::TimeSplit),
            _ => Err(Error::param(
                "scheme",
                format!("expected power_split|time_split, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::PowerSplit => "power_split",
            Scheme::TimeSplit => "time_split",
        })
    }
}

/// When the device spends a banked energy quantum on an uplink block.
///
/// Energy is accounted in quanta of one transmit threshold. Let `B_i` be the
/// block during which the cumulative harvest first reaches `i` quanta and
/// `tau_i = B_i - B_{i-1}` (Poisson with mean `1/eta` under Rayleigh fading).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HarvestPolicy {
    /// Transmission `i` happens `max(1, tau_i)` blocks after transmission
    /// `i - 1`, so the blocks per transmission are i.i.d. `max(1, tau)`.
    /// The schedule never runs ahead of the energy (the threshold is always
    /// in the buffer at block start) and surplus stays banked.
    #[default]
    Paced,
    /// Transmit at every block start where the buffer holds a threshold. The
    /// device never idles on stored energy, so the long-run mean spacing is
    /// exactly `1/eta` blocks and consecutive spacings are correlated.
    Greedy,
}

impl std::str::FromStr for HarvestPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paced" => Ok(HarvestPolicy::Paced),
            "greedy" => Ok(HarvestPolicy::Greedy),
            _ => Err(Error::param(
                "harvest_policy",
                format!("expected paced|greedy, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for HarvestPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HarvestPolicy::Paced => "paced",
            HarvestPolicy::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub num_blocks: u64,
    pub seed: u64,
    /// Leading blocks excluded from every statistic.
    pub warmup_blocks: u64,
    pub snr_mode: SnrMode,
    pub replications: usize,
    pub scheme: Scheme,
    /// Per-block packet generation probability; time splitting only.
    pub gen_prob: Option<f64>,
    pub harvest_policy: HarvestPolicy,
}

impl SimConfig {
    /// Power splitting, linear SNR, one replication, 1% warmup.
    pub fn power_split(num_blocks: u64, seed: u64) -> Self {
        Self {
            num_blocks,
            seed,
            warmup_blocks: num_blocks / 100,
            snr_mode: SnrMode::Linear,
            replications: 1,
            scheme: Scheme::PowerSplit,
            gen_prob: None,
            harvest_policy: HarvestPolicy::Paced,
        }
    }

    pub fn time_split(num_blocks: u64, seed: u64, gen_prob: f64) -> Self {
        Self {
            scheme: Scheme::TimeSplit,
            gen_prob: Some(gen_prob),
            ..Self::power_split(num_blocks, seed)
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_warmup(mut self, warmup_blocks: u64) -> Self {
        self.warmup_blocks = warmup_blocks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks <= self.warmup_blocks {
            return Err(Error::param(
                "num_blocks",
                format!(
                    "must exceed warmup_blocks ({} <= {})",
                    self.num_blocks, self.warmup_blocks
                ),
            ));
        }
        if self.replications == 0 {
            return Err(Error::param("replications", "must be >= 1"));
        }
        match (self.scheme, self.gen_prob) {
            (Scheme::TimeSplit, None) => {
                Err(Error::param("gen_prob", "required for time splitting"))
            }
            (Scheme::PowerSplit, Some(_)) => Err(Error::param(
                "gen_prob",
                "only meaningful for time splitting",
            )),
            _ => Ok(()),
        }
    }
}

pub type Histogram = BTreeMap<u64, u64>;

/// Raw counters from one replication, over its measured (post-warmup) blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicationStats {
    pub measured_blocks: u64,
    pub dl_aoi_sum: u64,
    pub ul_aoi_sum: u64,
    pub dl_deliveries: u64,
    pub ul_deliveries: u64,
    pub dl_service_sum: u64,
    pub dl_service_sq_sum: u128,
    pub ul_service_sum: u64,
    pub ul_service_sq_sum: u128,
    pub dl_service_hist: Histogram,
    pub ul_service_hist: Histogram,
    /// Blocks between consecutive uplink transmit blocks.
    pub harvest_slot_hist: Histogram,
    pub ul_tx_blocks: u64,
    /// Blocks in which the access point beamed energy (all of them under
    /// power splitting).
    pub energy_blocks: u64,
    /// Whole-run energy ledger, warmup included.
    pub harvested_joules: f64,
    pub spent_joules: f64,
    pub buffer_joules: f64,
}

impl ReplicationStats {
    pub fn mean_dl_aoi(&self) -> f64 {
        self.dl_aoi_sum as f64 / self.measured_blocks as f64
    }
    pub fn mean_ul_aoi(&self) -> f64 {
        self.ul_aoi_sum as f64 / self.measured_blocks as f64
    }
    pub fn dl_rate(&self) -> f64 {
        self.dl_deliveries as f64 / self.measured_blocks as f64
    }
    pub fn ul_rate(&self) -> f64 {
        self.ul_deliveries as f64 / self.measured_blocks as f64
    }
    pub fn mean_dl_service(&self) -> f64 {
        self.dl_service_sum as f64 / self.dl_deliveries as f64
    }
    pub fn mean_ul_service(&self) -> f64 {
        self.ul_service_sum as f64 / self.ul_deliveries as f64
    }
    pub fn energy_block_fraction(&self) -> f64 {
        self.energy_blocks as f64 / self.measured_blocks as f64
    }
}

/// Aggregate over replications. Means are averages of per-replication means;
/// standard errors are across replications (`NaN` with a single one).
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mean_dl_aoi: f64,
    pub mean_ul_aoi: f64,
    pub weighted_aoi: f64,
    pub dl_rate: f64,
    pub ul_rate: f64,
    pub dl_service_hist: Histogram,
    pub ul_service_hist: Histogram,
    pub harvest_slot_hist: Histogram,
    pub std_error_dl_aoi: f64,
    pub std_error_ul_aoi: f64,
    pub std_error_weighted_aoi: f64,
    pub mean_dl_service: f64,
    pub mean_ul_service: f64,
    pub energy_block_fraction: f64,
    /// Energy-beam share used for the uplink power (`rho` or its
    /// time-splitting equivalent).
    pub rho: f64,
    pub w: f64,
    /// Total blocks walked, warmup included, across all replications.
    pub blocks_simulated: u64,
    pub replications: Vec<ReplicationStats>,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn merge(into: &mut Histogram, from: &Histogram) {
    for (&k, &v) in from {
        *into.entry(k).or_default() += v;
    }
}

impl SimReport {
    fn aggregate(reps: Vec<ReplicationStats>, rho: f64, w: f64, num_blocks: u64) -> Self {
        let (mean_dl_aoi, std_error_dl_aoi) = mean_and_se(reps.iter().map(|r| r.mean_dl_aoi()));
        let (mean_ul_aoi, std_error_ul_aoi) = mean_and_se(reps.iter().map(|r| r.mean_ul_aoi()));
        let (weighted_aoi, std_error_weighted_aoi) = mean_and_se(
            reps.iter()
                .map(|r| (1.0 - w) * r.mean_dl_aoi() + w * r.mean_ul_aoi()),
        );
        let avg = |f: fn(&ReplicationStats) -> f64| mean_and_se(reps.iter().map(f)).0;
        let mut dl_service_hist = Histogram::new();
        let mut ul_service_hist = Histogram::new();
        let mut harvest_slot_hist = Histogram::new();
        for r in &reps {
            merge(&mut dl_service_hist, &r.dl_service_hist);
            merge(&mut ul_service_hist, &r.ul_service_hist);
            merge(&mut harvest_slot_hist, &r.harvest_slot_hist);
        }
        SimReport {
            mean_dl_aoi,
            mean_ul_aoi,
            weighted_aoi,
            dl_rate: avg(ReplicationStats::dl_rate),
            ul_rate: avg(ReplicationStats::ul_rate),
            dl_service_hist,
            ul_service_hist,
            harvest_slot_hist,
            std_error_dl_aoi,
            std_error_ul_aoi,
            std_error_weighted_aoi,
            mean_dl_service: avg(ReplicationStats::mean_dl_service),
            mean_ul_service: avg(ReplicationStats::mean_ul_service),
            energy_block_fraction: avg(ReplicationStats::energy_block_fraction),
            rho,
            w,
            blocks_simulated: num_blocks * reps.len() as u64,
            replications: reps,
        }
    }

    /// Empirical weighted data rate `(1 - w) dl_rate + w ul_rate`.
    pub fn weighted_rate(&self) -> f64 {
        (1.0 - self.w) * self.dl_rate + self.w * self.ul_rate
    }
}

/// Scheme-specific inputs resolved and checked before any block is simulated.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Setup {
    PowerSplit { rho: f64 },
    TimeSplit { gen_prob: f64, rho_ts: f64 },
}

impl Setup {
    fn energy_share(&self) -> f64 {
        match *self {
            Setup::PowerSplit { rho } => rho,
            Setup::TimeSplit { rho_ts, .. } => rho_ts,
        }
    }
}

fn resolve(params: &SystemParams, config: &SimConfig, rho: f64) -> Result<Setup> {
    config.validate()?;
    match config.scheme {
        Scheme::PowerSplit => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::param(
                    "split_ratio",
                    format!("simulation needs 0 < rho < 1, got {rho}"),
                ));
            }
            Ok(Setup::PowerSplit { rho })
        }
        Scheme::TimeSplit => {
            let p = config.gen_prob.expect("validated");
            let bound = 1.0 / (1.0 + params.theta());
            if !(p > 0.0 && p < bound) {
                return Err(Error::Unstable { p, bound });
            }
            Ok(Setup::TimeSplit {
                gen_prob: p,
                rho_ts: ts_equivalent_rho(p, params.theta())?,
            })
        }
    }
}

fn run_setup(params: &SystemParams, setup: Setup, config: &SimConfig) -> SimReport {
    let reps: Vec<ReplicationStats> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| engine::run_replication(params, setup, config, r, None))
        .collect();
    SimReport::aggregate(
        reps,
        setup.energy_share(),
        params.weight_uplink(),
        config.num_blocks,
    )
}

/// Simulates power splitting at ratio `rho`; `config.scheme` must be
/// [`Scheme::PowerSplit`].
pub fn run_power_splitting(
    params: &SystemParams,
    rho: f64,
    config: &SimConfig,
) -> Result<SimReport> {
    if config.scheme != Scheme::PowerSplit {
        return Err(Error::param("scheme", "expected power_split"));
    }
    let setup = resolve(params, config, rho)?;
    Ok(run_setup(params, setup, config))
}

/// Simulates the time-splitting baseline with per-block generation
/// probability `gen_prob`, overriding `config.gen_prob`.
pub fn run_time_splitting(
    params: &SystemParams,
    gen_prob: f64,
    config: &SimConfig,
) -> Result<SimReport> {
    let config = SimConfig {
        scheme: Scheme::TimeSplit,
        gen_prob: Some(gen_prob),
        ..*config
    };
    let setup = resolve(params, &config, params.split_ratio())?;
    Ok(run_setup(params, setup, &config))
}

/// Runs the configured scheme, power splitting at `params.split_ratio()`.
pub fn simulate(params: &SystemParams, config: &SimConfig) -> Result<SimReport> {
    match config.scheme {
        Scheme::PowerSplit => run_power_splitting(params, params.split_ratio(), config),
        Scheme::TimeSplit => {
            config.validate()?;
            run_time_splitting(params, config.gen_prob.expect("validated"), config)
        }
    }
}

/// One block of replication 0, as written to a trace dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Epoch at the end of the block.
    pub epoch: u64,
    pub dl_aoi: u64,
    pub ul_aoi: u64,
    pub buffer_joules: f64,
    pub dl_delivery: bool,
    pub ul_delivery: bool,
    pub ul_transmit: bool,
    pub energy_block: bool,
}

/// Per-block trace of replication 0 (warmup included). Meant for small runs.
pub fn trace(params: &SystemParams, config: &SimConfig) -> Result<Vec<TraceRow>> {
    let setup = resolve(params, config, params.split_ratio())?;
    let mut rows = Vec::with_capacity(config.num_blocks as usize);
    engine::run_replication(params, setup, config, 0, Some(&mut rows));
    Ok(rows)
}

pub fn write_trace_csv(rows: &[TraceRow], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "epoch,dl_aoi,ul_aoi,buffer_joules,events")?;
    for r in rows {
        let mut events = Vec::new();
        if r.dl_delivery {
            events.push("dl_delivery");
        }
        if r.ul_transmit {
            events.push("ul_transmit");
        }
        if r.ul_delivery {
            events.push("ul_delivery");
        }
        if r.energy_block {
            events.push("energy");
        }
        writeln!(
            out,
            "{},{},{},{:e},{}",
            r.epoch,
            r.dl_aoi,
            r.ul_aoi,
            r.buffer_joules,
            events.join("|")
        )?;
    }
    Ok(())
}
