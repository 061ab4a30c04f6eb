//! The sequential block loop of a single replication.

use std::collections::VecDeque;

use super::rng::{sample_gain, RngStream, StreamTag};
use super::{HarvestPolicy, ReplicationStats, Setup, SimConfig, TraceRow};
use crate::model::{
    block_nats, harvested_energy, uplink_energy_threshold, uplink_tx_power, SystemParams,
};

/// Slack for float round-off between the quantum count and the joule buffer.
const BUFFER_SLACK: f64 = 1e-9;

/// Decides the uplink transmit blocks from the harvest.
struct Harvester {
    policy: HarvestPolicy,
    threshold: f64,
    buffer: f64,
    harvested: f64,
    spent: f64,
    /// Harvest not yet converted into a full quantum.
    uncommitted: f64,
    /// Blocks in which a new quantum completed, oldest first.
    crossings: VecDeque<u64>,
    last_crossing: Option<u64>,
    last_tx: Option<u64>,
    next_tx: Option<u64>,
}

impl Harvester {
    fn new(policy: HarvestPolicy, threshold: f64) -> Self {
        Self {
            policy,
            threshold,
            buffer: 0.0,
            harvested: 0.0,
            spent: 0.0,
            uncommitted: 0.0,
            crossings: VecDeque::new(),
            last_crossing: None,
            last_tx: None,
            next_tx: None,
        }
    }

    fn schedule(&mut self) {
        if self.next_tx.is_some() {
            return;
        }
        if let Some(b) = self.crossings.pop_front() {
            self.next_tx = Some(match (self.last_tx, self.last_crossing) {
                (Some(t), Some(prev)) => t + (b - prev).max(1),
                _ => b + 1,
            });
            self.last_crossing = Some(b);
        }
    }

    /// Block-start decision; spends one threshold when it says yes.
    fn try_transmit(&mut self, n: u64) -> bool {
        let go = match self.policy {
            HarvestPolicy::Paced => {
                self.schedule();
                self.next_tx == Some(n)
            }
            HarvestPolicy::Greedy => self.buffer >= self.threshold * (1.0 - BUFFER_SLACK),
        };
        if go {
            debug_assert!(self.buffer >= self.threshold * (1.0 - BUFFER_SLACK));
            self.buffer -= self.threshold;
            self.spent += self.threshold;
            self.last_tx = Some(n);
            self.next_tx = None;
        }
        go
    }

    fn harvest(&mut self, n: u64, joules: f64) {
        self.buffer += joules;
        self.harvested += joules;
        if self.policy == HarvestPolicy::Paced {
            self.uncommitted += joules;
            while self.uncommitted >= self.threshold {
                self.uncommitted -= self.threshold;
                self.crossings.push_back(n);
            }
        }
    }
}

/// A packet in a zero-wait or FCFS pipeline.
#[derive(Clone, Copy)]
struct Packet {
    generated: u64,
    /// Epoch its transmission could first begin.
    service_start: u64,
    remaining: f64,
}

pub(crate) fn run_replication(
    params: &SystemParams,
    setup: Setup,
    config: &SimConfig,
    replication: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> ReplicationStats {
    let lambda = params.channel_rate();
    let mode = config.snr_mode;
    let packet = params.packet_nats();
    let mut dl_rng = RngStream::new(config.seed, replication, StreamTag::DownlinkGain);
    let mut ul_rng = RngStream::new(config.seed, replication, StreamTag::UplinkGain);
    let mut eh_rng = RngStream::new(config.seed, replication, StreamTag::HarvestGain);
    let mut arrivals = RngStream::new(config.seed, replication, StreamTag::Arrivals);

    let (dl_power, energy_share, gen_prob) = match setup {
        Setup::PowerSplit { rho } => ((1.0 - rho) * params.total_power(), rho, None),
        Setup::TimeSplit { gen_prob, rho_ts } => (params.total_power(), rho_ts, Some(gen_prob)),
    };
    let ul_power = uplink_tx_power(params, energy_share);
    let mut harvester = Harvester::new(
        config.harvest_policy,
        uplink_energy_threshold(params, energy_share),
    );

    let fresh = |epoch: u64| Packet {
        generated: epoch,
        service_start: epoch,
        remaining: packet,
    };
    let mut dl_queue: VecDeque<Packet> = VecDeque::new();
    if gen_prob.is_none() {
        dl_queue.push_back(fresh(0));
    }
    let mut ul_packet = fresh(0);
    let mut dl_aoi: u64 = 0;
    let mut ul_aoi: u64 = 0;

    let mut stats = ReplicationStats::default();
    let mut prev_tx: Option<u64> = None;
    let record = |hist: &mut super::Histogram, j: u64| *hist.entry(j).or_default() += 1;

    for n in 0..config.num_blocks {
        let measured = n >= config.warmup_blocks;

        if let Some(p) = gen_prob {
            if arrivals.bernoulli(p) {
                dl_queue.push_back(fresh(n));
            }
        }

        let mut dl_delivered = None;
        let energy_block = match dl_queue.front_mut() {
            Some(head) => {
                let gain = sample_gain(&mut dl_rng, lambda);
                head.remaining -= block_nats(params, dl_power, gain, mode);
                if head.remaining <= 0.0 {
                    let done = dl_queue.pop_front().expect("non-empty");
                    dl_delivered = Some((n + 1 - done.generated, n + 1 - done.service_start));
                    match dl_queue.front_mut() {
                        Some(next) => next.service_start = n + 1,
                        None if gen_prob.is_none() => dl_queue.push_back(fresh(n + 1)),
                        None => {}
                    }
                }
                gen_prob.is_none()
            }
            None => true,
        };

        let ul_tx = harvester.try_transmit(n);
        let mut ul_delivered = None;
        if ul_tx {
            let gain = sample_gain(&mut ul_rng, lambda);
            ul_packet.remaining -= block_nats(params, ul_power, gain, mode);
            if ul_packet.remaining <= 0.0 {
                ul_delivered = Some(n + 1 - ul_packet.generated);
                ul_packet = fresh(n + 1);
            }
        }

        if energy_block {
            let gain = sample_gain(&mut eh_rng, lambda);
            let beam_share = if gen_prob.is_some() {
                1.0
            } else {
                energy_share
            };
            harvester.harvest(n, harvested_energy(params, beam_share, gain));
        }

        dl_aoi += 1;
        ul_aoi += 1;
        if measured {
            stats.measured_blocks += 1;
            stats.dl_aoi_sum += dl_aoi;
            stats.ul_aoi_sum += ul_aoi;
            if energy_block {
                stats.energy_blocks += 1;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow {
                epoch: n + 1,
                dl_aoi,
                ul_aoi,
                buffer_joules: harvester.buffer,
                dl_delivery: dl_delivered.is_some(),
                ul_delivery: ul_delivered.is_some(),
                ul_transmit: ul_tx,
                energy_block,
            });
        }

        if ul_tx && measured {
            stats.ul_tx_blocks += 1;
        }
        if let Some((system_time, service)) = dl_delivered {
            dl_aoi = system_time;
            if measured {
                stats.dl_deliveries += 1;
                stats.dl_service_sum += service;
                stats.dl_service_sq_sum += (service as u128).pow(2);
                record(&mut stats.dl_service_hist, service);
            }
        }
        if let Some(service) = ul_delivered {
            ul_aoi = service;
            if measured {
                stats.ul_deliveries += 1;
                stats.ul_service_sum += service;
                stats.ul_service_sq_sum += (service as u128).pow(2);
                record(&mut stats.ul_service_hist, service);
            }
        }
        if ul_tx {
            if let (true, Some(prev)) = (measured, prev_tx) {
                record(&mut stats.harvest_slot_hist, n - prev);
            }
            prev_tx = Some(n);
        }
    }

    stats.harvested_joules = harvester.harvested;
    stats.spent_joules = harvester.spent;
    stats.buffer_joules = harvester.buffer;
    stats
}
