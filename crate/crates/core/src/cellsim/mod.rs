//! Synthetic single-cell scenario: a vehicle UE moving along a radial path
//! performs periodic transfers while background users load the cell.
//!
//! Only the spans a passive observer needs are simulated: the observation
//! window before each transfer (both directions) and the transfer itself (its
//! own direction). Transfers are spaced so that a pre-transfer window never
//! overlaps the previous transfer.

pub mod config;
pub mod hash;
pub mod load;
pub mod mobility;
pub mod radio;
pub mod scheduler;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::{Direction, TimestampMs, TransmissionRecord, TtiAllocation, UeFeatures};

pub use config::{LoadModel, ScenarioConfig, TrajectoryConfig};
pub use radio::{cqi_to_mcs, sinr_to_cqi, tbs_lookup, timing_advance, PathlossModel};
pub use scheduler::{round_robin, CellState, TargetTransfer, UserDemand};

use hash::mix;
use load::BackgroundLoad;
use mobility::Trajectory;

/// RNTI of the measuring UE.
pub const TARGET_RNTI: u32 = 61;
/// Interval at which the target's MCS follows its channel.
pub const LINK_ADAPTATION_MS: u64 = 100;
/// RSRQ sensitivity to neighbor-cell load, dB at full load.
const RSRQ_NEIGHBOR_COUPLING_DB: f64 = 3.0;
/// A transfer running longer than this many periods aborts the scenario.
const MAX_TRANSFER_PERIODS: u64 = 60;

/// Ground truth of one completed transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSummary {
    pub t_start: TimestampMs,
    /// Last subframe in which the transfer was granted bits.
    pub t_end: TimestampMs,
    pub direction: Direction,
    pub rnti: u32,
    pub payload_bytes: u64,
}

impl TransferSummary {
    pub fn duration_ms(&self) -> u64 {
        self.t_end.0 - self.t_start.0 + 1
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub records: Vec<TransmissionRecord>,
    pub allocations: Vec<TtiAllocation>,
    pub transfers: Vec<TransferSummary>,
}

#[derive(Debug, Clone, Default)]
pub struct SimSummary {
    pub records: Vec<TransmissionRecord>,
    pub transfers: Vec<TransferSummary>,
}

impl ScenarioConfig {
    pub fn pathloss_model(&self) -> PathlossModel {
        PathlossModel {
            pl0_db: self.pl0_db,
            exponent: self.pathloss_exponent,
            shadowing_sigma_db: self.shadowing_sigma_db,
            seed: self.seed,
        }
    }
}

/// `pathloss_db(d, config)`: log-distance pathloss with the config's shadowing.
pub fn pathloss_db(d_m: f64, cfg: &ScenarioConfig) -> Result<f64> {
    cfg.pathloss_model().pathloss_db(d_m)
}

/// Duration of a max-size transfer alone in the cell at the top MCS.
pub fn best_case_duration_ms(cfg: &ScenarioConfig) -> u64 {
    let mut tr = TargetTransfer::new(
        TARGET_RNTI,
        Direction::Downlink,
        0,
        cfg.payload_max,
        radio::CQI_TO_MCS[15],
        cfg.cwnd_init_bits,
        cfg.rtt_ms,
    );
    let mut t = 0;
    while !tr.is_done() {
        let n = tr.demand_prb(t, cfg.n_prb_cell);
        tr.deliver(t, n);
        t += 1;
    }
    t
}

/// Rejects scenarios in which even an unloaded cell cannot carry the largest
/// payload between two transmissions.
pub fn check_feasible(cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate()?;
    let best = best_case_duration_ms(cfg);
    let room = cfg.tx_period_ms() - cfg.observation_window_ms;
    if best > room {
        return Err(Error::Infeasible(format!(
            "a {} byte payload needs at least {best} ms but only {room} ms fit between transmissions",
            cfg.payload_max
        )));
    }
    Ok(())
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

struct Channel {
    pathloss: PathlossModel,
    tx_per_re_dbm: f64,
    noise_mw: f64,
    interference_mw: f64,
    ul_offset_db: f64,
    load: LoadModel,
}

impl Channel {
    fn new(cfg: &ScenarioConfig) -> Self {
        Channel {
            pathloss: cfg.pathloss_model(),
            tx_per_re_dbm: cfg.tx_power_dbm - 10.0 * (12.0 * f64::from(cfg.n_prb_cell)).log10(),
            noise_mw: dbm_to_mw(cfg.noise_dbm),
            interference_mw: dbm_to_mw(cfg.interference_dbm),
            ul_offset_db: cfg.ul_sinr_offset_db,
            load: cfg.load_model.clone(),
        }
    }

    fn rsrp_dbm(&self, d_m: f64) -> Result<f64> {
        Ok(self.tx_per_re_dbm - self.pathloss.pathloss_db(d_m)?)
    }

    /// Neighbor cells follow the same daily cycle at half the swing.
    fn neighbor_load(&self, t_ms: u64) -> f64 {
        BackgroundLoad::diurnal(&self.load, t_ms as f64) / 2.0
    }

    fn sinr_db(&self, rsrp_dbm: f64, t_ms: u64) -> f64 {
        let i = self.noise_mw + self.neighbor_load(t_ms) * self.interference_mw;
        rsrp_dbm - 10.0 * i.log10()
    }

    fn mcs(&self, d_m: f64, t_ms: u64, direction: Direction) -> Result<u8> {
        let mut sinr = self.sinr_db(self.rsrp_dbm(d_m)?, t_ms);
        if direction == Direction::Uplink {
            sinr -= self.ul_offset_db;
        }
        cqi_to_mcs(sinr_to_cqi(sinr))
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(tag)))
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated deviation")
}

fn background(cfg: &ScenarioConfig, direction: Direction) -> BackgroundLoad {
    let base = 10 + 3 * direction.index() as u64;
    BackgroundLoad::new(
        &cfg.load_model,
        cfg.mean_users(direction),
        cfg.n_prb_cell,
        direction.index() as u32,
        mix(cfg.seed ^ mix(base)),
        stream(cfg.seed, base + 1),
        stream(cfg.seed, base + 2),
    )
}

/// Runs the scenario, handing every allocation to `sink` in time order.
pub fn simulate_into<F>(cfg: &ScenarioConfig, mut sink: F) -> Result<SimSummary>
where
    F: FnMut(&TtiAllocation) -> Result<()>,
{
    check_feasible(cfg)?;
    let w = cfg.observation_window_ms;
    let period = cfg.tx_period_ms();
    let channel = Channel::new(cfg);
    let mut trajectory = Trajectory::new(&cfg.trajectory, stream(cfg.seed, 1));
    let mut meas = stream(cfg.seed, 2);
    let rsrp_noise = normal(cfg.rsrp_noise_db);
    let sinr_noise = normal(cfg.sinr_noise_db);
    let rsrq_noise = normal(cfg.rsrq_noise_db);
    let mut cell = CellState::new(
        cfg.n_prb_cell,
        [background(cfg, Direction::Uplink), background(cfg, Direction::Downlink)],
    );

    let n_tx = cfg.n_transmissions();
    let mut out = SimSummary {
        records: Vec::with_capacity(n_tx as usize),
        transfers: Vec::with_capacity(n_tx as usize),
    };
    let mut buf = Vec::new();
    let mut earliest_start = w;

    for k in 0..n_tx {
        let direction = if k % 2 == 0 { Direction::Uplink } else { Direction::Downlink };
        let t_start = (w + k * period).max(earliest_start);

        let mut last_dl_prb = 0u32;
        for t in t_start - w..t_start {
            for d in Direction::ALL {
                buf.clear();
                cell.schedule_tti(d, t, &mut buf);
                if d == Direction::Downlink && t + 1 == t_start {
                    last_dl_prb = buf.iter().map(|a| a.n_prb).sum();
                }
                buf.iter().try_for_each(&mut sink)?;
            }
        }

        let d_m = trajectory.distance_m(t_start);
        let rsrp_true = channel.rsrp_dbm(d_m)?;
        let sinr_true = channel.sinr_db(rsrp_true, t_start);
        let sinr = round_to(sinr_true + sinr_noise.sample(&mut meas), 0.1);
        let utilization = f64::from(last_dl_prb) / f64::from(cfg.n_prb_cell);
        let rsrq = -10.0 * (2.0 + 10.0 * utilization).log10()
            - RSRQ_NEIGHBOR_COUPLING_DB * channel.neighbor_load(t_start)
            + rsrq_noise.sample(&mut meas);
        let ue = UeFeatures {
            rsrp: (rsrp_true + rsrp_noise.sample(&mut meas)).round(),
            rsrq: round_to(rsrq.clamp(-19.5, -3.0), 0.5),
            sinr,
            cqi: sinr_to_cqi(sinr),
            ta: timing_advance(d_m),
            freq_mhz: cfg.freq_mhz,
            velocity_mps: trajectory.speed_mps(t_start),
            payload_bytes: meas.random_range(cfg.payload_min..=cfg.payload_max),
        };

        cell.target = Some(TargetTransfer::new(
            TARGET_RNTI,
            direction,
            t_start,
            ue.payload_bytes,
            channel.mcs(d_m, t_start, direction)?,
            cfg.cwnd_init_bits,
            cfg.rtt_ms,
        ));
        let deadline = t_start + MAX_TRANSFER_PERIODS * period;
        let mut t = t_start;
        loop {
            if t % LINK_ADAPTATION_MS == 0 && t != t_start {
                let mcs = channel.mcs(trajectory.distance_m(t), t, direction)?;
                if let Some(tr) = cell.target.as_mut() {
                    tr.mcs = mcs;
                }
            }
            buf.clear();
            cell.schedule_tti(direction, t, &mut buf);
            buf.iter().try_for_each(&mut sink)?;
            if cell.target.as_ref().is_some_and(TargetTransfer::is_done) {
                break;
            }
            t += 1;
            if t >= deadline {
                return Err(Error::Infeasible(format!(
                    "transfer {k} at {t_start} ms did not finish within {} ms",
                    MAX_TRANSFER_PERIODS * period
                )));
            }
        }
        let tr = cell.target.take().expect("transfer in flight");
        let t_end = tr.last_grant_ms.expect("completed transfer was granted");
        earliest_start = (t_end / w + 2) * w;

        let summary = TransferSummary {
            t_start: TimestampMs(t_start),
            t_end: TimestampMs(t_end),
            direction,
            rnti: TARGET_RNTI,
            payload_bytes: ue.payload_bytes,
        };
        out.records.push(TransmissionRecord {
            t_start: TimestampMs(t_start),
            direction,
            throughput_mbps: crate::types::throughput_mbps(ue.payload_bytes, summary.duration_ms()),
            ue,
            net: None,
        });
        out.transfers.push(summary);
    }
    Ok(out)
}

/// Runs the scenario and keeps the full allocation trace in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SimOutput> {
    let mut allocations = Vec::new();
    let summary = simulate_into(cfg, |a| {
        allocations.push(*a);
        Ok(())
    })?;
    Ok(SimOutput {
        records: summary.records,
        allocations,
        transfers: summary.transfers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seconds: u64) -> ScenarioConfig {
        ScenarioConfig {
            duration_s: seconds,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn one_record_per_period_alternating() {
        let out = simulate(&short(60)).unwrap();
        assert_eq!(out.records.len(), 6);
        for (k, r) in out.records.iter().enumerate() {
            let want = if k % 2 == 0 { Direction::Uplink } else { Direction::Downlink };
            assert_eq!(r.direction, want);
            assert!(r.t_start.0 >= 1000 + k as u64 * 10_000);
        }
    }

    #[test]
    fn infeasible_payload_is_rejected() {
        let cfg = ScenarioConfig {
            payload_max: 500_000_000,
            ..short(60)
        };
        assert!(matches!(simulate(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn pathloss_reference_from_config() {
        let cfg = ScenarioConfig {
            shadowing_sigma_db: 0.0,
            ..ScenarioConfig::default()
        };
        assert_eq!(pathloss_db(100.0, &cfg).unwrap(), cfg.pl0_db);
        assert!(pathloss_db(0.0, &cfg).is_err());
    }

    #[test]
    fn trace_is_time_ordered() {
        let out = simulate(&short(40)).unwrap();
        assert!(out.allocations.windows(2).all(|w| w[0].t <= w[1].t));
    }
}
