//! Background traffic of one direction.
//!
//! Users attach as sessions. Session candidates arrive as a Poisson process at
//! a fixed bound intensity and are thinned by the time-varying target
//! intensity (diurnal sinusoid × two-state Markov modulation). Every candidate
//! consumes the same draws whether accepted or not, so raising the mean user
//! count only ever adds sessions to an otherwise identical trace.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::types::MCS_MAX;

use super::config::LoadModel;
use super::hash::{hash2, hash_uniform, mix};
use super::scheduler::UserDemand;

/// First RNTI handed to background sessions; lower values are reserved.
pub const BACKGROUND_RNTI_BASE: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub id: u64,
    pub rnti: u32,
    pub start_ms: u64,
    pub end_ms: u64,
    pub demand_prb: u32,
    pub mcs: u8,
}

#[derive(Debug)]
pub struct BackgroundLoad {
    cfg: LoadModel,
    mean_users: f64,
    n_prb_cell: u32,
    rnti_parity: u32,
    activity_key: u64,
    cand_rng: ChaCha8Rng,
    next_arrival_ms: f64,
    next_id: u64,
    mod_rng: ChaCha8Rng,
    /// Modulation switch instants and the busy flag holding from each.
    modulation: Vec<(f64, bool)>,
    active: Vec<Session>,
    last_query: u64,
}

impl BackgroundLoad {
    pub fn new(
        cfg: &LoadModel,
        mean_users: f64,
        n_prb_cell: u32,
        rnti_parity: u32,
        activity_seed: u64,
        cand_rng: ChaCha8Rng,
        mut mod_rng: ChaCha8Rng,
    ) -> Self {
        let busy = mod_rng.random::<bool>();
        let mut load = BackgroundLoad {
            cfg: cfg.clone(),
            mean_users,
            n_prb_cell,
            rnti_parity,
            activity_key: mix(activity_seed),
            cand_rng,
            next_arrival_ms: 0.0,
            next_id: 0,
            mod_rng,
            modulation: vec![(0.0, busy)],
            active: Vec::new(),
            last_query: 0,
        };
        load.next_arrival_ms = load.draw_interarrival();
        load
    }

    fn candidate_rate_per_ms(&self) -> f64 {
        f64::from(self.cfg.max_users) / (self.cfg.session_mean_s * 1000.0)
    }

    fn draw_interarrival(&mut self) -> f64 {
        Exp::new(self.candidate_rate_per_ms())
            .expect("positive rate")
            .sample(&mut self.cand_rng)
    }

    /// Diurnal load factor in [0, 2]; starts at the nightly minimum.
    pub fn diurnal(cfg: &LoadModel, t_ms: f64) -> f64 {
        let phase = std::f64::consts::TAU * t_ms / (cfg.diurnal_period_s * 1000.0);
        1.0 - cfg.diurnal_amplitude * phase.cos()
    }

    fn busy_at(&mut self, t_ms: f64) -> bool {
        while self.modulation.last().expect("seeded").0 <= t_ms {
            let (at, busy) = *self.modulation.last().expect("seeded");
            let dwell = Exp::new(1.0 / (self.cfg.modulation_dwell_s * 1000.0))
                .expect("positive dwell")
                .sample(&mut self.mod_rng);
            self.modulation.push((at + dwell, !busy));
        }
        let idx = self.modulation.partition_point(|(at, _)| *at <= t_ms);
        self.modulation[idx - 1].1
    }

    /// Target mean number of attached users at `t_ms`.
    pub fn intensity(&mut self, t_ms: f64) -> f64 {
        let m = if self.busy_at(t_ms) {
            1.0 + self.cfg.modulation_depth
        } else {
            1.0 - self.cfg.modulation_depth
        };
        self.mean_users * Self::diurnal(&self.cfg, t_ms) * m
    }

    /// Sessions attached at `t_ms`. Queries must be non-decreasing in time.
    pub fn attached_at(&mut self, t_ms: u64) -> &[Session] {
        debug_assert!(t_ms >= self.last_query, "background load queried backwards");
        self.last_query = t_ms;
        while self.next_arrival_ms <= t_ms as f64 {
            let arrival = self.next_arrival_ms;
            let id = self.next_id;
            self.next_id += 1;
            let mark: f64 = self.cand_rng.random();
            let duration = Exp::new(1.0 / (self.cfg.session_mean_s * 1000.0))
                .expect("positive session mean")
                .sample(&mut self.cand_rng);
            let demand = Exp::new(1.0 / self.cfg.user_demand_prb_mean)
                .expect("positive demand")
                .sample(&mut self.cand_rng)
                .ceil()
                .clamp(1.0, f64::from(self.n_prb_cell)) as u32;
            let mcs_u: f64 = self.cand_rng.random::<f64>() + self.cand_rng.random::<f64>();
            let mcs = ((mcs_u / 2.0) * f64::from(MCS_MAX)).round() as u8;
            self.next_arrival_ms += self.draw_interarrival();

            if mark * f64::from(self.cfg.max_users) < self.intensity(arrival) {
                let start = arrival.ceil() as u64;
                self.active.push(Session {
                    id,
                    rnti: BACKGROUND_RNTI_BASE + 2 * id as u32 + self.rnti_parity,
                    start_ms: start,
                    end_ms: start + duration.ceil().max(1.0) as u64,
                    demand_prb: demand,
                    mcs,
                });
            }
        }
        self.active.retain(|s| s.end_ms > t_ms);
        &self.active
    }

    /// Users with traffic in subframe `t_ms`, appended to `out`.
    pub fn scheduled_at(&mut self, t_ms: u64, out: &mut Vec<UserDemand>) {
        let p = self.cfg.activity_prob;
        let key = self.activity_key;
        let sessions = self.attached_at(t_ms);
        out.extend(
            sessions
                .iter()
                .filter(|s| hash_uniform(hash2(key, s.id), t_ms) < p)
                .map(|s| UserDemand {
                    rnti: s.rnti,
                    demand_prb: s.demand_prb,
                    mcs: s.mcs,
                }),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn load(mean: f64, cfg: &LoadModel) -> BackgroundLoad {
        BackgroundLoad::new(
            cfg,
            mean,
            50,
            0,
            5,
            ChaCha8Rng::seed_from_u64(1),
            ChaCha8Rng::seed_from_u64(2),
        )
    }

    #[test]
    fn mean_attached_tracks_intensity() {
        let cfg = LoadModel {
            diurnal_amplitude: 0.0,
            modulation_depth: 0.0,
            session_mean_s: 5.0,
            ..LoadModel::default()
        };
        let mut l = load(6.0, &cfg);
        let n = 20_000;
        let total: usize = (0..n).map(|i| l.attached_at(60_000 + i * 100).len()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 6.0).abs() < 0.4, "mean attached {mean}");
    }

    #[test]
    fn more_users_is_superset() {
        let cfg = LoadModel::default();
        let mut lo = load(2.0, &cfg);
        let mut hi = load(6.0, &cfg);
        for t in (0..600_000).step_by(250) {
            let a: Vec<u32> = lo.attached_at(t).iter().map(|s| s.rnti).collect();
            let b: Vec<u32> = hi.attached_at(t).iter().map(|s| s.rnti).collect();
            assert!(a.iter().all(|r| b.contains(r)), "t={t}");
        }
    }

    #[test]
    fn zero_mean_means_idle() {
        let mut l = load(0.0, &LoadModel::default());
        let mut out = Vec::new();
        for t in 0..100_000 {
            l.scheduled_at(t, &mut out);
        }
        assert!(out.is_empty());
    }

    #[test]
    fn diurnal_starts_at_night() {
        let cfg = LoadModel {
            diurnal_amplitude: 1.0,
            diurnal_period_s: 100.0,
            ..LoadModel::default()
        };
        assert!(BackgroundLoad::diurnal(&cfg, 0.0).abs() < 1e-12);
        assert!((BackgroundLoad::diurnal(&cfg, 50_000.0) - 2.0).abs() < 1e-12);
    }
}
