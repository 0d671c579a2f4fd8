use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Scenario description, read from a TOML file. Every field has a default so
/// a config only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: u64,
    pub n_prb_cell: u32,
    pub tx_period_s: f64,
    /// Length of the pre-transmission observation window the sniffer records.
    pub observation_window_ms: u64,
    pub payload_min: u64,
    pub payload_max: u64,
    pub pathloss_exponent: f64,
    /// Pathloss at the 100 m reference distance.
    pub pl0_db: f64,
    pub shadowing_sigma_db: f64,
    pub tx_power_dbm: f64,
    /// Noise power per resource element.
    pub noise_dbm: f64,
    /// Neighbor-cell interference per resource element at full neighbor load.
    pub interference_dbm: f64,
    pub freq_mhz: f64,
    /// Uplink SINR penalty relative to the downlink (UE power budget).
    pub ul_sinr_offset_db: f64,
    pub rsrp_noise_db: f64,
    pub sinr_noise_db: f64,
    pub rsrq_noise_db: f64,
    pub load_model: LoadModel,
    pub trajectory: TrajectoryConfig,
    pub rtt_ms: f64,
    pub cwnd_init_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadModel {
    pub mean_users_ul: f64,
    pub mean_users_dl: f64,
    /// Relative swing of the daily load cycle, in [0, 1].
    pub diurnal_amplitude: f64,
    pub diurnal_period_s: f64,
    /// Mean per-TTI PRB demand of one background user.
    pub user_demand_prb_mean: f64,
    pub session_mean_s: f64,
    /// Probability that an attached background user is scheduled in a given TTI.
    pub activity_prob: f64,
    /// Busy/quiet modulation: intensity is scaled by 1 ± depth.
    pub modulation_depth: f64,
    pub modulation_dwell_s: f64,
    /// Cap on concurrently attached background users per direction (intensity bound).
    pub max_users: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Speed is redrawn at this interval.
    pub segment_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration_s: 600,
            n_prb_cell: 50,
            tx_period_s: 10.0,
            observation_window_ms: 1000,
            payload_min: 100_000,
            payload_max: 10_000_000,
            pathloss_exponent: 3.5,
            pl0_db: 80.0,
            shadowing_sigma_db: 6.0,
            tx_power_dbm: 43.0,
            noise_dbm: -116.0,
            interference_dbm: -104.0,
            freq_mhz: 1800.0,
            ul_sinr_offset_db: 5.0,
            rsrp_noise_db: 1.0,
            sinr_noise_db: 1.0,
            rsrq_noise_db: 1.5,
            load_model: LoadModel::default(),
            trajectory: TrajectoryConfig::default(),
            rtt_ms: 50.0,
            cwnd_init_bits: 14_600 * 8,
        }
    }
}

impl Default for LoadModel {
    fn default() -> Self {
        LoadModel {
            mean_users_ul: 3.0,
            mean_users_dl: 5.0,
            diurnal_amplitude: 0.8,
            diurnal_period_s: 86_400.0,
            user_demand_prb_mean: 12.0,
            session_mean_s: 30.0,
            activity_prob: 0.7,
            modulation_depth: 0.5,
            modulation_dwell_s: 120.0,
            max_users: 48,
        }
    }
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            d_min_m: 100.0,
            d_max_m: 800.0,
            speed_min_mps: 0.0,
            speed_max_mps: 25.0,
            segment_s: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Short content hash of the effective configuration.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn tx_period_ms(&self) -> u64 {
        (self.tx_period_s * 1000.0).round() as u64
    }

    pub fn n_transmissions(&self) -> u64 {
        (self.duration_s * 1000) / self.tx_period_ms().max(1)
    }

    pub fn mean_users(&self, direction: crate::types::Direction) -> f64 {
        match direction {
            crate::types::Direction::Uplink => self.load_model.mean_users_ul,
            crate::types::Direction::Downlink => self.load_model.mean_users_dl,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_prb_cell == 0 {
            return bad("n_prb_cell must be > 0".into());
        }
        if self.payload_min == 0 || self.payload_min >= self.payload_max {
            return bad(format!(
                "need 0 < payload_min < payload_max, got {} / {}",
                self.payload_min, self.payload_max
            ));
        }
        for (name, v) in [
            ("pathloss_exponent", self.pathloss_exponent),
            ("pl0_db", self.pl0_db),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_dbm", self.noise_dbm),
            ("interference_dbm", self.interference_dbm),
            ("freq_mhz", self.freq_mhz),
            ("ul_sinr_offset_db", self.ul_sinr_offset_db),
            ("rsrp_noise_db", self.rsrp_noise_db),
            ("sinr_noise_db", self.sinr_noise_db),
            ("rsrq_noise_db", self.rsrq_noise_db),
            ("tx_period_s", self.tx_period_s),
            ("rtt_ms", self.rtt_ms),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.shadowing_sigma_db < 0.0
            || self.rsrp_noise_db < 0.0
            || self.sinr_noise_db < 0.0
            || self.rsrq_noise_db < 0.0
        {
            return bad("noise and shadowing deviations must be >= 0".into());
        }
        if self.observation_window_ms == 0 {
            return bad("observation_window_ms must be >= 1".into());
        }
        if self.tx_period_ms() < 2 * self.observation_window_ms {
            return bad("tx_period_s must cover at least two observation windows".into());
        }
        if self.tx_period_ms() % self.observation_window_ms != 0 {
            return bad("tx_period_s must be a whole number of observation windows".into());
        }
        if !(self.rtt_ms > 0.0) || self.cwnd_init_bits == 0 {
            return bad("rtt_ms and cwnd_init_bits must be > 0".into());
        }
        let l = &self.load_model;
        if !(0.0..=1.0).contains(&l.diurnal_amplitude) {
            return bad("diurnal_amplitude must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&l.modulation_depth) {
            return bad("modulation_depth must lie in [0, 1)".into());
        }
        if !(l.activity_prob > 0.0 && l.activity_prob <= 1.0) {
            return bad("activity_prob must lie in (0, 1]".into());
        }
        if !(l.diurnal_period_s > 0.0 && l.session_mean_s > 0.0 && l.modulation_dwell_s > 0.0) {
            return bad("load model periods must be > 0".into());
        }
        if !(l.user_demand_prb_mean >= 1.0) {
            return bad("user_demand_prb_mean must be >= 1".into());
        }
        if l.max_users == 0 || l.max_users >= self.n_prb_cell {
            return bad("max_users must lie in [1, n_prb_cell)".into());
        }
        for m in [l.mean_users_ul, l.mean_users_dl] {
            if !(m >= 0.0) {
                return bad("mean users must be >= 0".into());
            }
            let peak = m * (1.0 + l.diurnal_amplitude) * (1.0 + l.modulation_depth);
            if peak > f64::from(l.max_users) {
                return bad(format!(
                    "peak background intensity {peak:.1} exceeds max_users {}",
                    l.max_users
                ));
            }
        }
        let t = &self.trajectory;
        if !(t.d_min_m > 0.0 && t.d_min_m < t.d_max_m && t.d_max_m.is_finite()) {
            return bad("trajectory needs 0 < d_min_m < d_max_m".into());
        }
        if !(t.speed_min_mps >= 0.0 && t.speed_min_mps <= t.speed_max_mps && t.segment_s > 0.0) {
            return bad("trajectory needs 0 <= speed_min <= speed_max and segment_s > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            "seed = 9\nduration_s = 60\n[load_model]\nmean_users_dl = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n_prb_cell, 50);
        assert_eq!(cfg.load_model.mean_users_dl, 2.0);
        assert_eq!(cfg.load_model.mean_users_ul, 3.0);
        assert_eq!(cfg.n_transmissions(), 6);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ScenarioConfig::from_toml_str("n_prb_cell = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("payload_min = 10\npayload_max = 5").is_err());
        assert!(ScenarioConfig::from_toml_str("bogus_key = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("noise_dbm = nan").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        let back = ScenarioConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(back, a);
    }
}
