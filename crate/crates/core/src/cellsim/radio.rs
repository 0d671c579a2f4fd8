//! Link-level lookup models: log-distance pathloss with spatially correlated
//! shadowing, SINR→CQI→MCS quantization and a simplified TBS table.

use crate::error::{Error, Result};
use crate::types::{CQI_MAX, MCS_MAX};

use super::hash::{hash_normal, mix};

/// Reference distance of the pathloss model, metres.
pub const REFERENCE_DISTANCE_M: f64 = 100.0;
/// Shadowing decorrelation distance, metres.
pub const SHADOWING_GRID_M: f64 = 50.0;
/// Resource elements per PRB per subframe (12 subcarriers × 14 symbols).
pub const RE_PER_PRB: u64 = 168;
/// One timing-advance step (16 Ts) in metres of one-way distance.
pub const TA_STEP_M: f64 = 78.12;

/// Spectral efficiency per MCS index, in milli-bits per resource element.
pub const SPECTRAL_EFFICIENCY_MILLI: [u64; 29] = [
    150, 190, 240, 310, 380, 470, 560, 660, 760, 870, // QPSK
    970, 1090, 1240, 1400, 1560, 1720, 1880, // 16QAM
    2030, 2220, 2410, 2630, 2850, 3080, 3320, 3580, 3860, 4270, 4850, 5550, // 64QAM
];

/// MCS index scheduled for each reported CQI.
pub const CQI_TO_MCS: [u8; 16] = [0, 0, 1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 26, 28];

/// Shadowing parameters of a scenario. `sigma_db == 0` disables shadowing.
#[derive(Debug, Clone, Copy)]
pub struct PathlossModel {
    pub pl0_db: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
    pub seed: u64,
}

impl PathlossModel {
    /// Pathloss in dB at distance `d_m` from the antenna.
    pub fn pathloss_db(&self, d_m: f64) -> Result<f64> {
        if !(d_m > 0.0) || !d_m.is_finite() {
            return Err(Error::Domain(format!("pathloss distance {d_m} m must be > 0")));
        }
        let mean = self.pl0_db + 10.0 * self.exponent * (d_m / REFERENCE_DISTANCE_M).log10();
        Ok(mean + self.shadowing_sigma_db * self.shadowing_unit(d_m))
    }

    /// Unit-variance Gaussian field over distance, linearly interpolated
    /// between independent grid values and renormalized.
    fn shadowing_unit(&self, d_m: f64) -> f64 {
        if self.shadowing_sigma_db == 0.0 {
            return 0.0;
        }
        let pos = d_m / SHADOWING_GRID_M;
        let i = pos.floor();
        let f = pos - i;
        let key = mix(self.seed ^ 0x5ead_0a11);
        let a = hash_normal(key, i as u64);
        let b = hash_normal(key, i as u64 + 1);
        let norm = ((1.0 - f).powi(2) + f * f).sqrt();
        ((1.0 - f) * a + f * b) / norm
    }
}

/// Step mapping: 0 below −6 dB, then one CQI per 2 dB, saturating at 15 from 22 dB.
pub fn sinr_to_cqi(sinr_db: f64) -> u8 {
    if !(sinr_db >= -6.0) {
        return 0;
    }
    let step = ((sinr_db + 6.0) / 2.0).floor() as u64 + 1;
    step.min(u64::from(CQI_MAX)) as u8
}

pub fn cqi_to_mcs(cqi: u8) -> Result<u8> {
    CQI_TO_MCS
        .get(usize::from(cqi))
        .copied()
        .ok_or_else(|| Error::Domain(format!("cqi {cqi} outside 0..=15")))
}

/// Transport block size in bits: ⌊n_prb · 168 · eff(mcs) · 0.75⌋.
pub fn tbs_lookup(mcs: u8, n_prb: u32) -> Result<u64> {
    if mcs > MCS_MAX {
        return Err(Error::Domain(format!("mcs {mcs} outside 0..=28")));
    }
    Ok(tbs_bits(mcs, n_prb))
}

/// Infallible core of [`tbs_lookup`]; `mcs` must be in range.
#[inline]
pub(crate) fn tbs_bits(mcs: u8, n_prb: u32) -> u64 {
    // 0.75 overhead folded into integer arithmetic: ×3 / (4 × 1000 milli).
    u64::from(n_prb) * RE_PER_PRB * SPECTRAL_EFFICIENCY_MILLI[usize::from(mcs)] * 3 / 4000
}

/// Timing advance in TA steps for a UE at `d_m` metres.
pub fn timing_advance(d_m: f64) -> u32 {
    (d_m / TA_STEP_M).round().max(0.0) as u32
}
