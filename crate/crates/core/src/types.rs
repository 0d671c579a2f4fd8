//! Shared domain vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest LTE CQI index.
pub const CQI_MAX: u8 = 15;
/// Highest MCS index used by the simplified TBS model.
pub const MCS_MAX: u8 = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Uplink, Direction::Downlink];

    /// Wire encoding used by every CSV file.
    pub fn code(self) -> &'static str {
        match self {
            Direction::Uplink => "UL",
            Direction::Downlink => "DL",
        }
    }

    /// Lower-case suffix used in feature names (`mean_n_prb_ul`).
    pub fn suffix(self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Uplink => Direction::Downlink,
            Direction::Downlink => Direction::Uplink,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "UL" | "ul" => Ok(Direction::Uplink),
            "DL" | "dl" => Ok(Direction::Downlink),
            other => Err(Error::Domain(format!(
                "unknown direction {other:?} (expected UL or DL)"
            ))),
        }
    }
}

/// Milliseconds since scenario start. One LTE subframe per tick.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimestampMs(pub u64);

impl TimestampMs {
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn plus(self, ms: u64) -> TimestampMs {
        TimestampMs(self.0 + ms)
    }

    pub fn saturating_minus(self, ms: u64) -> TimestampMs {
        TimestampMs(self.0.saturating_sub(ms))
    }
}

impl fmt::Display for TimestampMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Passively measured client-side context at the start of a transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeFeatures {
    pub rsrp: f64,
    pub rsrq: f64,
    pub sinr: f64,
    pub cqi: u8,
    /// Timing advance in LTE TA steps (16 Ts, about 78 m of distance each).
    pub ta: u32,
    pub freq_mhz: f64,
    pub velocity_mps: f64,
    pub payload_bytes: u64,
}

/// One decoded resource grant for one user in one subframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtiAllocation {
    pub t: TimestampMs,
    pub direction: Direction,
    pub rnti: u32,
    pub n_prb: u32,
    pub mcs: u8,
    pub tbs_bits: u64,
}

/// Mean and sample standard deviation of the per-subframe load quantities of
/// one direction over one observation window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLoad {
    pub mean_n_ue: f64,
    pub std_n_ue: f64,
    pub mean_n_prb: f64,
    pub std_n_prb: f64,
    pub mean_mcs: f64,
    pub std_mcs: f64,
    pub mean_tbs: f64,
    pub std_tbs: f64,
}

impl DirectionalLoad {
    pub fn get(&self, stat: NetStat) -> f64 {
        match stat {
            NetStat::MeanNUe => self.mean_n_ue,
            NetStat::StdNUe => self.std_n_ue,
            NetStat::MeanNPrb => self.mean_n_prb,
            NetStat::StdNPrb => self.std_n_prb,
            NetStat::MeanMcs => self.mean_mcs,
            NetStat::StdMcs => self.std_mcs,
            NetStat::MeanTbs => self.mean_tbs,
            NetStat::StdTbs => self.std_tbs,
        }
    }

    pub fn values(&self) -> [f64; 8] {
        NetStat::ALL.map(|s| self.get(s))
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        DirectionalLoad {
            mean_n_ue: v[0],
            std_n_ue: v[1],
            mean_n_prb: v[2],
            std_n_prb: v[3],
            mean_mcs: v[4],
            std_mcs: v[5],
            mean_tbs: v[6],
            std_tbs: v[7],
        }
    }
}

/// One row of `net_features.csv`: the load statistics of one direction in one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowLoad {
    pub window_start: TimestampMs,
    pub window_len_ms: u64,
    pub direction: Direction,
    pub load: DirectionalLoad,
}

impl WindowLoad {
    pub fn window_end(&self) -> TimestampMs {
        self.window_start.plus(self.window_len_ms)
    }
}

/// Both directions' load statistics for one observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetLoadFeatures {
    pub window_start: TimestampMs,
    pub window_len_ms: u64,
    pub ul: DirectionalLoad,
    pub dl: DirectionalLoad,
}

impl NetLoadFeatures {
    pub fn window_end(&self) -> TimestampMs {
        self.window_start.plus(self.window_len_ms)
    }

    pub fn direction(&self, direction: Direction) -> &DirectionalLoad {
        match direction {
            Direction::Uplink => &self.ul,
            Direction::Downlink => &self.dl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub t_start: TimestampMs,
    pub direction: Direction,
    pub ue: UeFeatures,
    /// Attached by fusion.
    pub net: Option<NetLoadFeatures>,
    /// Achieved goodput of the completed transfer, Mbit/s.
    pub throughput_mbps: f64,
}

/// Client-side feature columns, in canonical order.
pub const UE_FEATURES: [&str; 8] = [
    "rsrp",
    "rsrq",
    "sinr",
    "cqi",
    "ta",
    "freq_mhz",
    "velocity_mps",
    "payload_bytes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UeField {
    Rsrp,
    Rsrq,
    Sinr,
    Cqi,
    Ta,
    FreqMhz,
    VelocityMps,
    PayloadBytes,
}

impl UeField {
    pub const ALL: [UeField; 8] = [
        UeField::Rsrp,
        UeField::Rsrq,
        UeField::Sinr,
        UeField::Cqi,
        UeField::Ta,
        UeField::FreqMhz,
        UeField::VelocityMps,
        UeField::PayloadBytes,
    ];

    pub fn name(self) -> &'static str {
        UE_FEATURES[self as usize]
    }

    pub fn get(self, ue: &UeFeatures) -> f64 {
        match self {
            UeField::Rsrp => ue.rsrp,
            UeField::Rsrq => ue.rsrq,
            UeField::Sinr => ue.sinr,
            UeField::Cqi => f64::from(ue.cqi),
            UeField::Ta => f64::from(ue.ta),
            UeField::FreqMhz => ue.freq_mhz,
            UeField::VelocityMps => ue.velocity_mps,
            UeField::PayloadBytes => ue.payload_bytes as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetStat {
    MeanNUe,
    StdNUe,
    MeanNPrb,
    StdNPrb,
    MeanMcs,
    StdMcs,
    MeanTbs,
    StdTbs,
}

impl NetStat {
    pub const ALL: [NetStat; 8] = [
        NetStat::MeanNUe,
        NetStat::StdNUe,
        NetStat::MeanNPrb,
        NetStat::StdNPrb,
        NetStat::MeanMcs,
        NetStat::StdMcs,
        NetStat::MeanTbs,
        NetStat::StdTbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetStat::MeanNUe => "mean_n_ue",
            NetStat::StdNUe => "std_n_ue",
            NetStat::MeanNPrb => "mean_n_prb",
            NetStat::StdNPrb => "std_n_prb",
            NetStat::MeanMcs => "mean_mcs",
            NetStat::StdMcs => "std_mcs",
            NetStat::MeanTbs => "mean_tbs",
            NetStat::StdTbs => "std_tbs",
        }
    }
}

/// A column of the fused feature namespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Ue(UeField),
    Net(Direction, NetStat),
}

impl Feature {
    pub fn name(self) -> String {
        match self {
            Feature::Ue(f) => f.name().to_string(),
            Feature::Net(d, s) => format!("{}_{}", s.name(), d.suffix()),
        }
    }

    /// `None` for UE features and for records that have not been fused.
    pub fn value(self, record: &TransmissionRecord) -> Option<f64> {
        match self {
            Feature::Ue(f) => Some(f.get(&record.ue)),
            Feature::Net(d, s) => record.net.as_ref().map(|n| n.direction(d).get(s)),
        }
    }

    pub fn is_net(self) -> bool {
        matches!(self, Feature::Net(..))
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(f) = UeField::ALL.iter().find(|f| f.name() == s) {
            return Ok(Feature::Ue(*f));
        }
        for d in Direction::ALL {
            for stat in NetStat::ALL {
                if s.strip_suffix(d.suffix())
                    .and_then(|p| p.strip_suffix('_'))
                    .is_some_and(|p| p == stat.name())
                {
                    return Ok(Feature::Net(d, stat));
                }
            }
        }
        Err(Error::Config(format!("unknown feature name {s:?}")))
    }
}

/// The eight client-side feature names.
pub fn ue_feature_names() -> Vec<String> {
    UE_FEATURES.iter().map(|s| s.to_string()).collect()
}

/// The sixteen network-side feature names: UL statistics first, then DL.
pub fn net_feature_names() -> Vec<String> {
    Direction::ALL
        .iter()
        .flat_map(|&d| NetStat::ALL.iter().map(move |&s| Feature::Net(d, s).name()))
        .collect()
}

/// Rectangular, gap-free training matrix for one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub direction: Direction,
}

impl FusedDataset {
    pub fn new(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<f64>,
        direction: Direction,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::Contract(format!(
                "row {i} has {} values, expected {}",
                r.len(),
                columns.len()
            )));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::Contract(format!("duplicate column {c:?}")));
            }
        }
        let finite = rows.iter().flatten().chain(labels.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Contract("dataset contains non-finite values".into()));
        }
        Ok(FusedDataset {
            columns,
            rows,
            labels,
            direction,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Subset of rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FusedDataset {
        FusedDataset {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            direction: self.direction,
        }
    }

    /// Projection onto the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FusedDataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Config(format!("dataset has no column {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FusedDataset {
            columns: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            direction: self.direction,
        })
    }
}

/// Bounds a record is validated against, plus the transfer duration when the
/// caller knows it (the label can only be re-derived with it).
#[derive(Debug, Clone, Copy)]
pub struct ValidationContext {
    pub payload_min: u64,
    pub payload_max: u64,
    pub duration_ms: Option<u64>,
}

impl Default for ValidationContext {
    fn default() -> Self {
        ValidationContext {
            payload_min: 100_000,
            payload_max: 10_000_000,
            duration_ms: None,
        }
    }
}

/// Relative tolerance between a label and payload/duration.
pub const LABEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CqiOutOfRange(u8),
    RsrqPositive(f64),
    PayloadOutOfRange { value: u64, min: u64, max: u64 },
    NonFinite(&'static str),
    NegativeVelocity(f64),
    NonPositiveThroughput(f64),
    LabelInconsistent { label: f64, expected: f64 },
    NegativeNetStat(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CqiOutOfRange(_) => write!(f, "cqi out of range 0–15"),
            Violation::RsrqPositive(v) => write!(f, "rsrq {v} dB above 0 dB"),
            Violation::PayloadOutOfRange { value, min, max } => {
                write!(f, "payload_bytes {value} outside [{min}, {max}]")
            }
            Violation::NonFinite(field) => write!(f, "{field} is not finite"),
            Violation::NegativeVelocity(v) => write!(f, "velocity_mps {v} below 0"),
            Violation::NonPositiveThroughput(v) => write!(f, "throughput_mbps {v} not above 0"),
            Violation::LabelInconsistent { .. } => write!(f, "label inconsistent"),
            Violation::NegativeNetStat(name) => write!(f, "{name} below 0"),
        }
    }
}

/// Goodput in Mbit/s of `payload_bytes` delivered over `duration_ms`.
pub fn throughput_mbps(payload_bytes: u64, duration_ms: u64) -> f64 {
    payload_bytes as f64 * 8.0 / 1e6 / (duration_ms as f64 / 1000.0)
}

/// Checks every type invariant of a record. Never aborts.
pub fn validate_record(r: &TransmissionRecord, ctx: &ValidationContext) -> Vec<Violation> {
    let mut out = Vec::new();
    let ue = &r.ue;
    for (name, v) in [
        ("rsrp", ue.rsrp),
        ("rsrq", ue.rsrq),
        ("sinr", ue.sinr),
        ("freq_mhz", ue.freq_mhz),
        ("velocity_mps", ue.velocity_mps),
        ("throughput_mbps", r.throughput_mbps),
    ] {
        if !v.is_finite() {
            out.push(Violation::NonFinite(name));
        }
    }
    if ue.cqi > CQI_MAX {
        out.push(Violation::CqiOutOfRange(ue.cqi));
    }
    if ue.rsrq > 0.0 {
        out.push(Violation::RsrqPositive(ue.rsrq));
    }
    if ue.velocity_mps < 0.0 {
        out.push(Violation::NegativeVelocity(ue.velocity_mps));
    }
    if ue.payload_bytes < ctx.payload_min || ue.payload_bytes > ctx.payload_max {
        out.push(Violation::PayloadOutOfRange {
            value: ue.payload_bytes,
            min: ctx.payload_min,
            max: ctx.payload_max,
        });
    }
    if r.throughput_mbps <= 0.0 {
        out.push(Violation::NonPositiveThroughput(r.throughput_mbps));
    }
    if let Some(d) = ctx.duration_ms {
        let expected = throughput_mbps(ue.payload_bytes, d.max(1));
        if ((r.throughput_mbps - expected) / expected).abs() > LABEL_TOLERANCE {
            out.push(Violation::LabelInconsistent {
                label: r.throughput_mbps,
                expected,
            });
        }
    }
    if let Some(net) = &r.net {
        for d in Direction::ALL {
            for s in NetStat::ALL.iter().filter(|s| s.name().starts_with("std")) {
                if net.direction(d).get(*s) < 0.0 {
                    out.push(Violation::NegativeNetStat(Feature::Net(d, *s).name()));
                }
            }
        }
    }
    out
}
