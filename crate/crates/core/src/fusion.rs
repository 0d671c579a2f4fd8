//! Joins transmission records with the load window that closes right before
//! each transfer starts, and projects the result onto feature matrices.

use std::cmp::Ordering;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{Direction, Feature, FusedDataset, NetLoadFeatures, TransmissionRecord};

/// Fraction of unmatched transmissions above which fusion flags the inputs.
pub const UNMATCHED_WARN_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    pub records: Vec<TransmissionRecord>,
    pub dropped: usize,
    /// Set when more than 10% of the transmissions found no window.
    pub misconfigured: bool,
}

/// Attaches to every transmission the window ending at or immediately before
/// its start. Both inputs must be time-sorted and the windows contiguous.
pub fn fuse(
    transmissions: &[TransmissionRecord],
    net: &[NetLoadFeatures],
    window_len_ms: u64,
) -> Result<FuseOutcome> {
    if window_len_ms == 0 {
        return Err(Error::Contract("window_len_ms must be >= 1".into()));
    }
    if let Some(i) = (1..transmissions.len()).find(|&i| transmissions[i].t_start < transmissions[i - 1].t_start) {
        return Err(Error::Contract(format!(
            "transmissions not sorted by time at row {i} ({} ms after {} ms)",
            transmissions[i].t_start.0,
            transmissions[i - 1].t_start.0
        )));
    }
    if let Some(w) = net.iter().find(|w| w.window_len_ms != window_len_ms) {
        return Err(Error::Contract(format!(
            "window at {} ms has length {} ms, expected {window_len_ms}",
            w.window_start.0, w.window_len_ms
        )));
    }
    for pair in net.windows(2) {
        if pair[1].window_start != pair[0].window_end() {
            return Err(Error::Contract(format!(
                "load windows not sorted and contiguous: {} ms follows window ending {} ms",
                pair[1].window_start.0,
                pair[0].window_end().0
            )));
        }
    }

    let mut records = Vec::with_capacity(transmissions.len());
    let mut dropped = 0;
    for r in transmissions {
        let t = r.t_start.0;
        let idx = net.partition_point(|w| w.window_end().0 <= t);
        let joined = idx
            .checked_sub(1)
            .map(|i| &net[i])
            .filter(|w| w.window_end().0 + window_len_ms > t);
        match joined {
            Some(w) => {
                let mut fused = r.clone();
                fused.net = Some(*w);
                records.push(fused);
            }
            None => dropped += 1,
        }
    }

    let misconfigured =
        !transmissions.is_empty() && dropped as f64 > UNMATCHED_WARN_FRACTION * transmissions.len() as f64;
    if misconfigured {
        log::warn!(
            "{dropped} of {} transmissions have no preceding load window; check that both traces cover the same period",
            transmissions.len()
        );
    }
    Ok(FuseOutcome {
        records,
        dropped,
        misconfigured,
    })
}

fn record_order(a: &TransmissionRecord, b: &TransmissionRecord) -> Ordering {
    a.t_start
        .cmp(&b.t_start)
        .then(a.direction.index().cmp(&b.direction.index()))
        .then(a.throughput_mbps.total_cmp(&b.throughput_mbps))
        .then(a.ue.payload_bytes.cmp(&b.ue.payload_bytes))
        .then(a.ue.rsrp.total_cmp(&b.ue.rsrp))
        .then(a.ue.sinr.total_cmp(&b.ue.sinr))
}

/// Sorts both inputs canonically before fusing, so the result does not
/// depend on the order the records arrived in.
pub fn fuse_unordered(
    transmissions: &[TransmissionRecord],
    net: &[NetLoadFeatures],
    window_len_ms: u64,
) -> Result<FuseOutcome> {
    let mut tx = transmissions.to_vec();
    tx.sort_by(record_order);
    let mut windows = net.to_vec();
    windows.sort_by_key(|w| w.window_start);
    fuse(&tx, &windows, window_len_ms)
}

/// Feature matrix of the records of `direction`, columns in the given order,
/// labels the achieved throughput.
pub fn build_dataset(
    records: &[TransmissionRecord],
    direction: Direction,
    feature_names: &[String],
) -> Result<FusedDataset> {
    if feature_names.is_empty() {
        return Err(Error::Config("empty feature set".into()));
    }
    let features = feature_names
        .iter()
        .map(|n| Feature::from_str(n))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for r in records.iter().filter(|r| r.direction == direction) {
        let row = features
            .iter()
            .map(|f| {
                f.value(r).ok_or_else(|| {
                    Error::Contract(format!(
                        "record at {} ms has no load features; fuse before building",
                        r.t_start.0
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        labels.push(r.throughput_mbps);
    }
    FusedDataset::new(feature_names.to_vec(), rows, labels, direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DirectionalLoad, TimestampMs, UeFeatures};

    fn tx(t: u64, d: Direction) -> TransmissionRecord {
        TransmissionRecord {
            t_start: TimestampMs(t),
            direction: d,
            ue: UeFeatures {
                rsrp: -90.0,
                rsrq: -10.0,
                sinr: 5.0,
                cqi: 7,
                ta: 3,
                freq_mhz: 1800.0,
                velocity_mps: 10.0,
                payload_bytes: 1_000_000,
            },
            net: None,
            throughput_mbps: 8.0 + t as f64 / 1000.0,
        }
    }

    fn windows(start: u64, n: u64, len: u64) -> Vec<NetLoadFeatures> {
        (0..n)
            .map(|i| {
                let mut load = DirectionalLoad::default();
                load.mean_n_prb = i as f64;
                NetLoadFeatures {
                    window_start: TimestampMs(start + i * len),
                    window_len_ms: len,
                    ul: load,
                    dl: load,
                }
            })
            .collect()
    }

    #[test]
    fn joins_immediately_preceding_window() {
        let out = fuse(&[tx(5000, Direction::Uplink)], &windows(3000, 2, 1000), 1000).unwrap();
        assert_eq!(out.dropped, 0);
        assert_eq!(out.records[0].net.unwrap().window_start, TimestampMs(4000));
    }

    #[test]
    fn drops_transmissions_without_window() {
        let out = fuse(&[tx(500, Direction::Uplink)], &windows(1000, 3, 1000), 1000).unwrap();
        assert_eq!(out.dropped, 1);
        assert!(out.records.is_empty());
        assert!(out.misconfigured);
    }

    #[test]
    fn stale_windows_are_not_joined() {
        let out = fuse(&[tx(9000, Direction::Uplink)], &windows(0, 3, 1000), 1000).unwrap();
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn unsorted_inputs_are_contract_errors() {
        let t = [tx(5000, Direction::Uplink), tx(2000, Direction::Downlink)];
        assert!(matches!(fuse(&t, &windows(0, 6, 1000), 1000), Err(Error::Contract(_))));
        let mut w = windows(0, 6, 1000);
        w.swap(1, 2);
        assert!(fuse(&t[..1], &w, 1000).is_err());
        assert!(fuse_unordered(&t, &w, 1000).is_ok());
    }

    #[test]
    fn build_dataset_shapes() {
        let recs = fuse(
            &[tx(2000, Direction::Uplink), tx(3000, Direction::Downlink), tx(4000, Direction::Uplink)],
            &windows(0, 5, 1000),
            1000,
        )
        .unwrap()
        .records;
        let ds = build_dataset(&recs, Direction::Uplink, &crate::types::ue_feature_names()).unwrap();
        assert_eq!(ds.n_cols(), 8);
        assert_eq!(ds.n_rows(), 2);
        let err = build_dataset(&recs, Direction::Uplink, &[]).unwrap_err();
        assert!(err.to_string().contains("empty feature set"));
        assert!(build_dataset(&recs, Direction::Uplink, &["bogus".to_string()]).is_err());
        let net = build_dataset(&recs, Direction::Downlink, &["mean_n_prb_ul".to_string()]).unwrap();
        assert_eq!(net.rows, vec![vec![2.0]]);
    }

    #[test]
    fn unfused_records_cannot_feed_net_columns() {
        let recs = [tx(2000, Direction::Uplink)];
        assert!(build_dataset(&recs, Direction::Uplink, &["std_tbs_dl".to_string()]).is_err());
        assert!(build_dataset(&recs, Direction::Uplink, &["rsrp".to_string()]).is_ok());
    }
}
