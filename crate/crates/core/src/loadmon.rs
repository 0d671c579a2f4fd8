//! Cell-load statistics from the decoded grant stream.
//!
//! Every subframe is reduced to four quantities (active users, PRBs, PRB-weighted
//! MCS, transported bits); a window then reports the mean and sample standard
//! deviation of each across all its subframes, idle ones counting as zero.

use crate::error::{Error, Result};
use crate::types::{
    Direction, DirectionalLoad, NetLoadFeatures, TimestampMs, TtiAllocation, WindowLoad,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubframeStats {
    pub t: TimestampMs,
    pub direction: Direction,
    pub n_ue: u32,
    pub n_prb: u32,
    pub mean_mcs: f64,
    pub sum_tbs_bits: u64,
}

impl SubframeStats {
    fn values(&self) -> [f64; 4] {
        [
            f64::from(self.n_ue),
            f64::from(self.n_prb),
            self.mean_mcs,
            self.sum_tbs_bits as f64,
        ]
    }
}

/// Statistics of one subframe. All allocations must carry `t` and `direction`.
pub fn subframe_stats(
    allocs: &[TtiAllocation],
    t: TimestampMs,
    direction: Direction,
) -> Result<SubframeStats> {
    if let Some(a) = allocs.iter().find(|a| a.t != t || a.direction != direction) {
        return Err(Error::Contract(format!(
            "allocation at {} ms {} in subframe {} ms {}",
            a.t.0,
            a.direction.code(),
            t.0,
            direction.code()
        )));
    }
    let mut acc = SubframeAcc::default();
    for a in allocs {
        acc.add(a);
    }
    Ok(acc.stats(t, direction))
}

#[derive(Debug, Default, Clone)]
struct SubframeAcc {
    rntis: Vec<u32>,
    n_prb: u64,
    mcs_weighted: u64,
    tbs: u64,
}

impl SubframeAcc {
    fn add(&mut self, a: &TtiAllocation) {
        if !self.rntis.contains(&a.rnti) {
            self.rntis.push(a.rnti);
        }
        self.n_prb += u64::from(a.n_prb);
        self.mcs_weighted += u64::from(a.mcs) * u64::from(a.n_prb);
        self.tbs += a.tbs_bits;
    }

    fn stats(&self, t: TimestampMs, direction: Direction) -> SubframeStats {
        SubframeStats {
            t,
            direction,
            n_ue: self.rntis.len() as u32,
            n_prb: self.n_prb as u32,
            mean_mcs: if self.n_prb == 0 {
                0.0
            } else {
                self.mcs_weighted as f64 / self.n_prb as f64
            },
            sum_tbs_bits: self.tbs,
        }
    }
}

/// Mean and sample standard deviation; a single value or a constant series
/// has deviation exactly zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let Some(&first) = values.first() else {
        return (0.0, 0.0);
    };
    if values.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn load_from_subframes(subframes: &[[f64; 4]]) -> DirectionalLoad {
    let mut out = [0.0; 8];
    let mut column = Vec::with_capacity(subframes.len());
    for q in 0..4 {
        column.clear();
        column.extend(subframes.iter().map(|s| s[q]));
        let (m, s) = mean_std(&column);
        out[2 * q] = m;
        out[2 * q + 1] = s;
    }
    DirectionalLoad::from_values(out)
}

/// Load statistics of `direction` over `[window_start, window_start + len)`.
/// Allocations outside the window or of the other direction are ignored, in
/// any order.
pub fn window_features(
    allocs: &[TtiAllocation],
    window_start: TimestampMs,
    window_len_ms: u64,
    direction: Direction,
) -> Result<WindowLoad> {
    if window_len_ms == 0 {
        return Err(Error::Contract("window_len_ms must be >= 1".into()));
    }
    let start = window_start.0;
    let end = start + window_len_ms;
    let mut accs = vec![SubframeAcc::default(); window_len_ms as usize];
    for a in allocs {
        if a.direction == direction && (start..end).contains(&a.t.0) {
            accs[(a.t.0 - start) as usize].add(a);
        }
    }
    let subframes: Vec<[f64; 4]> = accs
        .iter()
        .enumerate()
        .map(|(i, acc)| acc.stats(TimestampMs(start + i as u64), direction).values())
        .collect();
    Ok(WindowLoad {
        window_start,
        window_len_ms,
        direction,
        load: load_from_subframes(&subframes),
    })
}

/// Both directions of one window.
pub fn window_features_both(
    allocs: &[TtiAllocation],
    window_start: TimestampMs,
    window_len_ms: u64,
) -> Result<NetLoadFeatures> {
    let ul = window_features(allocs, window_start, window_len_ms, Direction::Uplink)?;
    let dl = window_features(allocs, window_start, window_len_ms, Direction::Downlink)?;
    Ok(NetLoadFeatures {
        window_start,
        window_len_ms,
        ul: ul.load,
        dl: dl.load,
    })
}

/// Streaming aggregation of a time-ordered grant stream into contiguous
/// windows aligned to multiples of the window length, starting at time 0.
#[derive(Debug)]
pub struct WindowAggregator {
    len: u64,
    window: Option<u64>,
    last_t: u64,
    subframes: [Vec<[f64; 4]>; 2],
    current: [Option<(u64, SubframeAcc)>; 2],
    out: Vec<WindowLoad>,
}

impl WindowAggregator {
    pub fn new(window_len_ms: u64) -> Result<Self> {
        if window_len_ms == 0 {
            return Err(Error::Contract("window_len_ms must be >= 1".into()));
        }
        let blank = vec![[0.0; 4]; window_len_ms as usize];
        Ok(WindowAggregator {
            len: window_len_ms,
            window: None,
            last_t: 0,
            subframes: [blank.clone(), blank],
            current: [None, None],
            out: Vec::new(),
        })
    }

    pub fn push(&mut self, a: &TtiAllocation) -> Result<()> {
        let t = a.t.0;
        if self.window.is_some() && t < self.last_t {
            return Err(Error::Contract(format!(
                "allocation stream not time-ordered: {t} ms after {} ms",
                self.last_t
            )));
        }
        self.last_t = t;
        let w = t / self.len;
        match self.window {
            None => {
                for idle in 0..w {
                    self.emit_idle(idle);
                }
                self.window = Some(w);
            }
            Some(cur) if w > cur => {
                self.close_window(cur);
                for idle in cur + 1..w {
                    self.emit_idle(idle);
                }
                self.window = Some(w);
            }
            _ => {}
        }
        let d = a.direction.index();
        match &mut self.current[d] {
            Some((ct, acc)) if *ct == t => acc.add(a),
            slot => {
                if let Some((ct, acc)) = slot.take() {
                    self.subframes[d][(ct % self.len) as usize] = acc.stats(TimestampMs(ct), a.direction).values();
                }
                let mut acc = SubframeAcc::default();
                acc.add(a);
                self.current[d] = Some((t, acc));
            }
        }
        Ok(())
    }

    fn close_window(&mut self, w: u64) {
        let start = TimestampMs(w * self.len);
        for d in Direction::ALL {
            let i = d.index();
            if let Some((ct, acc)) = self.current[i].take() {
                self.subframes[i][(ct % self.len) as usize] = acc.stats(TimestampMs(ct), d).values();
            }
            self.out.push(WindowLoad {
                window_start: start,
                window_len_ms: self.len,
                direction: d,
                load: load_from_subframes(&self.subframes[i]),
            });
            self.subframes[i].iter_mut().for_each(|s| *s = [0.0; 4]);
        }
    }

    fn emit_idle(&mut self, w: u64) {
        for d in Direction::ALL {
            self.out.push(WindowLoad {
                window_start: TimestampMs(w * self.len),
                window_len_ms: self.len,
                direction: d,
                load: DirectionalLoad::default(),
            });
        }
    }

    /// Closes the last window; rows come UL then DL per window.
    pub fn finish(mut self) -> Vec<WindowLoad> {
        if let Some(w) = self.window {
            self.close_window(w);
        }
        self.out
    }
}

/// Aggregates a whole trace. Windows run contiguously from time 0 to the
/// last window holding any allocation.
pub fn aggregate(allocs: &[TtiAllocation], window_len_ms: u64) -> Result<Vec<WindowLoad>> {
    let mut agg = WindowAggregator::new(window_len_ms)?;
    for a in allocs {
        agg.push(a)?;
    }
    Ok(agg.finish())
}

/// Pairs per-direction window rows into per-window feature sets. Every window
/// must have exactly one row per direction.
pub fn combine_directions(rows: &[WindowLoad]) -> Result<Vec<NetLoadFeatures>> {
    let mut sorted: Vec<&WindowLoad> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.window_start, r.direction.index()));
    let mut out: Vec<NetLoadFeatures> = Vec::with_capacity(rows.len() / 2);
    for pair in sorted.chunks(2) {
        match pair {
            [ul, dl]
                if ul.window_start == dl.window_start
                    && ul.direction == Direction::Uplink
                    && dl.direction == Direction::Downlink
                    && ul.window_len_ms == dl.window_len_ms =>
            {
                out.push(NetLoadFeatures {
                    window_start: ul.window_start,
                    window_len_ms: ul.window_len_ms,
                    ul: ul.load,
                    dl: dl.load,
                });
            }
            _ => {
                return Err(Error::Contract(format!(
                    "window at {} ms lacks one row per direction",
                    pair[0].window_start.0
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(t: u64, d: Direction, rnti: u32, n_prb: u32, mcs: u8) -> TtiAllocation {
        TtiAllocation {
            t: TimestampMs(t),
            direction: d,
            rnti,
            n_prb,
            mcs,
            tbs_bits: crate::cellsim::tbs_lookup(mcs, n_prb).unwrap(),
        }
    }

    const DL: Direction = Direction::Downlink;
    const UL: Direction = Direction::Uplink;

    #[test]
    fn empty_subframe_is_zero() {
        let s = subframe_stats(&[], TimestampMs(4), DL).unwrap();
        assert_eq!((s.n_ue, s.n_prb, s.mean_mcs, s.sum_tbs_bits), (0, 0, 0.0, 0));
    }

    #[test]
    fn two_users_hand_aggregation() {
        let a = [alloc(4, DL, 7, 10, 4), alloc(4, DL, 9, 20, 10)];
        let s = subframe_stats(&a, TimestampMs(4), DL).unwrap();
        assert_eq!(s.n_ue, 2);
        assert_eq!(s.n_prb, 30);
        assert!((s.mean_mcs - (40.0 + 200.0) / 30.0).abs() < 1e-12);
        assert_eq!(s.sum_tbs_bits, a[0].tbs_bits + a[1].tbs_bits);
    }

    #[test]
    fn regrant_counts_one_user() {
        let a = [alloc(4, DL, 7, 10, 4), alloc(4, DL, 7, 5, 4)];
        assert_eq!(subframe_stats(&a, TimestampMs(4), DL).unwrap().n_ue, 1);
    }

    #[test]
    fn mixed_subframe_is_a_contract_error() {
        let a = [alloc(4, DL, 7, 10, 4), alloc(5, DL, 9, 20, 10)];
        assert!(matches!(subframe_stats(&a, TimestampMs(4), DL), Err(Error::Contract(_))));
        let a = [alloc(4, UL, 7, 10, 4)];
        assert!(subframe_stats(&a, TimestampMs(4), DL).is_err());
    }

    #[test]
    fn constant_window_has_zero_spread() {
        let a: Vec<_> = (0..1000).map(|t| alloc(t, DL, 3, 20, 9)).collect();
        let w = window_features(&a, TimestampMs(0), 1000, DL).unwrap().load;
        assert_eq!(w.mean_n_prb, 20.0);
        assert_eq!(w.std_n_prb, 0.0);
        assert_eq!(w.std_n_ue, 0.0);
        assert_eq!(w.std_mcs, 0.0);
    }

    #[test]
    fn three_subframe_window() {
        let a = [alloc(0, UL, 1, 10, 5), alloc(1, UL, 1, 20, 5), alloc(2, UL, 1, 30, 5)];
        let w = window_features(&a, TimestampMs(0), 3, UL).unwrap().load;
        assert!((w.mean_n_prb - 20.0).abs() < 1e-12);
        assert!((w.std_n_prb - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_idle() {
        let w = window_features(&[], TimestampMs(0), 1000, UL).unwrap().load;
        assert_eq!(w, DirectionalLoad::default());
    }

    #[test]
    fn idle_subframes_count_as_zero() {
        let a = [alloc(0, DL, 1, 10, 5)];
        let w = window_features(&a, TimestampMs(0), 2, DL).unwrap().load;
        assert_eq!(w.mean_n_prb, 5.0);
        assert!((w.std_n_prb - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn streaming_matches_batch_and_fills_gaps() {
        let mut a = Vec::new();
        for t in 0..40u64 {
            if (10..30).contains(&t) {
                continue;
            }
            a.push(alloc(t, UL, 1 + (t % 3) as u32, (t % 7) as u32 + 1, (t % 20) as u8));
            a.push(alloc(t, DL, 2, 4, 9));
            if t % 4 == 0 {
                a.push(alloc(t, DL, 5, 3, 12));
            }
        }
        let rows = aggregate(&a, 10).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            let want = window_features(&a, r.window_start, 10, r.direction).unwrap();
            assert_eq!(*r, want);
        }
        let nets = combine_directions(&rows).unwrap();
        assert_eq!(nets.len(), 4);
        assert_eq!(nets[1].ul, DirectionalLoad::default());
    }

    #[test]
    fn out_of_order_stream_is_rejected() {
        let a = [alloc(5, UL, 1, 1, 1), alloc(3, UL, 1, 1, 1)];
        assert!(aggregate(&a, 10).is_err());
    }
}
