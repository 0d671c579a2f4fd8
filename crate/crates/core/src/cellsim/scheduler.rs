use crate::types::{Direction, TimestampMs, TtiAllocation};

use super::load::BackgroundLoad;
use super::radio::tbs_bits;

/// One user's request for a single subframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserDemand {
    pub rnti: u32,
    pub demand_prb: u32,
    pub mcs: u8,
}

/// Round-robin PRB split with demand caps (water-filling over integer PRBs).
///
/// Users whose demand fits under the equal share get it in full; the rest
/// share what is left equally. Leftover single PRBs go to the capped users in
/// an order rotated by `rotation`, so over many TTIs nobody is favoured.
/// Returns one grant per input user, in input order.
pub fn round_robin(budget: u32, demands: &[u32], rotation: u64) -> Vec<u32> {
    let mut grants = vec![0u32; demands.len()];
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by_key(|&i| demands[i]);

    let mut left = u64::from(budget);
    let mut pos = 0;
    while pos < order.len() {
        let k = (order.len() - pos) as u64;
        let d = u64::from(demands[order[pos]]);
        if d * k > left {
            break;
        }
        grants[order[pos]] = d as u32;
        left -= d;
        pos += 1;
    }

    let mut capped: Vec<usize> = order[pos..].to_vec();
    if capped.is_empty() {
        return grants;
    }
    capped.sort_unstable();
    let k = capped.len() as u64;
    let share = (left / k) as u32;
    let extra = (left % k) as usize;
    let offset = (rotation % k) as usize;
    for (j, &i) in capped.iter().enumerate() {
        let bonus = u32::from((j + capped.len() - offset) % capped.len() < extra);
        grants[i] = share + bonus;
    }
    grants
}

/// The target UE's ongoing transfer under TCP slow start.
#[derive(Debug, Clone)]
pub struct TargetTransfer {
    pub rnti: u32,
    pub direction: Direction,
    pub start_ms: u64,
    pub remaining_bits: u64,
    pub mcs: u8,
    cwnd_init_bits: u64,
    rtt_ms: f64,
    /// Last subframe in which the transfer received bits.
    pub last_grant_ms: Option<u64>,
}

impl TargetTransfer {
    pub fn new(
        rnti: u32,
        direction: Direction,
        start_ms: u64,
        payload_bytes: u64,
        mcs: u8,
        cwnd_init_bits: u64,
        rtt_ms: f64,
    ) -> Self {
        TargetTransfer {
            rnti,
            direction,
            start_ms,
            remaining_bits: payload_bytes * 8,
            mcs,
            cwnd_init_bits,
            rtt_ms,
            last_grant_ms: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.remaining_bits == 0
    }

    /// Congestion window at `t_ms`: doubles once per round trip.
    pub fn cwnd_bits(&self, t_ms: u64) -> f64 {
        let rounds = ((t_ms.saturating_sub(self.start_ms)) as f64 / self.rtt_ms).floor();
        self.cwnd_init_bits as f64 * rounds.min(40.0).exp2()
    }

    /// Bits the window lets through in one subframe.
    pub fn cap_bits(&self, t_ms: u64) -> u64 {
        (self.cwnd_bits(t_ms) / self.rtt_ms).floor() as u64
    }

    /// PRBs requested at `t_ms`: the largest grant whose block fits the
    /// window, except for the final block, which asks for just enough PRBs to
    /// finish. At least one PRB is requested while bits remain.
    pub fn demand_prb(&self, t_ms: u64, n_prb_cell: u32) -> u32 {
        if self.is_done() {
            return 0;
        }
        let cap = self.cap_bits(t_ms);
        let fits = |n: u32, limit: u64| tbs_bits(self.mcs, n) <= limit;
        if self.remaining_bits <= cap {
            // Smallest n with tbs >= remaining.
            let (mut lo, mut hi) = (1u32, n_prb_cell);
            if tbs_bits(self.mcs, hi) < self.remaining_bits {
                return n_prb_cell;
            }
            while lo < hi {
                let mid = (lo + hi) / 2;
                if tbs_bits(self.mcs, mid) >= self.remaining_bits {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            return lo;
        }
        // Largest n with tbs <= cap.
        let (mut lo, mut hi) = (0u32, n_prb_cell);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if fits(mid, cap) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo.max(1)
    }

    /// Applies a grant; returns the bits delivered.
    pub fn deliver(&mut self, t_ms: u64, n_prb: u32) -> u64 {
        let bits = tbs_bits(self.mcs, n_prb).min(self.remaining_bits);
        if bits > 0 {
            self.remaining_bits -= bits;
            self.last_grant_ms = Some(t_ms);
        }
        bits
    }
}

/// Scheduling state of the cell: background load per direction plus an
/// optional target transfer.
#[derive(Debug)]
pub struct CellState {
    pub n_prb_cell: u32,
    background: [BackgroundLoad; 2],
    pub target: Option<TargetTransfer>,
    users: Vec<UserDemand>,
    demands: Vec<u32>,
}

impl CellState {
    /// `background` is indexed by [`Direction::index`].
    pub fn new(n_prb_cell: u32, background: [BackgroundLoad; 2]) -> Self {
        CellState {
            n_prb_cell,
            background,
            target: None,
            users: Vec::new(),
            demands: Vec::new(),
        }
    }

    /// Schedules one subframe of `direction`, appending the grants to `out`.
    /// Subframes of one direction must be scheduled in increasing time order.
    pub fn schedule_tti(&mut self, direction: Direction, t: u64, out: &mut Vec<TtiAllocation>) {
        self.users.clear();
        self.background[direction.index()].scheduled_at(t, &mut self.users);
        let target_slot = match &self.target {
            Some(tr) if tr.direction == direction && !tr.is_done() && t >= tr.start_ms => {
                self.users.push(UserDemand {
                    rnti: tr.rnti,
                    demand_prb: tr.demand_prb(t, self.n_prb_cell),
                    mcs: tr.mcs,
                });
                Some(self.users.len() - 1)
            }
            _ => None,
        };

        self.demands.clear();
        self.demands.extend(self.users.iter().map(|u| u.demand_prb));
        let grants = round_robin(self.n_prb_cell, &self.demands, t);

        for (i, (u, &g)) in self.users.iter().zip(&grants).enumerate() {
            if g == 0 {
                continue;
            }
            if Some(i) == target_slot {
                if let Some(tr) = self.target.as_mut() {
                    tr.deliver(t, g);
                }
            }
            out.push(TtiAllocation {
                t: TimestampMs(t),
                direction,
                rnti: u.rnti,
                n_prb: g,
                mcs: u.mcs,
                tbs_bits: tbs_bits(u.mcs, g),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sole_user_takes_all() {
        assert_eq!(round_robin(50, &[80], 0), vec![50]);
        assert_eq!(round_robin(50, &[50], 3), vec![50]);
    }

    #[test]
    fn equal_pair_splits_evenly() {
        assert_eq!(round_robin(50, &[50, 50], 0), vec![25, 25]);
        assert_eq!(round_robin(50, &[30, 40], 7), vec![25, 25]);
    }

    #[test]
    fn small_demands_are_met_in_full() {
        assert_eq!(round_robin(50, &[5, 100, 100], 0), vec![5, 23, 22]);
        assert_eq!(round_robin(50, &[3, 4], 0), vec![3, 4]);
        assert_eq!(round_robin(50, &[], 0), Vec::<u32>::new());
    }

    #[test]
    fn three_way_fairness_over_seeded_ttis() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut totals = [0u64; 3];
        for t in 0..1000u64 {
            let d: Vec<u32> = (0..3).map(|_| rng.random_range(50..=200)).collect();
            let g = round_robin(50, &d, t);
            assert_eq!(g.iter().sum::<u32>(), 50, "t={t}");
            for a in &g {
                for b in &g {
                    assert!(a.abs_diff(*b) <= 1, "t={t} {g:?}");
                }
            }
            for (tot, x) in totals.iter_mut().zip(&g) {
                *tot += u64::from(*x);
            }
        }
        let max = *totals.iter().max().unwrap();
        let min = *totals.iter().min().unwrap();
        assert!(max - min <= 1, "{totals:?}");
    }

    #[test]
    fn grants_never_exceed_demand_or_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in 0..2000u64 {
            let n = rng.random_range(0..12);
            let d: Vec<u32> = (0..n).map(|_| rng.random_range(0..40)).collect();
            let g = round_robin(50, &d, t);
            assert!(g.iter().sum::<u32>() <= 50);
            assert!(g.iter().zip(&d).all(|(g, d)| g <= d));
            if d.iter().sum::<u32>() >= 50 {
                assert_eq!(g.iter().sum::<u32>(), 50);
            }
        }
    }

    #[test]
    fn slow_start_doubles_per_rtt() {
        let tr = TargetTransfer::new(61, Direction::Downlink, 1000, 1_000_000, 20, 116_800, 50.0);
        assert_eq!(tr.cwnd_bits(1000), 116_800.0);
        assert_eq!(tr.cwnd_bits(1049), 116_800.0);
        assert_eq!(tr.cwnd_bits(1050), 233_600.0);
        assert_eq!(tr.cap_bits(1000), 2336);
    }

    #[test]
    fn demand_respects_window_and_pads_only_the_tail() {
        let mut tr = TargetTransfer::new(61, Direction::Uplink, 0, 100_000, 28, 116_800, 50.0);
        let n = tr.demand_prb(0, 50);
        assert!(tbs_bits(28, n) <= tr.cap_bits(0));
        assert!(tbs_bits(28, n + 1) > tr.cap_bits(0));
        let mut t = 0;
        let mut sum = 0;
        while !tr.is_done() {
            let n = tr.demand_prb(t, 50);
            sum += tbs_bits(28, n);
            tr.deliver(t, n);
            t += 1;
        }
        let payload = 800_000;
        assert!(sum >= payload && sum - payload <= tbs_bits(28, 1) + 1, "{sum}");
    }
}
