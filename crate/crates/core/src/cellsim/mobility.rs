use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::TrajectoryConfig;

/// A vehicle shuttling radially between `d_min` and `d_max`, with a speed
/// redrawn every segment. Segments are drawn lazily but always in the same
/// order, so positions do not depend on which instants are queried.
#[derive(Debug)]
pub struct Trajectory {
    cfg: TrajectoryConfig,
    segment_ms: u64,
    /// (path length at segment start, speed) per segment.
    segments: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

impl Trajectory {
    pub fn new(cfg: &TrajectoryConfig, mut rng: ChaCha8Rng) -> Self {
        let span = cfg.d_max_m - cfg.d_min_m;
        let s0 = rng.random::<f64>() * 2.0 * span;
        let mut t = Trajectory {
            cfg: cfg.clone(),
            segment_ms: ((cfg.segment_s * 1000.0).round() as u64).max(1),
            segments: Vec::new(),
            rng,
        };
        let v = t.draw_speed();
        t.segments.push((s0, v));
        t
    }

    fn draw_speed(&mut self) -> f64 {
        let (lo, hi) = (self.cfg.speed_min_mps, self.cfg.speed_max_mps);
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn ensure(&mut self, seg: usize) {
        while self.segments.len() <= seg {
            let (s, v) = *self.segments.last().expect("at least one segment");
            let next = s + v * self.segment_ms as f64 / 1000.0;
            let speed = self.draw_speed();
            self.segments.push((next, speed));
        }
    }

    /// Distance to the antenna, metres.
    pub fn distance_m(&mut self, t_ms: u64) -> f64 {
        let seg = (t_ms / self.segment_ms) as usize;
        self.ensure(seg);
        let (s, v) = self.segments[seg];
        let path = s + v * (t_ms - seg as u64 * self.segment_ms) as f64 / 1000.0;
        let span = self.cfg.d_max_m - self.cfg.d_min_m;
        let m = path.rem_euclid(2.0 * span);
        self.cfg.d_min_m + if m <= span { m } else { 2.0 * span - m }
    }

    pub fn speed_mps(&mut self, t_ms: u64) -> f64 {
        let seg = (t_ms / self.segment_ms) as usize;
        self.ensure(seg);
        self.segments[seg].1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn stays_in_range_and_is_query_order_independent() {
        let cfg = TrajectoryConfig::default();
        let mut a = Trajectory::new(&cfg, ChaCha8Rng::seed_from_u64(3));
        let mut b = Trajectory::new(&cfg, ChaCha8Rng::seed_from_u64(3));
        let late = b.distance_m(500_000);
        for t in (0..=500_000).step_by(1_000) {
            let d = a.distance_m(t);
            assert!(d >= cfg.d_min_m && d <= cfg.d_max_m);
        }
        assert_eq!(a.distance_m(500_000), late);
    }

    #[test]
    fn moves_at_segment_speed() {
        let cfg = TrajectoryConfig {
            d_min_m: 100.0,
            d_max_m: 100_000.0,
            speed_min_mps: 10.0,
            speed_max_mps: 10.0,
            segment_s: 10.0,
        };
        let mut t = Trajectory::new(&cfg, ChaCha8Rng::seed_from_u64(1));
        let d0 = t.distance_m(0);
        let d1 = t.distance_m(1_000);
        assert!(((d1 - d0).abs() - 10.0).abs() < 1e-9);
        assert_eq!(t.speed_mps(12_345), 10.0);
    }
}
