//! Smoothed RTT and retransmission timeout (RFC 6298 recurrence).

use crate::util::{Micros, MILLIS, SECONDS};

pub const RTO_MIN: Micros = 200 * MILLIS;
pub const RTO_MAX: Micros = 60 * SECONDS;
pub const RTO_INITIAL: Micros = 1 * SECONDS;

#[derive(Debug, Clone)]
pub struct RttEstimator {
    srtt: Option<Micros>,
    rttvar: Micros,
    rto: Micros,
    min: Micros,
}

impl Default for RttEstimator {
    fn default() -> Self {
        Self::with_min(RTO_MIN)
    }
}

impl RttEstimator {
    /// An estimator with a custom lower clamp on the timeout.
    pub fn with_min(min: Micros) -> Self {
        Self {
            srtt: None,
            rttvar: 0,
            rto: RTO_INITIAL.max(min),
            min,
        }
    }

    /// First sample: srtt = s, rttvar = s/2. Afterwards:
    /// rttvar = 3/4·rttvar + 1/4·|srtt − s|, srtt = 7/8·srtt + 1/8·s.
    /// rto = clamp(srtt + 4·rttvar, rto_min, 60 s).
    pub fn update(&mut self, sample: Micros) {
        debug_assert!(sample > 0);
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2;
            }
            Some(srtt) => {
                let err = srtt.abs_diff(sample);
                self.rttvar = (3 * self.rttvar) / 4 + err / 4;
                self.srtt = Some((7 * srtt) / 8 + sample / 8);
            }
        }
        self.rto = (self.srtt.unwrap() + 4 * self.rttvar).clamp(self.min, RTO_MAX);
    }

    pub fn rto(&self) -> Micros {
        self.rto
    }

    /// Exponential backoff after a retransmission timeout.
    pub fn backoff(&mut self) {
        self.rto = (self.rto * 2).min(RTO_MAX);
    }

    /// Drops accumulated backoff once forward progress is seen, restoring
    /// the timeout computed from the current estimate. A no-op before the
    /// first sample.
    pub fn clear_backoff(&mut self) {
        if let Some(srtt) = self.srtt {
            self.rto = (srtt + 4 * self.rttvar).clamp(self.min, RTO_MAX);
        }
    }

    pub fn srtt(&self) -> Option<Micros> {
        self.srtt
    }

    pub fn rttvar(&self) -> Micros {
        self.rttvar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sample_initialization() {
        let mut r = RttEstimator::default();
        r.update(100 * MILLIS);
        assert_eq!(r.srtt(), Some(100 * MILLIS));
        assert_eq!(r.rttvar(), 50 * MILLIS);
        assert_eq!(r.rto(), 300 * MILLIS);
    }

    #[test]
    fn constant_samples_converge() {
        let mut r = RttEstimator::default();
        let s = 500 * MILLIS;
        for _ in 0..200 {
            r.update(s);
        }
        let srtt = r.srtt().unwrap();
        assert!(srtt.abs_diff(s) < MILLIS, "srtt {} far from {}", srtt, s);
        assert!(r.rttvar() < MILLIS);
        assert!(r.rto() >= s && r.rto() < s + 10 * MILLIS);
    }

    #[test]
    fn small_constant_samples_hit_min_clamp() {
        let mut r = RttEstimator::default();
        for _ in 0..300 {
            r.update(10 * MILLIS);
        }
        assert_eq!(r.rto(), RTO_MIN);
    }

    // Alternating samples checked against a direct evaluation of the
    // recurrence, computed independently in this test.
    #[test]
    fn alternating_samples_match_recurrence() {
        let mut r = RttEstimator::default();
        let samples: Vec<Micros> = (0..20)
            .map(|i| if i % 2 == 0 { 100 * MILLIS } else { 200 * MILLIS })
            .collect();
        let mut srtt = 0u64;
        let mut rttvar = 0u64;
        for (i, &s) in samples.iter().enumerate() {
            if i == 0 {
                srtt = s;
                rttvar = s / 2;
            } else {
                rttvar = (3 * rttvar) / 4 + srtt.abs_diff(s) / 4;
                srtt = (7 * srtt) / 8 + s / 8;
            }
            r.update(s);
            assert_eq!(r.srtt(), Some(srtt), "step {i}");
            assert_eq!(r.rttvar(), rttvar, "step {i}");
            assert_eq!(r.rto(), (srtt + 4 * rttvar).clamp(RTO_MIN, RTO_MAX));
        }
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let mut r = RttEstimator::default();
        r.update(100 * MILLIS); // rto 300ms
        r.backoff();
        assert_eq!(r.rto(), 600 * MILLIS);
        for _ in 0..20 {
            r.backoff();
        }
        assert_eq!(r.rto(), RTO_MAX);
    }
}
