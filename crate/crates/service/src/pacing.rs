//! Wall-clock pacing of live sessions.
//!
//! [`Pacer`] is a pure function of elapsed time: the number of ticks owed
//! is recomputed from the total elapsed time instead of being accumulated,
//! so rounding never builds up into drift.

use std::time::Duration;

use drillsim_core::engine::TICKS_PER_SECOND;

#[derive(Clone, Debug)]
pub struct Pacer {
    time_scale: f64,
    /// Running time before the current stretch (pauses excluded).
    banked: Duration,
    /// Clock reading when the current stretch started; `None` while paused.
    running_since: Option<Duration>,
    issued: u64,
}

impl Pacer {
    /// `time_scale` simulated seconds per wall second; `now` is any
    /// monotonic clock reading.
    pub fn new(time_scale: f64, now: Duration) -> Self {
        assert!(time_scale.is_finite() && time_scale > 0.0, "time scale must be positive");
        Self {
            time_scale,
            banked: Duration::ZERO,
            running_since: Some(now),
            issued: 0,
        }
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn is_paused(&self) -> bool {
        self.running_since.is_none()
    }

    fn running(&self, now: Duration) -> Duration {
        self.banked + self.running_since.map_or(Duration::ZERO, |s| now.saturating_sub(s))
    }

    /// Total ticks that should have been simulated by `now`.
    pub fn target(&self, now: Duration) -> u64 {
        (self.running(now).as_secs_f64() * self.time_scale * TICKS_PER_SECOND as f64 + 1e-9).floor() as u64
    }

    /// Ticks to simulate now; marks them as issued.
    pub fn due(&mut self, now: Duration) -> u64 {
        let n = self.target(now).saturating_sub(self.issued);
        self.issued += n;
        n
    }

    /// Clock reading at which the next tick falls due.
    pub fn next_deadline(&self, now: Duration) -> Duration {
        let Some(since) = self.running_since else {
            return now;
        };
        let tick_wall = 1.0 / (self.time_scale * TICKS_PER_SECOND as f64);
        let needed = Duration::from_secs_f64((self.issued + 1) as f64 * tick_wall);
        since + needed.saturating_sub(self.banked)
    }

    pub fn pause(&mut self, now: Duration) {
        if let Some(since) = self.running_since.take() {
            self.banked += now.saturating_sub(since);
        }
    }

    pub fn resume(&mut self, now: Duration) {
        if self.running_since.is_none() {
            self.running_since = Some(now);
        }
    }
}
