use std::collections::VecDeque;

use super::ActuatorVector;

/// FIFO realizing the camera-to-actuator latency. The delay is rounded up
/// to whole sample periods, so 960 µs at 1 ms sampling is one sample.
#[derive(Debug, Clone)]
pub struct DelayLine {
    delay: f64,
    sample_period: f64,
    delay_samples: u64,
    queue: VecDeque<(u64, ActuatorVector)>,
}

impl DelayLine {
    pub fn new(delay: f64, sample_period: f64) -> Self {
        assert!(sample_period > 0.0, "sample period must be positive");
        assert!(delay >= 0.0, "delay must be nonnegative");
        // Tolerate representation error so an exact multiple is not bumped up.
        let delay_samples = (delay / sample_period - 1e-9).ceil().max(0.0) as u64;
        Self {
            delay,
            sample_period,
            delay_samples,
            queue: VecDeque::new(),
        }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn delay_samples(&self) -> u64 {
        self.delay_samples
    }

    fn index_of(&self, t: f64) -> u64 {
        (t / self.sample_period).round().max(0.0) as u64
    }

    /// Enqueues a command issued at time `t`. Returns its effective time.
    pub fn push(&mut self, t: f64, cmd: ActuatorVector) -> f64 {
        let due = self.index_of(t) + self.delay_samples;
        debug_assert!(self.queue.back().is_none_or(|(d, _)| *d <= due));
        self.queue.push_back((due, cmd));
        due as f64 * self.sample_period
    }

    /// Dequeues every command due at or before time `t`, oldest first.
    pub fn pop_due(&mut self, t: f64) -> Vec<(f64, ActuatorVector)> {
        let now = self.index_of(t);
        let mut out = Vec::new();
        while let Some(&(due, cmd)) = self.queue.front() {
            if due > now {
                break;
            }
            self.queue.pop_front();
            out.push((due as f64 * self.sample_period, cmd));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
