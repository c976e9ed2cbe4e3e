//! Latency of one inference at a given clock against a real-time budget.

/// Default accelerator clock.
pub const DEFAULT_CLOCK_HZ: f64 = 10_000_000.0;
/// Time available after the last sample of a window arrives.
pub const DEFAULT_BUDGET_MS: f64 = 3.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub cycles: usize,
    pub clock_hz: f64,
    pub latency_ms: f64,
    pub budget_ms: f64,
    /// `budget / latency`; above 1 means the budget is met.
    pub margin: f64,
}

impl TimingReport {
    pub fn new(cycles: usize, clock_hz: f64, budget_ms: f64) -> Self {
        let latency_ms = cycles as f64 * 1e3 / clock_hz;
        Self {
            cycles,
            clock_hz,
            latency_ms,
            budget_ms,
            margin: budget_ms / latency_ms,
        }
    }

    pub fn meets_budget(&self) -> bool {
        self.latency_ms <= self.budget_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let r = TimingReport::new(9624, DEFAULT_CLOCK_HZ, DEFAULT_BUDGET_MS);
        assert_eq!(r.latency_ms, 0.9624);
        assert_eq!(alloc::format!("{:.2}", r.margin), "4.05");
        assert!(r.meets_budget());
        assert_eq!(TimingReport::new(9624, 20e6, DEFAULT_BUDGET_MS).latency_ms, 0.4812);
    }
}
