//! Injectable clock so prompts and audit records carry testable timestamps.
//!
//! All timestamps are UTC, truncated to millisecond precision. The `{time}`
//! template binding is produced from the same clock via [`format_time_binding`].

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Timelike, Utc};

pub trait Clock: Send + Sync {
    /// Current UTC time, truncated to millisecond precision.
    fn now(&self) -> DateTime<Utc>;
}

/// Shared trait-object handle used throughout the pipeline.
pub type SharedClock = Arc<dyn Clock>;

pub fn truncate_millis(dt: DateTime<Utc>) -> DateTime<Utc> {
    let nanos = dt.nanosecond();
    dt.with_nanosecond(nanos - nanos % 1_000_000)
        .expect("truncation keeps nanoseconds in range")
}

/// Wall clock.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        truncate_millis(Utc::now())
    }
}

/// Always returns the same instant. Golden tests fix `{time}` with this.
#[derive(Debug, Clone)]
pub struct FixedClock(DateTime<Utc>);

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(truncate_millis(at))
    }

    /// 2026-01-02 03:04:05 UTC, an arbitrary fixed instant for tests.
    pub fn default_test_time() -> Self {
        Self::new(Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Advances a fixed number of milliseconds on every `now()` call, starting
/// from a fixed origin. Gives runs deterministic, strictly increasing
/// timestamps and therefore deterministic latencies.
#[derive(Debug)]
pub struct StepClock {
    origin: DateTime<Utc>,
    step_ms: i64,
    ticks: AtomicI64,
}

impl StepClock {
    pub fn new(origin: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            origin: truncate_millis(origin),
            step_ms,
            ticks: AtomicI64::new(0),
        }
    }

    pub fn starting_at_default(step_ms: i64) -> Self {
        Self::new(Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap(), step_ms)
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        let tick = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.origin + chrono::Duration::milliseconds(tick * self.step_ms)
    }
}

/// Renders an instant for the `{time}` placeholder: `YYYY-MM-DD HH:MM:SS UTC`.
pub fn format_time_binding(dt: DateTime<Utc>) -> String {
    dt.format("%Y-%m-%d %H:%M:%S UTC").to_string()
}

/// Audit-trail timestamp format: RFC 3339 with millisecond precision.
pub fn format_audit_timestamp(dt: DateTime<Utc>) -> String {
    dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

pub fn parse_audit_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| truncate_millis(dt.with_timezone(&Utc)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_clock_is_millisecond_truncated() {
        let t = SystemClock.now();
        assert_eq!(t.nanosecond() % 1_000_000, 0);
    }

    #[test]
    fn step_clock_advances_deterministically() {
        let clock = StepClock::starting_at_default(10);
        let a = clock.now();
        let b = clock.now();
        assert_eq!(b - a, chrono::Duration::milliseconds(10));
    }

    #[test]
    fn time_binding_format() {
        let clock = FixedClock::default_test_time();
        assert_eq!(format_time_binding(clock.now()), "2026-01-02 03:04:05 UTC");
    }

    #[test]
    fn audit_timestamp_round_trips() {
        let t = SystemClock.now();
        let s = format_audit_timestamp(t);
        assert_eq!(parse_audit_timestamp(&s), Some(t));
    }
}
