//! Injectable time source so ledger timestamps can be pinned for
//! reproducible runs.

use chrono::{DateTime, SecondsFormat, Utc};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// Current time as `YYYY-MM-DDTHH:MM:SSZ`.
    pub fn now_iso(&self) -> String {
        let t = match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    /// Parse a clock flag: `system` or `fixed:<RFC 3339 timestamp>`.
    pub fn parse(s: &str) -> Result<Clock, String> {
        if s == "system" {
            return Ok(Clock::System);
        }
        let Some(ts) = s.strip_prefix("fixed:") else {
            return Err(format!("invalid clock {s:?}: expected \"system\" or \"fixed:<timestamp>\""));
        };
        ts.parse::<DateTime<Utc>>()
            .map(Clock::Fixed)
            .map_err(|e| format!("invalid fixed clock {ts:?}: {e}"))
    }
}
