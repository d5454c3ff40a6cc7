use thiserror::Error;

/// A closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid time span [{start}, {end}]")]
pub struct SpanError {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    /// Checked constructor: requires `0 <= start <= end`, both finite.
    pub fn new(start: f64, end: f64) -> Result<Self, SpanError> {
        if start.is_finite() && end.is_finite() && 0.0 <= start && start <= end {
            Ok(Self { start, end })
        } else {
            Err(SpanError { start, end })
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite() && self.end.is_finite() && 0.0 <= self.start && self.start <= self.end
    }
}
