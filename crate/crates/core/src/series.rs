use alloc::string::String;
use alloc::vec::Vec;

/// A uniformly sampled real-valued series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
    pub timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self {
            values,
            sample_rate_hz,
            timestamps: None,
        }
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Self {
        self.timestamps = Some(timestamps);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values `[start, end)`, timestamps sliced alongside.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            values: self.values[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
        }
    }
}
