//! Break-time detection between aligned observable series.

use std::fmt;

use anyhow::{bail, Result};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const DEFAULT_BREAK_THRESHOLD: f64 = 0.10;
const NOT_REACHED: &str = "not-reached";

/// When two series part ways. Serialised as a number or `"not-reached"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BreakTime {
    At(f64),
    NotReached,
}

impl BreakTime {
    pub fn time(self) -> Option<f64> {
        match self {
            BreakTime::At(t) => Some(t),
            BreakTime::NotReached => None,
        }
    }

    /// Ordering key where "never" sorts after every time.
    pub fn or_infinity(self) -> f64 {
        self.time().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for BreakTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BreakTime::At(t) => s.serialize_f64(*t),
            BreakTime::NotReached => s.serialize_str(NOT_REACHED),
        }
    }
}

impl<'de> Deserialize<'de> for BreakTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BreakTime;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a time or \"{NOT_REACHED}\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<BreakTime, E> {
                Ok(BreakTime::At(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<BreakTime, E> {
                Ok(BreakTime::At(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<BreakTime, E> {
                Ok(BreakTime::At(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<BreakTime, E> {
                if v == NOT_REACHED {
                    Ok(BreakTime::NotReached)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn check_aligned(times_a: &[f64], times_b: &[f64]) -> Result<()> {
    if times_a.len() != times_b.len() {
        bail!("series lengths differ: {} vs {}", times_a.len(), times_b.len());
    }
    for (k, (x, y)) in times_a.iter().zip(times_b).enumerate() {
        if (x - y).abs() > 1e-12 * x.abs().max(1.0) {
            bail!("time grids differ at sample {k}: {x} vs {y}");
        }
    }
    Ok(())
}

/// First sample time where `|a − b| > threshold·RMS(b)`, RMS over the whole
/// reference series `b`.
pub fn break_time(times_a: &[f64], a: &[f64], times_b: &[f64], b: &[f64], threshold: f64) -> Result<BreakTime> {
    check_aligned(times_a, times_b)?;
    if a.len() != times_a.len() || b.len() != times_b.len() {
        bail!("values and times have different lengths");
    }
    if !(threshold >= 0.0) {
        bail!("threshold must be non-negative, got {threshold}");
    }
    let level = threshold * rms(b);
    Ok(times_a
        .iter()
        .zip(a.iter().zip(b))
        .find(|(_, (x, y))| (*x - *y).abs() > level)
        .map_or(BreakTime::NotReached, |(t, _)| BreakTime::At(*t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakReport {
    pub observable: String,
    pub model: String,
    /// Departure from the exact series.
    pub t_break_exact: BreakTime,
    /// Departure from the other approximation.
    pub t_break_mutual: BreakTime,
    pub threshold: f64,
    /// RMS of the exact series over the compared window.
    pub rms_ref: f64,
    /// Last compared time.
    pub window_end: f64,
    /// The exact run stopped early; breaks are over the shortened window.
    pub partial: bool,
}
