use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tone::Tone;

/// Control rate of [`tone_contour`] trajectories.
pub const CONTROL_RATE_HZ: f64 = 200.0;

/// Unscaled f0 templates in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToneAnchors {
    pub t1: f64,
    pub t2: [f64; 2],
    /// Start, bottom, end.
    pub t3: [f64; 3],
    /// Position of the T3 bottom as a fraction of the duration.
    pub t3_dip_at: f64,
    pub t4: [f64; 2],
    /// T5 falls from the previous final's end value to this fraction of it.
    pub t5_decay: f64,
    /// T5 start when there is no previous final.
    pub t5_default: f64,
    pub min_hz: f64,
    pub max_hz: f64,
}

impl Default for ToneAnchors {
    fn default() -> Self {
        Self {
            t1: 280.0,
            t2: [180.0, 280.0],
            t3: [200.0, 140.0, 220.0],
            t3_dip_at: 0.4,
            t4: [300.0, 160.0],
            t5_decay: 0.75,
            t5_default: 200.0,
            min_hz: 80.0,
            max_hz: 340.0,
        }
    }
}

impl ToneAnchors {
    pub fn validate(&self) -> Result<()> {
        let all = [self.t1, self.t2[0], self.t2[1], self.t3[0], self.t3[1], self.t3[2], self.t4[0], self.t4[1]];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.t5_default > 0.0) {
            return Err(Error::InvalidConfig("f0 anchors must be positive".into()));
        }
        if !(self.t3_dip_at > 0.0 && self.t3_dip_at < 1.0) || !(self.t5_decay > 0.0) {
            return Err(Error::InvalidConfig("t3_dip_at must be in (0, 1) and t5_decay positive".into()));
        }
        if !(self.min_hz > 0.0 && self.min_hz < self.max_hz) {
            return Err(Error::InvalidConfig("f0 clamp range is empty".into()));
        }
        Ok(())
    }

    /// Unscaled template value at `frac ∈ [0, 1]` of the syllable.
    pub fn template(&self, tone: Tone, frac: f64, prev_end: Option<f64>) -> Result<f64> {
        let u = frac.clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64, x: f64| a + (b - a) * x;
        Ok(match tone {
            Tone::T0 => return Err(Error::NotVoiced("initials have no pitch contour".into())),
            Tone::T1 => self.t1,
            Tone::T2 => lerp(self.t2[0], self.t2[1], u),
            Tone::T3 => {
                let d = self.t3_dip_at;
                if u <= d {
                    lerp(self.t3[0], self.t3[1], u / d)
                } else {
                    lerp(self.t3[1], self.t3[2], (u - d) / (1.0 - d))
                }
            }
            Tone::T4 => lerp(self.t4[0], self.t4[1], u),
            Tone::T5 => {
                let p = prev_end.unwrap_or(self.t5_default);
                lerp(p, p * self.t5_decay, u)
            }
        })
    }

    /// Unscaled end value, the `prev_end` seen by a following T5.
    pub fn end_value(&self, tone: Tone, prev_end: Option<f64>) -> Result<f64> {
        self.template(tone, 1.0, prev_end)
    }

    pub fn scaled(&self, tone: Tone, frac: f64, prev_end: Option<f64>, scale: f64) -> Result<f64> {
        Ok((self.template(tone, frac, prev_end)? * scale).clamp(self.min_hz, self.max_hz))
    }
}

/// f0 trajectory of one final sampled at [`CONTROL_RATE_HZ`], endpoints
/// included. `prev_end_f0` is the unscaled end of the preceding final.
pub fn tone_contour(
    anchors: &ToneAnchors,
    tone: Tone,
    dur_s: f64,
    prev_end_f0: Option<f64>,
    f0_scale: f64,
) -> Result<Vec<f64>> {
    if !(dur_s > 0.0) || !(f0_scale > 0.0) {
        return Err(Error::InvalidConfig(format!("duration {dur_s} and scale {f0_scale} must be positive")));
    }
    let n = ((dur_s * CONTROL_RATE_HZ).round() as usize + 1).max(2);
    (0..n)
        .map(|k| anchors.scaled(tone, k as f64 / (n - 1) as f64, prev_end_f0, f0_scale))
        .collect()
}
