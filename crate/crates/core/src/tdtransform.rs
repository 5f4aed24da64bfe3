//! Frequency response to pulse train, and arrival picking.
//!
//! The sampled half spectrum `H_m` (m = 0..M) is windowed, completed with its
//! Hermitian mirror into a length-2M spectrum and inverse transformed. With
//! `dt = T / 2M` and `T = 2π / dω` the output is scaled by `1 / (2M dt)` so a
//! flat unit spectrum integrates to one. Responses computed at a damped
//! frequency `ω - iσ` are multiplied back by `exp(σ t)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdsolver::{FrequencyGrid, FrequencyResponse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    /// `0.5 (1 + cos(π m / M))` across the positive band.
    RaisedCosine,
}

impl Window {
    pub fn weight(self, m: usize, bins: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::RaisedCosine => 0.5 * (1.0 + (PI * m as f64 / bins as f64).cos()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub delta_omega: f64,
    pub bins: usize,
    pub window: Window,
    /// Imaginary frequency offset σ used to suppress wrap-around of arrivals
    /// later than the time window. Zero evaluates on the real axis.
    #[serde(default)]
    pub damping: f64,
}

impl SweepConfig {
    /// Default sweep: T = 10, M = 4096, raised cosine, wrap-around damped
    /// by `exp(-σ T) = 1e-4`.
    pub fn standard() -> Self {
        let delta_omega = 2.0 * PI / 10.0;
        SweepConfig {
            delta_omega,
            bins: 4096,
            window: Window::RaisedCosine,
            damping: -WRAP_SUPPRESSION.ln() / 10.0,
        }
    }

    pub fn time_window(&self) -> f64 {
        2.0 * PI / self.delta_omega
    }

    pub fn time_step(&self) -> f64 {
        self.time_window() / (2 * self.bins) as f64
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid {
            delta_omega: self.delta_omega,
            bins: self.bins,
            damping: self.damping,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.grid().check()
    }

    /// Peak height of a lossless unit arrival after windowing, with the
    /// zero-frequency bin treated as the solver treats it.
    pub fn pulse_gain(&self) -> f64 {
        let sum: f64 = (1..self.bins)
            .map(|m| self.window.weight(m, self.bins))
            .sum();
        let dc = if self.damping > 0.0 {
            self.window.weight(0, self.bins)
        } else {
            0.0
        };
        (dc + 2.0 * sum) / (2 * self.bins) as f64 / self.time_step()
    }
}

/// Relative weight left on an arrival that wraps once around the time window.
pub const WRAP_SUPPRESSION: f64 = 1e-4;

/// Real pulse train on `t_n = n dt`, n = 0..2M.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeResponse {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Windowed half spectrum, kept for band-limited evaluation between samples.
    spectrum: Option<Spectrum>,
}

#[derive(Clone, Debug, PartialEq)]
struct Spectrum {
    delta_omega: f64,
    damping: f64,
    half: Vec<Complex64>,
}

impl TimeResponse {
    /// A bare sample series with no spectrum attached.
    pub fn from_samples(dt: f64, values: Vec<f64>) -> Self {
        TimeResponse {
            dt,
            values,
            spectrum: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|n| self.time(n))
    }

    /// Band-limited value at an arbitrary time, falling back to the nearest
    /// sample when no spectrum is attached.
    pub fn value_at(&self, t: f64) -> f64 {
        match &self.spectrum {
            Some(sp) => {
                let mut acc = sp.half[0].re;
                let step = Complex64::new(0.0, sp.delta_omega * t).exp();
                let mut rot = step;
                for x in &sp.half[1..] {
                    acc += 2.0 * (x * rot).re;
                    rot *= step;
                }
                acc * sp.delta_omega / (2.0 * PI) * (sp.damping * t).exp()
            }
            None => {
                let n = (t / self.dt)
                    .round()
                    .clamp(0.0, (self.len().max(1) - 1) as f64);
                self.values[n as usize]
            }
        }
    }

    /// Pointwise difference; both series must share a grid.
    pub fn difference(&self, other: &TimeResponse) -> Result<TimeResponse> {
        if self.len() != other.len() || self.dt != other.dt {
            return Err(Error::Usage(format!(
                "time grids differ ({} samples at dt {} vs {} at dt {})",
                self.len(),
                self.dt,
                other.len(),
                other.dt
            )));
        }
        let spectrum = match (&self.spectrum, &other.spectrum) {
            (Some(a), Some(b)) if a.delta_omega == b.delta_omega && a.damping == b.damping => {
                Some(Spectrum {
                    delta_omega: a.delta_omega,
                    damping: a.damping,
                    half: a.half.iter().zip(&b.half).map(|(x, y)| x - y).collect(),
                })
            }
            _ => None,
        };
        Ok(TimeResponse {
            dt: self.dt,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            spectrum,
        })
    }
}

fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(len)
}

/// Build the Hermitian spectrum and inverse transform it. Returns the real
/// series and the largest imaginary residue before it was dropped.
pub fn to_time_checked(
    response: &FrequencyResponse,
    config: &SweepConfig,
) -> Result<(TimeResponse, f64)> {
    config.check()?;
    if response.grid != config.grid() || response.values.len() != config.bins {
        return Err(Error::Usage(format!(
            "frequency grid ({:?}, {} values) does not match sweep ({:?})",
            response.grid,
            response.values.len(),
            config.grid()
        )));
    }
    let m_bins = config.bins;
    let n = 2 * m_bins;
    let half: Vec<Complex64> = response
        .values
        .iter()
        .enumerate()
        .map(|(m, h)| h * config.window.weight(m, m_bins))
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..m_bins].copy_from_slice(&half);
    for m in 1..m_bins {
        buf[n - m] = half[m].conj();
    }
    inverse_plan(n).process(&mut buf);

    let dt = config.time_step();
    let scale = 1.0 / (n as f64 * dt);
    let mut residue = 0.0f64;
    let values = buf
        .iter()
        .enumerate()
        .map(|(i, x)| {
            residue = residue.max(x.im.abs() * scale);
            x.re * scale * (config.damping * i as f64 * dt).exp()
        })
        .collect();
    Ok((
        TimeResponse {
            dt,
            values,
            spectrum: Some(Spectrum {
                delta_omega: config.delta_omega,
                damping: config.damping,
                half,
            }),
        },
        residue,
    ))
}

pub fn to_time(response: &FrequencyResponse, config: &SweepConfig) -> Result<TimeResponse> {
    to_time_checked(response, config).map(|(tr, _)| tr)
}

/// Magnitude of the analytic signal. With a spectrum attached this is exact:
/// the positive-frequency half is transformed on its own. A bare series is
/// zero-padded to twice its length first, so that a response still ringing
/// at the end of the window does not wrap onto its own beginning.
pub fn envelope(tr: &TimeResponse) -> Vec<f64> {
    let len = tr.len();
    if len == 0 {
        return Vec::new();
    }
    if let Some(sp) = tr.spectrum.as_ref().filter(|sp| 2 * sp.half.len() == len) {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        buf[0] = sp.half[0];
        for (slot, x) in buf[1..sp.half.len()].iter_mut().zip(&sp.half[1..]) {
            *slot = 2.0 * x;
        }
        inverse_plan(len).process(&mut buf);
        let scale = sp.delta_omega / (2.0 * PI);
        return buf
            .iter()
            .enumerate()
            .map(|(n, x)| x.norm() * scale * (sp.damping * tr.time(n)).exp())
            .collect();
    }
    let n = 2 * len;
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = tr
        .values
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat_n(Complex64::new(0.0, 0.0), len))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, x) in buf.iter_mut().enumerate() {
        if k == 0 || k == len {
            continue;
        } else if k < len {
            *x *= 2.0;
        } else {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf[..len].iter().map(|x| x.norm() / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: f64,
    /// Signed response at the refined peak.
    pub amplitude: f64,
    /// Envelope height above the higher of the two saddles separating this
    /// peak from taller neighbours.
    pub prominence: f64,
}

/// Local maxima of the envelope above `relative_threshold` times its global
/// maximum, refined by a three-point parabola and sorted by time.
pub fn find_arrivals(tr: &TimeResponse, relative_threshold: f64) -> Result<Vec<Arrival>> {
    if !(relative_threshold > 0.0 && relative_threshold < 1.0) {
        return Err(Error::Domain(format!(
            "relative threshold must lie in (0, 1), got {relative_threshold}"
        )));
    }
    let env = envelope(tr);
    let global = env.iter().copied().fold(0.0f64, f64::max);
    if global == 0.0 || env.len() < 3 {
        return Ok(Vec::new());
    }
    let floor = relative_threshold * global;
    let mut out = Vec::new();
    for i in 1..env.len() - 1 {
        let (l, c, r) = (env[i - 1], env[i], env[i + 1]);
        if !(c > l && c >= r && c > floor) {
            continue;
        }
        let denom = l - 2.0 * c + r;
        let delta = if denom < 0.0 {
            0.5 * (l - r) / denom
        } else {
            0.0
        };
        let time = (i as f64 + delta) * tr.dt;
        let amplitude = tr.value_at(time);
        if amplitude == 0.0 {
            continue;
        }
        out.push(Arrival {
            time,
            amplitude,
            prominence: prominence(&env, i),
        });
    }
    Ok(out)
}

fn prominence(env: &[f64], i: usize) -> f64 {
    let h = env[i];
    let mut left_min = h;
    for &v in env[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &env[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
