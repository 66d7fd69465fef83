//! One-sided magnitude spectra of uniformly sampled signals and peak extraction.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::meanfield::Trajectory;

/// Zero-padding factor applied before the transform.
const PAD: usize = 4;

/// Lowest bins skipped when searching peaks, in units of the unpadded resolution.
const DC_GUARD_BINS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Angular frequencies.
    pub omegas: Vec<f64>,
    /// Window-normalized one-sided magnitudes; a sinusoid of amplitude `a` peaks near `a`.
    pub magnitudes: Vec<f64>,
    /// Angular resolution of the unpadded record.
    pub resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Interpolated angular frequency.
    pub omega: f64,
    pub magnitude: f64,
}

/// Four-term Blackman-Harris window; sidelobes stay below -92 dB.
fn window(n: usize) -> Vec<f64> {
    const A: [f64; 4] = [0.35875, 0.48829, 0.14128, 0.01168];
    let d = n.max(2) as f64 - 1.0;
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / d;
            A[0] - A[1] * x.cos() + A[2] * (2.0 * x).cos() - A[3] * (3.0 * x).cos()
        })
        .collect()
}

/// Spectrum of a uniformly sampled real signal with its mean removed.
pub fn spectrum_of(signal: &[f64], dt: f64) -> Result<Spectrum> {
    let n = signal.len();
    if n < 8 || !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "spectrum needs at least 8 uniform samples, got {n}"
        )));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let w = window(n);
    let norm: f64 = w.iter().sum();
    let len = (PAD * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    for i in 0..n {
        buf[i] = Complex::new((signal[i] - mean) * w[i], 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2 + 1;
    let dw = 2.0 * PI / (len as f64 * dt);
    Ok(Spectrum {
        omegas: (0..half).map(|k| k as f64 * dw).collect(),
        magnitudes: buf[..half].iter().map(|c| 2.0 * c.norm() / norm).collect(),
        resolution: 2.0 * PI / (n as f64 * dt),
    })
}

/// Spectrum of component `component` over the trailing `tail_fraction` of a trajectory.
pub fn fourier_spectrum(
    traj: &Trajectory,
    component: usize,
    tail_fraction: f64,
) -> Result<Spectrum> {
    traj.check_uniform()?;
    if component >= 6 {
        return Err(Error::param("component", "must be in 0..6"));
    }
    let start = traj.tail_start(tail_fraction);
    let signal: Vec<f64> = traj.states[start..].iter().map(|m| m[component]).collect();
    spectrum_of(&signal, traj.dt())
}

impl Spectrum {
    /// Local maxima above `rel_threshold` times the dominant magnitude, strongest first.
    pub fn peaks(&self, rel_threshold: f64) -> Vec<Peak> {
        let m = &self.magnitudes;
        let dw = self.omegas.get(1).copied().unwrap_or(0.0);
        if m.len() < 3 || dw == 0.0 {
            return Vec::new();
        }
        let first = ((DC_GUARD_BINS * self.resolution / dw).ceil() as usize).max(1);
        let top = m[first.min(m.len() - 1)..]
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        if !(top > 0.0) {
            return Vec::new();
        }
        let mut out = Vec::new();
        for k in first.max(1)..m.len() - 1 {
            if m[k] > m[k - 1] && m[k] >= m[k + 1] && m[k] >= rel_threshold * top {
                // log-parabolic interpolation of the peak position
                let (a, b, c) = (
                    m[k - 1].max(1e-300).ln(),
                    m[k].ln(),
                    m[k + 1].max(1e-300).ln(),
                );
                let den = a - 2.0 * b + c;
                let shift = if den.abs() > 0.0 {
                    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                let mag = (b - 0.25 * (a - c) * shift).exp();
                out.push(Peak {
                    omega: (k as f64 + shift) * dw,
                    magnitude: mag,
                });
            }
        }
        out.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_gives_single_peak() {
        let dt = 0.05;
        let w0 = 1.7;
        let s: Vec<f64> = (0..8000)
            .map(|i| 0.3 * (w0 * i as f64 * dt).sin() + 2.0)
            .collect();
        let sp = spectrum_of(&s, dt).unwrap();
        let peaks = sp.peaks(0.01);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((peaks[0].omega - w0).abs() < sp.resolution);
        assert!((peaks[0].magnitude - 0.3).abs() < 0.01);
    }

    #[test]
    fn constant_has_no_peaks() {
        let sp = spectrum_of(&[1.5; 1000], 0.1).unwrap();
        assert!(sp.peaks(0.01).is_empty());
    }

    #[test]
    fn harmonic_frequencies_are_resolved() {
        let dt = 0.05;
        let w0 = 0.93;
        let s: Vec<f64> = (0..10000)
            .map(|i| {
                let t = i as f64 * dt;
                (w0 * t).sin() + 0.2 * (2.0 * w0 * t + 0.3).sin() + 0.05 * (3.0 * w0 * t).cos()
            })
            .collect();
        let mut peaks = spectrum_of(&s, dt).unwrap().peaks(0.01);
        peaks.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        assert_eq!(peaks.len(), 3);
        for (n, p) in peaks.iter().enumerate() {
            assert!((p.omega / w0 - (n + 1) as f64).abs() < 1e-4, "{p:?}");
        }
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(spectrum_of(&[1.0, 2.0], 0.1).is_err());
    }
}
