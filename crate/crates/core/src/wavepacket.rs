//! Sampled single-photon wavepackets on a uniform time grid.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, C64};

/// Analytic origin of a packet, kept so closed-form references can be attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketShape {
    Numeric,
    Gaussian { tau: f64, t0: f64 },
    ConstantCoupling { j_tilde: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Wavepacket {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<C64>,
    pub shape: PacketShape,
}

impl Wavepacket {
    pub fn new(t0: f64, dt: f64, samples: Vec<C64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return invalid(format!("wavepacket grid needs finite t0 and dt > 0 (dt = {dt})"));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("wavepacket samples must be finite");
        }
        Ok(Wavepacket { t0, dt, samples, shape: PacketShape::Numeric })
    }

    pub fn with_shape(mut self, shape: PacketShape) -> Self {
        self.shape = shape;
        self
    }

    /// Normalized Gaussian e^{−(t−t0)²/(2τ²)}/(πτ²)^{1/4} on [0, duration].
    pub fn gaussian(tau: f64, t0: f64, dt: f64, duration: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return invalid("Gaussian width must be > 0");
        }
        let n = (duration / dt).round() as usize + 1;
        let norm = (PI * tau * tau).powf(-0.25);
        let samples = (0..n)
            .map(|k| {
                let u = (k as f64 * dt - t0) / tau;
                c(norm * (-0.5 * u * u).exp(), 0.0)
            })
            .collect();
        Ok(Wavepacket::new(0.0, dt, samples)?.with_shape(PacketShape::Gaussian { tau, t0 }))
    }

    /// Closed-form packet emitted from −i|A⟩ under a constant exchange J̃ (Δ = −4J̃, δ = 8J̃).
    pub fn constant_coupling(j_tilde: f64, gamma0: f64, dt: f64, duration: f64) -> Result<Self> {
        let n = (duration / dt).round() as usize + 1;
        let samples = (0..n)
            .map(|k| c((3.0 * gamma0).sqrt() * constant_coupling_b(j_tilde, gamma0, k as f64 * dt), 0.0))
            .collect();
        Ok(Wavepacket::new(0.0, dt, samples)?.with_shape(PacketShape::ConstantCoupling { j_tilde }))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }

    /// Trapezoidal ∫|ψ|² dt.
    pub fn norm(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.samples.iter().map(|z| z.norm_sqr()).sum();
        self.dt * (inner - 0.5 * (self.samples[0].norm_sqr() + self.samples[n - 1].norm_sqr()))
    }

    pub fn normalized(&self) -> Result<Self> {
        let nrm = self.norm();
        if !(nrm > 0.0) {
            return invalid("cannot normalize an empty wavepacket");
        }
        let s = 1.0 / nrm.sqrt();
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z *= s);
        Ok(out)
    }

    fn check_grid(&self, other: &Wavepacket) -> Result<()> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt || (self.t0 - other.t0).abs() > 1e-9 * self.dt.max(1.0) {
            return invalid("wavepackets live on different time grids");
        }
        Ok(())
    }

    /// ∫ψ*_self ψ_other dt on a shared grid; samples beyond either packet count as zero.
    pub fn overlap(&self, other: &Wavepacket) -> Result<C64> {
        self.check_grid(other)?;
        Ok(self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum::<C64>() * self.dt)
    }

    /// Mean time and variance of the normalized intensity |ψ|².
    pub fn moments(&self) -> (f64, f64) {
        let w: Vec<f64> = self.samples.iter().map(|z| z.norm_sqr()).collect();
        let m0: f64 = w.iter().sum();
        let m1: f64 = w.iter().enumerate().map(|(k, x)| x * self.time(k)).sum::<f64>() / m0;
        let m2: f64 = w.iter().enumerate().map(|(k, x)| x * (self.time(k) - m1).powi(2)).sum::<f64>() / m0;
        (m1, m2)
    }

    /// Zero-padded copy whose length is the next power of two ≥ `factor`·len.
    pub fn padded(&self, factor: usize) -> Wavepacket {
        let target = (self.len() * factor.max(1)).next_power_of_two();
        let mut out = self.clone();
        out.samples.resize(target, c(0.0, 0.0));
        out
    }

    /// Ψ(ω) = (2π)^{-1/2} ∫ψ(t)e^{iωt}dt sampled by FFT, ω ascending.
    pub fn spectrum(&self, padding: usize) -> SpectralWavepacket {
        let p = self.padded(padding);
        let n = p.len();
        let mut buf = p.samples.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let domega = 2.0 * PI / (n as f64 * self.dt);
        let scale = self.dt / (2.0 * PI).sqrt();
        let mut pairs: Vec<(f64, C64)> = (0..n)
            .map(|k| {
                let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                // forward FFT uses e^{−iνt}; the e^{+iωt} convention maps ν → −ω
                let omega = -kk * domega;
                let phase = C64::from_polar(1.0, omega * self.t0);
                (omega, buf[k] * scale * phase)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        SpectralWavepacket {
            omega: pairs.iter().map(|p| p.0).collect(),
            amplitudes: pairs.iter().map(|p| p.1).collect(),
            domega,
        }
    }

    /// CSV with a unit comment, header and either (t, re) or (t, re, im) columns.
    pub fn to_csv(&self, with_imag: bool) -> String {
        let mut s = String::from("# t in 1/gamma0, psi in gamma0^(1/2)\n");
        s.push_str(if with_imag { "t,re,im\n" } else { "t,re\n" });
        for (k, z) in self.samples.iter().enumerate() {
            if with_imag {
                let _ = writeln!(s, "{},{},{}", crate::io::fmt_num(self.time(k)), crate::io::fmt_num(z.re), crate::io::fmt_num(z.im));
            } else {
                let _ = writeln!(s, "{},{}", crate::io::fmt_num(self.time(k)), crate::io::fmt_num(z.re));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut t = Vec::new();
        let mut z = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(|ch: char| ch.is_alphabetic()) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 && cols.len() != 3 {
                return invalid(format!("line {}: expected 2 or 3 columns", lineno + 1));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))
            };
            t.push(parse(cols[0])?);
            let re = parse(cols[1])?;
            let im = if cols.len() == 3 { parse(cols[2])? } else { 0.0 };
            z.push(c(re, im));
        }
        if t.len() < 2 {
            return invalid("wavepacket CSV needs at least two samples");
        }
        let dt = t[1] - t[0];
        for w in t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) * 1e3 {
                return invalid("wavepacket CSV grid is not uniform");
            }
        }
        Wavepacket::new(t[0], dt, z)
    }
}

/// Bright amplitude b(t) for constant J̃ starting from a(0) = −i, b(0) = 0.
pub fn constant_coupling_b(j: f64, gamma0: f64, t: f64) -> f64 {
    let cpl = 3.0 * 2f64.sqrt() * j;
    let disc = 9.0 * gamma0 * gamma0 / 16.0 - 18.0 * j * j;
    let env = 0.75 * gamma0;
    if disc > 1e-14 {
        let kappa = disc.sqrt();
        // written with decaying exponentials only, so long windows cannot overflow
        cpl / (2.0 * kappa) * (((kappa - env) * t).exp() - (-(kappa + env) * t).exp())
    } else if disc < -1e-14 {
        let w = (-disc).sqrt();
        cpl / w * (-env * t).exp() * (w * t).sin()
    } else {
        cpl * t * (-env * t).exp()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralWavepacket {
    /// angular frequency relative to the |G⟩↔|B⟩ resonance, units γ0
    pub omega: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub domega: f64,
}

impl SpectralWavepacket {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.domega
    }
}
