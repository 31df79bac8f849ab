//! The standard, seeded family of probe signals and pairs used for every
//! empirical estimate.
//!
//! All waveforms are supported on the first half of the window (steps on the
//! first quarter), so every probe has decayed to exactly zero well before the
//! horizon.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeFamily {
    /// Samples per signal.
    pub len: usize,
    pub dt: f64,
    pub dim: usize,
    pub seed: u64,
    pub sinusoids: usize,
    pub noise: usize,
    pub amplitudes: Vec<f64>,
}

impl Default for ProbeFamily {
    fn default() -> Self {
        ProbeFamily {
            len: 1000,
            dt: 0.02,
            dim: 1,
            seed: 0,
            sinusoids: 6,
            noise: 6,
            amplitudes: vec![0.01, 0.1, 0.5, 1.0, 3.0],
        }
    }
}

fn hann(t: f64, width: f64) -> f64 {
    if t < width {
        (PI * t / width).sin().powi(2)
    } else {
        0.0
    }
}

impl ProbeFamily {
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// A smaller family for expensive (nested feedback) evaluations.
    pub fn light() -> Self {
        ProbeFamily { sinusoids: 3, noise: 3, amplitudes: vec![0.1, 1.0], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 16 {
            return Err(Error::InvalidArgument("probe length must be >= 16".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument("probe dt must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("probe dimension must be >= 1".into()));
        }
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("probe amplitudes must be positive".into()));
        }
        Ok(())
    }

    fn horizon(&self) -> f64 {
        self.len as f64 * self.dt
    }

    /// Unit-peak scalar waveforms: `+1` step, `-1` step, Hann-windowed
    /// sinusoids at log-spaced frequencies, then Hann-windowed first-order
    /// low-pass noise.
    pub fn base_waveforms(&self) -> Vec<Vec<f64>> {
        let t_end = self.horizon();
        let n = self.len;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * self.dt).collect();
        let mut out = Vec::new();

        for sign in [1.0, -1.0] {
            out.push(times.iter().map(|&t| if t < t_end / 4.0 { sign } else { 0.0 }).collect());
        }

        let w_lo = 2.0 * PI * 4.0 / t_end;
        let w_hi = (PI / self.dt) / 4.0;
        for i in 0..self.sinusoids {
            let f = if self.sinusoids == 1 { 0.0 } else { i as f64 / (self.sinusoids - 1) as f64 };
            let w = w_lo * (w_hi / w_lo).powf(f);
            out.push(times.iter().map(|&t| hann(t, t_end / 2.0) * (w * t).sin()).collect());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let cutoff = 2.0 * PI * 20.0 / t_end;
        let alpha = 1.0 - (-cutoff * self.dt).exp();
        for _ in 0..self.noise {
            let mut state = 0.0;
            let raw: Vec<f64> = times
                .iter()
                .map(|&t| {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    state += alpha * (w - state);
                    hann(t, t_end / 2.0) * state
                })
                .collect();
            let peak = raw.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            out.push(raw.into_iter().map(|x| x / peak).collect());
        }
        out
    }

    /// Base waveforms lifted to `dim` components: waveform `i` drives
    /// component `i mod dim`, with the next waveform at 30% on the others.
    pub fn signals(&self) -> Result<Vec<Signal>> {
        self.validate()?;
        let base = self.base_waveforms();
        let m = base.len();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let mut data = vec![0.0; self.len * self.dim];
            for k in 0..self.len {
                for j in 0..self.dim {
                    data[k * self.dim + j] =
                        if j == i % self.dim { base[i][k] } else { 0.3 * base[(i + 1 + j) % m][k] };
                }
            }
            out.push(Signal::new(data, self.dim, self.dt)?);
        }
        Ok(out)
    }

    /// For each amplitude `a` and base signal `p_i`: `(a p_i, 0)`,
    /// `(a p_i, a p_{i+1})` and `(a p_i, a p_i + 0.05 a p_{i+1})`.
    pub fn pairs(&self) -> Result<Vec<(Signal, Signal)>> {
        let sigs = self.signals()?;
        let m = sigs.len();
        let zero = Signal::zeros(self.len, self.dim, self.dt)?;
        let mut out = Vec::with_capacity(3 * m * self.amplitudes.len());
        for &a in &self.amplitudes {
            for i in 0..m {
                let p = sigs[i].scaled(a);
                let q = sigs[(i + 1) % m].scaled(a);
                out.push((p.clone(), zero.clone()));
                out.push((p.clone(), q.clone()));
                out.push((p.clone(), p.try_axpy(0.05, &q)?));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_is_reproducible_and_seed_dependent() {
        let a = ProbeFamily::default().signals().unwrap();
        let b = ProbeFamily::default().signals().unwrap();
        assert_eq!(a, b);
        let c = ProbeFamily::default().with_seed(7).signals().unwrap();
        assert_ne!(a, c);
        // deterministic parts do not depend on the seed
        assert_eq!(a[0], c[0]);
    }

    #[test]
    fn probes_decay_before_the_horizon() {
        for s in ProbeFamily::default().with_dim(2).signals().unwrap() {
            let last = s.sample(s.len() - 1);
            assert!(last.iter().all(|x| x.abs() < 1e-6 * s.peak()));
            assert!(s.peak() > 0.0);
        }
    }

    #[test]
    fn default_family_has_at_least_200_pairs() {
        let p = ProbeFamily::default().pairs().unwrap();
        assert_eq!(p.len(), 3 * 14 * 5);
        assert!(p.len() >= 200);
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(ProbeFamily { len: 3, ..ProbeFamily::default() }.signals().is_err());
        assert!(ProbeFamily { amplitudes: vec![], ..ProbeFamily::default() }.pairs().is_err());
        assert!(ProbeFamily { dim: 0, ..ProbeFamily::default() }.signals().is_err());
    }
}
