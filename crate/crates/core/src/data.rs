//! Deterministic synthetic data for the experiments.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Half-width of the uniform `X` component: `Var = a²/3 = 7/3`.
pub const ROTATION_X_HALF_WIDTH: f64 = 2.645_751_311_064_590_6; // √7
/// Inner and outer radius of the two-sided uniform `Y` component.
pub const ROTATION_Y_BAND: (f64, f64) = (1.0, 2.0);

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard exponential draw.
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Independent `X ~ U[−√7, √7]` and `Y ~ U(±[1, 2])` (equal variances 7/3), with the
/// pair rotated by `theta`. The components are uncorrelated for every angle and
/// independent only at multiples of π/2.
pub fn gen_rotation_pair(n: usize, theta: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, 0);
    let (b, c) = ROTATION_Y_BAND;
    let (s, co) = theta.sin_cos();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(-ROTATION_X_HALF_WIDTH..ROTATION_X_HALF_WIDTH);
        let mag = rng.random_range(b..c);
        let y = if rng.random::<bool>() { mag } else { -mag };
        xs.push(co * x - s * y);
        ys.push(s * x + co * y);
    }
    (xs, ys)
}

/// `X = U₁`, `Y = a(X² − 1) + U₂`, `Z = Y + U₃` with independent standard normals,
/// so `X − Y − Z` is a Markov chain for every coupling `a`.
pub fn gen_markov_triple(n: usize, coupling: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, 0);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = normal(&mut rng);
        let y = coupling * (x * x - 1.0) + normal(&mut rng);
        let z = y + normal(&mut rng);
        xs.push(x);
        ys.push(y);
        zs.push(z);
    }
    (xs, ys, zs)
}

/// One step of the nonlinear AR(2) map without noise.
pub fn nl_ar_map(prev: f64, prev2: f64) -> f64 {
    let g = (-prev * prev).exp();
    (8.0 - 5.0 * g) * prev / 10.0 - (3.0 + 9.0 * g) * prev2 / 10.0 + (std::f64::consts::PI * prev).sin() / 10.0
}

/// Nonlinear AR(2) series started from `z₁ = z₂ = 0` with Gaussian innovations.
pub fn gen_nl_ar(n: usize, noise_sd: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("series length must be ≥ 3, got {n}")));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sd must be ≥ 0, got {noise_sd}")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut z = vec![0.0; n];
    for k in 2..n {
        z[k] = nl_ar_map(z[k - 1], z[k - 2]) + noise_sd * normal(&mut rng);
    }
    Ok(z)
}

/// Scalar linear-Gaussian state-space model `x_k = a x_{k−1} + w_k`, `y_k = x_k + v_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianSsm {
    pub transition: f64,
    pub process_var: f64,
    pub obs_var: f64,
}

impl LinearGaussianSsm {
    pub fn stationary_var(&self) -> f64 {
        self.process_var / (1.0 - self.transition * self.transition)
    }

    /// States and observations of length `n`, started from the stationary law.
    pub fn simulate(&self, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream_rng(seed, 0);
        let mut x = self.stationary_var().sqrt() * normal(&mut rng);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            xs.push(x);
            ys.push(x + self.obs_var.sqrt() * normal(&mut rng));
            x = self.transition * x + self.process_var.sqrt() * normal(&mut rng);
        }
        (xs, ys)
    }

    /// Kalman filter means `E[x_k | y_1..y_k]` from prior `N(mean0, var0)` on the first state.
    pub fn kalman_filter(&self, obs: &[f64], mean0: f64, var0: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(obs.len());
        let (mut m, mut p) = (mean0, var0);
        for (k, &y) in obs.iter().enumerate() {
            if k > 0 {
                m *= self.transition;
                p = self.transition * self.transition * p + self.process_var;
            }
            let gain = p / (p + self.obs_var);
            m += gain * (y - m);
            p *= 1.0 - gain;
            out.push(m);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn rotation_variances_match() {
        let (x, y) = gen_rotation_pair(10_000, 0.0, 1);
        assert!((var(&x) - 7.0 / 3.0).abs() < 0.2);
        assert!((var(&y) - 7.0 / 3.0).abs() < 0.2);
        let (x2, y2) = gen_rotation_pair(10_000, 0.0, 1);
        assert_eq!((x, y), (x2, y2));
    }

    #[test]
    fn rotation_is_uncorrelated() {
        let (x, y) = gen_rotation_pair(10_000, std::f64::consts::FRAC_PI_4, 2);
        let (mx, my) = (x.iter().sum::<f64>() / 1e4, y.iter().sum::<f64>() / 1e4);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / 1e4;
        assert!((cov / (var(&x) * var(&y)).sqrt()).abs() < 0.05);
    }

    #[test]
    fn markov_moments() {
        let (_, y, z) = gen_markov_triple(100_000, 0.7, 3);
        assert!((y.iter().sum::<f64>() / 1e5).abs() < 0.02);
        assert!((var(&z) - var(&y) - 1.0).abs() < 0.05);
    }

    #[test]
    fn ar_series_properties() {
        assert!(gen_nl_ar(100, 0.0, 1).unwrap().iter().all(|&v| v == 0.0));
        let z = gen_nl_ar(10_000, 0.1, 4).unwrap();
        assert!(z.iter().all(|v| v.abs() < 5.0));
        assert!(gen_nl_ar(2, 0.1, 1).is_err());
    }

    #[test]
    fn kalman_is_exact_without_obs_noise() {
        let m = LinearGaussianSsm { transition: 0.9, process_var: 0.19, obs_var: 1e-12 };
        let (x, y) = m.simulate(50, 5);
        let est = m.kalman_filter(&y, 0.0, 1.0);
        for (a, b) in x.iter().zip(&est) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
