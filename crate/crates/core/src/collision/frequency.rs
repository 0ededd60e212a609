//! Collision frequency nu(v) = (int_S2 b0 domega) int |u-v|^rho mu(u) du,
//! reduced to a 1-D radial integral after the Gaussian angular integration is
//! done analytically.

use crate::quad::{adaptive_simpson, QuadError};
use serde::{Deserialize, Serialize};

/// Angular kernel choice. The Grad-cutoff assumption only bounds b0 by
/// cos(theta); |cos| is the simplest admissible kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum B0Kind {
    #[default]
    AbsCos,
}

impl B0Kind {
    /// int_{S^2} b0(omega . e) domega, independent of the unit vector e.
    pub fn angular_factor(self) -> f64 {
        match self {
            B0Kind::AbsCos => 2.0 * std::f64::consts::PI,
        }
    }

    pub fn eval(self, cos_theta: f64) -> f64 {
        match self {
            B0Kind::AbsCos => cos_theta.abs(),
        }
    }
}

/// nu at speed |v| by adaptive quadrature in the relative speed r = |u - v|.
///
/// The angular reduction leaves
///   nu(V) = A(b0) / (2 pi V) * int_0^inf r^{rho+1} D(r) dr,
///   D(r) = exp(-(r-V)^2/2) - exp(-(r+V)^2/2),
/// and the integrable singularity at r = 0 is removed exactly by the
/// substitution sigma = r^{rho+3}.
pub fn nu_speed(speed: f64, varrho: f64, b0: B0Kind) -> Result<f64, QuadError> {
    assert!(varrho > -3.0 && varrho < 0.0, "varrho must lie in (-3, 0)");
    let a = b0.angular_factor();
    let p = varrho + 3.0;
    let r_max = speed + 45.0;
    let sigma_max = r_max.powf(p);
    let tol = 1e-11;
    if speed < 1e-8 {
        // nu(0) = 2 A int_0^inf r^{rho+2} e^{-r^2/2} dr.
        let f = |sigma: f64| {
            let r = sigma.powf(1.0 / p);
            (-0.5 * r * r).exp() / p
        };
        let j = adaptive_simpson(&f, 0.0, sigma_max, tol, 48)?;
        return Ok(2.0 * a * j);
    }
    // J = int r^{rho+2} E(r) dr with E = D(r)/r, evaluated in sigma.
    let f = |sigma: f64| {
        let r = sigma.powf(1.0 / p);
        let e = if r < 1e-12 {
            2.0 * speed * (-0.5 * speed * speed).exp()
        } else {
            ((-0.5 * (r - speed) * (r - speed)).exp() - (-0.5 * (r + speed) * (r + speed)).exp()) / r
        };
        e / p
    };
    let j = adaptive_simpson(&f, 0.0, sigma_max, tol, 48)?;
    Ok(a * j / speed)
}

/// Dense radial interpolation table for nu(|v|); cheap lookups for Monte
/// Carlo sampling where velocities are off-grid.
#[derive(Debug, Clone)]
pub struct NuRadialTable {
    varrho: f64,
    b0: B0Kind,
    dr: f64,
    values: Vec<f64>,
}

impl NuRadialTable {
    pub fn build(varrho: f64, b0: B0Kind, r_max: f64, n: usize) -> Result<Self, QuadError> {
        assert!(n >= 16);
        let dr = r_max / (n - 1) as f64;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            values.push(nu_speed(dr * i as f64, varrho, b0)?);
        }
        Ok(NuRadialTable { varrho, b0, dr, values })
    }

    pub fn eval(&self, speed: f64) -> f64 {
        let u = speed / self.dr;
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let a = (u - i as f64).clamp(0.0, 1.0);
        if u > (self.values.len() - 1) as f64 {
            // Beyond the table: fall back to direct quadrature.
            return nu_speed(speed, self.varrho, self.b0).unwrap_or(*self.values.last().unwrap());
        }
        (1.0 - a) * self.values[i] + a * self.values[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::vec3::Vec3;

    const PI: f64 = std::f64::consts::PI;

    /// Closed form for varrho = -1 and b0 = |cos|:
    /// nu(V) = 2 pi sqrt(2 pi) erf(V / sqrt 2) / V.
    fn nu_closed_form(speed: f64) -> f64 {
        if speed < 1e-12 {
            return 4.0 * PI;
        }
        2.0 * PI * (2.0 * PI).sqrt() * statrs::function::erf::erf(speed / 2f64.sqrt()) / speed
    }

    #[test]
    fn nu_at_zero_is_four_pi() {
        let v = nu_speed(0.0, -1.0, B0Kind::AbsCos).unwrap();
        assert!((v - 4.0 * PI).abs() < 1e-8, "{v} vs {}", 4.0 * PI);
    }

    #[test]
    fn nu_matches_closed_form_at_rho_minus_one() {
        for &s in &[0.05, 0.3, 1.0, 2.5, 6.0, 10.4] {
            let v = nu_speed(s, -1.0, B0Kind::AbsCos).unwrap();
            let e = nu_closed_form(s);
            assert!((v - e).abs() < 1e-8 * e, "speed {s}: {v} vs {e}");
        }
    }

    #[test]
    fn nu_zero_monte_carlo_oracle() {
        // nu(0) = 2 pi sqrt(2 pi) E_g |u|^rho under the standard normal g.
        let mut rng = CounterRng::new(321, 0);
        let n = 400_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = Vec3::new(rng.normal(), rng.normal(), rng.normal());
            let x = u.norm().powf(-1.0);
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let est = 2.0 * PI * (2.0 * PI).sqrt() * mean;
        let se_est = 2.0 * PI * (2.0 * PI).sqrt() * se;
        let exact = nu_speed(0.0, -1.0, B0Kind::AbsCos).unwrap();
        assert!(
            (est - exact).abs() < 4.0 * se_est,
            "MC {est} +- {se_est} vs quadrature {exact}"
        );
    }

    #[test]
    fn nu_decreasing_and_sandwiched() {
        // (1/C) <v>^rho <= nu <= C <v>^rho along a radial sweep.
        let mut prev = f64::INFINITY;
        let mut ratios = Vec::new();
        for k in 0..40 {
            let s = 0.3 * k as f64;
            let v = nu_speed(s, -1.0, B0Kind::AbsCos).unwrap();
            assert!(v < prev || s == 0.0);
            prev = v;
            ratios.push(v * (1.0 + s * s).sqrt());
        }
        let cmax = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let cmin = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(cmax / cmin <= 10.0, "sandwich spread {}", cmax / cmin);
    }

    #[test]
    fn nu_other_soft_exponents() {
        // Spot-check integrability across the soft range, including the
        // strongly singular end.
        for &rho in &[-0.5, -1.5, -2.0, -2.5] {
            let v0 = nu_speed(0.0, rho, B0Kind::AbsCos).unwrap();
            let v2 = nu_speed(2.0, rho, B0Kind::AbsCos).unwrap();
            assert!(v0 > 0.0 && v2 > 0.0 && v2 < v0);
        }
    }

    #[test]
    fn radial_table_accuracy() {
        let t = NuRadialTable::build(-1.0, B0Kind::AbsCos, 15.0, 1024).unwrap();
        for &s in &[0.0, 0.17, 1.3, 5.9, 11.0] {
            let e = nu_closed_form(s);
            assert!((t.eval(s) - e).abs() < 2e-4 * e, "speed {s}");
        }
    }
}
