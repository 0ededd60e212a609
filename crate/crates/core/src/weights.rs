//! Global Maxwellian, time-velocity weight functions, the revised collision
//! frequency, and stretched-exponential decay envelopes.
//!
//! The weight is w(t, v) = exp{ q|v|^theta/8 + q|v|^theta/(8 (1+t)^vartheta) }.
//! At vartheta = 0 this reduces to the stationary weight exp(q|v|^theta/4).
//! Its time derivative augments the collision frequency nu into
//! nu~ = nu + vartheta q |v|^theta / (8 (1+t)^{vartheta+1}), which admits a
//! usable time-dependent lower bound even though nu itself has none at large
//! velocity.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("q must be positive (got {0})")]
    QNotPositive(f64),
    #[error("q must lie in (0, 1) when theta = 2 (got q = {0})")]
    QOutOfRangeAtThetaTwo(f64),
    #[error("theta must lie in (0, 2] (got {0})")]
    ThetaOutOfRange(f64),
    #[error("varrho must lie in (-3, 0) (got {0})")]
    VarrhoOutOfRange(f64),
    #[error("vartheta must satisfy 0 <= vartheta < -theta/varrho (got vartheta = {vartheta}, bound {bound})")]
    VarthetaOutOfRange { vartheta: f64, bound: f64 },
    #[error("decay envelope violated at t = {t}, node {node}: margin {margin:e}")]
    EnvelopeViolated { t: f64, node: usize, margin: f64 },
}

/// Parameters (q, theta, vartheta, varrho) of the weight family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub q: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub varrho: f64,
}

impl Default for WeightParams {
    /// Interior of all admissible ranges; rho0 = 2/3 and rho1 = 1/2 are well
    /// separated for fitting.
    fn default() -> Self {
        WeightParams { q: 0.5, theta: 2.0, vartheta: 0.5, varrho: -1.0 }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<(), WeightsError> {
        if !(self.varrho > -3.0 && self.varrho < 0.0) {
            return Err(WeightsError::VarrhoOutOfRange(self.varrho));
        }
        if !(self.theta > 0.0 && self.theta <= 2.0) {
            return Err(WeightsError::ThetaOutOfRange(self.theta));
        }
        if self.q <= 0.0 {
            return Err(WeightsError::QNotPositive(self.q));
        }
        if self.theta == 2.0 && self.q >= 1.0 {
            return Err(WeightsError::QOutOfRangeAtThetaTwo(self.q));
        }
        let bound = -self.theta / self.varrho;
        if !(self.vartheta >= 0.0 && self.vartheta < bound) {
            return Err(WeightsError::VarthetaOutOfRange { vartheta: self.vartheta, bound });
        }
        Ok(())
    }

    pub fn exponents(&self, lambda0: f64) -> DecayExponents {
        DecayExponents {
            rho0: self.theta / (self.theta - self.varrho),
            rho1: (self.theta + self.vartheta * self.varrho) / (self.theta - self.varrho),
            lambda0,
        }
    }
}

/// Stretch exponents of the decay envelopes and the configured rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayExponents {
    pub rho0: f64,
    pub rho1: f64,
    pub lambda0: f64,
}

/// Global Maxwellian mu(v) = (2 pi)^{-1} exp(-|v|^2/2), normalized so the
/// half-space flux integral of mu (n.v) equals one.
pub fn maxwellian(v: Vec3) -> f64 {
    (-0.5 * v.norm2()).exp() / TWO_PI
}

pub fn sqrt_maxwellian(v: Vec3) -> f64 {
    (-0.25 * v.norm2()).exp() / TWO_PI.sqrt()
}

/// Weight w_{q,theta,vartheta}(t, v).
pub fn weight(p: &WeightParams, t: f64, v: Vec3) -> f64 {
    let vt = v.norm().powf(p.theta);
    ((p.q * vt / 8.0) * (1.0 + (1.0 + t).powf(-p.vartheta))).exp()
}

/// Stationary weight w_{q,theta} = exp(q |v|^theta / 4).
pub fn weight_stationary(q: f64, theta: f64, v: Vec3) -> f64 {
    (q * v.norm().powf(theta) / 4.0).exp()
}

/// Revised collision frequency nu~(v, t) = nu(v) + vartheta q |v|^theta /
/// (8 (1+t)^{vartheta+1}); satisfies nu~ >= nu pointwise.
pub fn nu_tilde(p: &WeightParams, nu_v: f64, t: f64, v: Vec3) -> f64 {
    nu_v + p.vartheta * p.q * v.norm().powf(p.theta) / (8.0 * (1.0 + t).powf(p.vartheta + 1.0))
}

/// Closed form of int_s^t nu~(v, tau) dtau.
pub fn nu_tilde_integral(p: &WeightParams, nu_v: f64, v: Vec3, s: f64, t: f64) -> f64 {
    let vt = v.norm().powf(p.theta);
    nu_v * (t - s) + (p.q * vt / 8.0) * ((1.0 + s).powf(-p.vartheta) - (1.0 + t).powf(-p.vartheta))
}

/// Largest admissible envelope rate for the Young-inequality bound,
/// lambda0 <= (C_rho rho0)^{-rho0} (q / (8 (1 - rho0)))^{1 - rho0},
/// with `c_rho` the fitted frequency-sandwich constant.
pub fn lambda0_admissible_bound(p: &WeightParams, c_rho: f64) -> f64 {
    let rho0 = p.theta / (p.theta - p.varrho);
    (c_rho * rho0).powf(-rho0) * (p.q / (8.0 * (1.0 - rho0))).powf(1.0 - rho0)
}

/// Result of a pointwise envelope audit.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Worst value of nu t + q|v|^theta/8 - lambda0 t^{rho0} (nonnegative
    /// margins mean the envelope holds).
    pub worst_margin: f64,
    pub worst_t: f64,
    pub worst_node: usize,
    pub checked: usize,
    /// Per-sample margins as (t, node index, margin).
    pub margins: Vec<(f64, usize, f64)>,
}

/// Verifies e^{-nu(v) t} w_{q/2,theta}(v)^{-1} <= e^{-lambda0 t^{rho0}} for
/// every node and sample time. `nu` holds the collision frequency per node.
pub fn young_envelope_check(
    p: &WeightParams,
    lambda0: f64,
    nodes: &[Vec3],
    nu: &[f64],
    t_samples: &[f64],
) -> Result<EnvelopeReport, WeightsError> {
    assert_eq!(nodes.len(), nu.len());
    let rho0 = p.theta / (p.theta - p.varrho);
    let mut report = EnvelopeReport {
        worst_margin: f64::INFINITY,
        worst_t: f64::NAN,
        worst_node: usize::MAX,
        checked: 0,
        margins: Vec::with_capacity(nodes.len() * t_samples.len()),
    };
    for &t in t_samples {
        let envelope = lambda0 * t.powf(rho0);
        for (j, (&v, &nu_v)) in nodes.iter().zip(nu).enumerate() {
            // log of both sides: the inequality is
            // nu t + q |v|^theta / 8 >= lambda0 t^{rho0}.
            let margin = nu_v * t + p.q * v.norm().powf(p.theta) / 8.0 - envelope;
            report.checked += 1;
            report.margins.push((t, j, margin));
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_t = t;
                report.worst_node = j;
            }
            if margin < -1e-12 {
                return Err(WeightsError::EnvelopeViolated { t, node: j, margin });
            }
        }
    }
    Ok(report)
}

/// Measured rate lambda2 for the time-dependent envelope
/// exp(-int_s^t nu~) <= exp(lambda2 s^{rho1} - lambda2 t^{rho1}):
/// the infimum over samples of int_s^t nu~ / (t^{rho1} - s^{rho1}).
pub fn nu_tilde_envelope_rate(
    p: &WeightParams,
    nodes: &[Vec3],
    nu: &[f64],
    st_samples: &[(f64, f64)],
) -> f64 {
    let rho1 = (p.theta + p.vartheta * p.varrho) / (p.theta - p.varrho);
    let mut lam = f64::INFINITY;
    for &(s, t) in st_samples {
        assert!(t > s && s >= 0.0);
        let denom = t.powf(rho1) - s.powf(rho1);
        for (&v, &nu_v) in nodes.iter().zip(nu) {
            lam = lam.min(nu_tilde_integral(p, nu_v, v, s, t) / denom);
        }
    }
    lam
}
