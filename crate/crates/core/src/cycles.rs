//! Diffuse (stochastic) and specular back-time cycles, Monte Carlo
//! estimators for cycle-escape probabilities and weighted iterated cycle
//! integrals, and a finite-difference probe of the trajectory Jacobian.
//!
//! A cycle starts at phase point (t, x, v) and runs backward: straight legs
//! inside the domain, and at each boundary hit either a specular reflection
//! or a fresh velocity drawn from the outgoing flux measure
//! d sigma = mu(v) (n.v) dv, which is a probability measure on each
//! half-space by the Maxwellian flux normalization.

use crate::collision::NuRadialTable;
use crate::geometry::{Domain, GeomError};
use crate::rng::CounterRng;
use crate::vec3::Vec3;
use crate::weights::{sqrt_maxwellian, weight_stationary, WeightParams};
use rayon::prelude::*;
use thiserror::Error;

/// Traces with kinetic distance below this abort rather than continue with
/// unstable near-grazing geometry.
pub const TOL_GRAZING: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum CycleError {
    #[error("trajectory entered the grazing set at bounce {bounce}")]
    GrazingAbort { bounce: usize },
    #[error("finite differences fell below round-off")]
    DegenerateStep,
    #[error("trace does not cover the requested evaluation time {0}")]
    NotCovered(f64),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    Diffuse,
    Specular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedTimeZero,
    BounceBudget,
    GrazingAbort,
}

/// One cycle node: the time, position and the velocity carried on the leg
/// that starts (in backward time) at this node.
#[derive(Debug, Clone, Copy)]
pub struct CycleNode {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
}

/// A back-time cycle: entries[0] is the start; entries[k] for k >= 1 sit on
/// the boundary with strictly decreasing times.
#[derive(Debug, Clone)]
pub struct CycleTrace {
    pub kind: CycleKind,
    pub entries: Vec<CycleNode>,
    pub terminated_by: Termination,
}

impl CycleTrace {
    pub fn start(&self) -> CycleNode {
        self.entries[0]
    }

    pub fn bounces(&self) -> usize {
        self.entries.len() - 1
    }

    /// Position and velocity at backward time `s`, from the bracketing leg
    /// [t_{k+1}, t_k). Legs run from each node toward smaller times.
    pub fn eval(&self, s: f64) -> Result<(Vec3, Vec3), CycleError> {
        let t0 = self.entries[0].t;
        if s > t0 {
            return Err(CycleError::NotCovered(s));
        }
        for (k, node) in self.entries.iter().enumerate() {
            let t_next = self.entries.get(k + 1).map(|n| n.t);
            let covered = match t_next {
                Some(tn) => s >= tn,
                // Final leg: covers down to time zero only if the cycle
                // actually reached it.
                None => self.terminated_by == Termination::ReachedTimeZero,
            };
            if s <= node.t && covered {
                return Ok((node.x + node.v.scale(s - node.t), node.v));
            }
        }
        Err(CycleError::NotCovered(s))
    }
}

/// Specular back-time cycle: reflect at every wall hit until time runs out
/// or the bounce budget is reached. Returns a trace whose termination field
/// records a grazing abort instead of failing, so estimators can count them.
pub fn trace_specular_cycle(
    d: &Domain,
    t: f64,
    x: Vec3,
    v: Vec3,
    max_bounces: usize,
) -> Result<CycleTrace, CycleError> {
    if d.kinetic_distance(x, v) <= TOL_GRAZING {
        return Err(CycleError::GrazingAbort { bounce: 0 });
    }
    let mut entries = vec![CycleNode { t, x, v }];
    let mut cur = entries[0];
    let mut terminated_by = Termination::BounceBudget;
    for k in 0..max_bounces {
        match d.backward_exit_time(cur.x, cur.v) {
            Err(GeomError::ZeroSpatialVelocity) => {
                terminated_by = Termination::ReachedTimeZero;
                break;
            }
            Err(e) => return Err(CycleError::Geometry(e)),
            Ok((tb, xb)) => {
                let t_next = cur.t - tb;
                if t_next <= 0.0 {
                    terminated_by = Termination::ReachedTimeZero;
                    break;
                }
                if d.kinetic_distance(xb, cur.v) <= TOL_GRAZING {
                    terminated_by = Termination::GrazingAbort;
                    let _ = k;
                    break;
                }
                let v_next = d.specular_reflect(xb, cur.v)?;
                cur = CycleNode { t: t_next, x: xb, v: v_next };
                entries.push(cur);
            }
        }
    }
    Ok(CycleTrace { kind: CycleKind::Specular, entries, terminated_by })
}

/// Importance weights of a sampled cycle under the boundary flux measure;
/// exact sampling gives unit weights.
#[derive(Debug, Clone)]
pub struct CycleMeasureSample {
    pub weights: Vec<f64>,
    pub cumulative_weight: f64,
}

/// Draw from d sigma = mu(v) (n.v) dv on {n.v > 0}: tangential components
/// standard normal, normal component Rayleigh.
pub fn draw_flux_velocity(n: Vec3, rng: &mut CounterRng) -> Vec3 {
    let (e2, e3) = n.orthonormal_frame();
    let s = rng.rayleigh();
    let t1 = rng.normal();
    let t2 = rng.normal();
    n.scale(s) + e2.scale(t1) + e3.scale(t2)
}

/// Diffuse back-time cycle: at each wall hit draw the next velocity from the
/// outgoing flux measure; continue until time zero or `k_max` draws.
pub fn sample_diffuse_cycle(
    d: &Domain,
    rng: &mut CounterRng,
    t: f64,
    x: Vec3,
    v: Vec3,
    k_max: usize,
) -> Result<(CycleTrace, CycleMeasureSample), CycleError> {
    let mut entries = Vec::with_capacity(k_max + 2);
    entries.push(CycleNode { t, x, v });
    let mut weights = Vec::with_capacity(k_max);
    let mut terminated_by = Termination::BounceBudget;

    // Deterministic first leg unless the start already sits on the wall.
    let (mut t_cur, mut x_cur) = if d.on_boundary(x) {
        (t, x)
    } else {
        if d.kinetic_distance(x, v) <= TOL_GRAZING {
            return Err(CycleError::GrazingAbort { bounce: 0 });
        }
        match d.backward_exit_time(x, v) {
            Err(GeomError::ZeroSpatialVelocity) => {
                // Never reaches the wall; the cycle is a single leg.
                return Ok((
                    CycleTrace {
                        kind: CycleKind::Diffuse,
                        entries,
                        terminated_by: Termination::ReachedTimeZero,
                    },
                    CycleMeasureSample { weights, cumulative_weight: 1.0 },
                ));
            }
            Err(e) => return Err(CycleError::Geometry(e)),
            Ok((tb, xb)) => {
                let t1 = t - tb;
                if t1 <= 0.0 {
                    return Ok((
                        CycleTrace {
                            kind: CycleKind::Diffuse,
                            entries,
                            terminated_by: Termination::ReachedTimeZero,
                        },
                        CycleMeasureSample { weights, cumulative_weight: 1.0 },
                    ));
                }
                (t1, xb)
            }
        }
    };

    for draw in 0..k_max {
        let n = d.outward_normal(x_cur)?;
        let v_drawn = draw_flux_velocity(n, rng);
        weights.push(1.0);
        entries.push(CycleNode { t: t_cur, x: x_cur, v: v_drawn });
        if d.kinetic_distance(x_cur, v_drawn) <= TOL_GRAZING {
            terminated_by = Termination::GrazingAbort;
            break;
        }
        match d.backward_exit_time(x_cur, v_drawn) {
            Err(GeomError::ZeroSpatialVelocity) => {
                terminated_by = Termination::ReachedTimeZero;
                break;
            }
            Err(e) => return Err(CycleError::Geometry(e)),
            Ok((tb, xb)) => {
                let t_next = t_cur - tb;
                if t_next <= 0.0 {
                    // Virtual crossing marker; carries the arriving velocity.
                    entries.push(CycleNode { t: t_next, x: xb, v: v_drawn });
                    terminated_by = Termination::ReachedTimeZero;
                    break;
                }
                if draw + 1 == k_max {
                    // Terminal marker: the last drawn leg completed at a
                    // positive time, which leg integrals need to see.
                    entries.push(CycleNode { t: t_next, x: xb, v: v_drawn });
                }
                t_cur = t_next;
                x_cur = xb;
            }
        }
    }
    Ok((
        CycleTrace { kind: CycleKind::Diffuse, entries, terminated_by },
        CycleMeasureSample { cumulative_weight: 1.0, weights },
    ))
}

/// Monte Carlo estimate of the probability that a diffuse cycle from (t, x,
/// v) is still at strictly positive time after `k` velocity draws, with the
/// binomial standard error.
pub fn estimate_escape_probability(
    d: &Domain,
    t: f64,
    x: Vec3,
    v: Vec3,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n_samples >= 1);
    let hits: u64 = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = CounterRng::new(seed, s);
            match sample_diffuse_cycle(d, &mut rng, t, x, v, k) {
                // Survived all k draws exactly when the bounce budget, not a
                // time-zero crossing, ended the trace.
                Ok((trace, _)) => (trace.terminated_by == Termination::BounceBudget) as u64,
                Err(_) => 0,
            }
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    let se = (p * (1.0 - p) / n_samples as f64).sqrt();
    (p, se)
}

/// Indicator family for the weighted cycle integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralVariant {
    /// Legs that cross time zero, integrated over [0, t_l].
    TailToZero,
    /// Legs fully at positive times, integrated over [t_{l+1}, t_l].
    BetweenBounces,
}

/// Monte Carlo estimate of the weighted iterated cycle integral with `k`
/// legs. Time integrals on each leg are done in closed form; the leg weight
/// is e^{nu(v_l)(s - t_l)} w~(v_l) with w~ = 1/(w_{q,theta} sqrt(mu)), and
/// earlier legs contribute e^{nu(v_j)(t_{j+1} - t_j)}.
#[allow(clippy::too_many_arguments)]
pub fn estimate_weighted_cycle_integral(
    d: &Domain,
    nu: &NuRadialTable,
    p: &WeightParams,
    t: f64,
    x: Vec3,
    v: Vec3,
    k: usize,
    n_samples: usize,
    seed: u64,
    variant: IntegralVariant,
) -> (f64, f64) {
    let wtilde = |vel: Vec3| 1.0 / (weight_stationary(p.q, p.theta, vel) * sqrt_maxwellian(vel));
    estimate_weighted_cycle_integral_with(d, nu, t, x, v, k, n_samples, seed, variant, &wtilde)
}

/// Same estimator with an arbitrary leg weight; lets tests replace w~.
#[allow(clippy::too_many_arguments)]
pub(crate) fn estimate_weighted_cycle_integral_with<W>(
    d: &Domain,
    nu: &NuRadialTable,
    t: f64,
    x: Vec3,
    v: Vec3,
    k: usize,
    n_samples: usize,
    seed: u64,
    variant: IntegralVariant,
    leg_weight: &W,
) -> (f64, f64)
where
    W: Fn(Vec3) -> f64 + Sync,
{
    assert!(n_samples >= 1 && k >= 1);
    let vals: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|sidx| {
            let mut rng = CounterRng::new(seed, sidx);
            let (trace, _) = match sample_diffuse_cycle(d, &mut rng, t, x, v, k) {
                Ok(ok) => ok,
                Err(_) => return 0.0,
            };
            // entries[1..] are the drawn bounces; legs l = 1..=k run from
            // t_l down to t_{l+1}.
            let mut total = 0.0;
            let mut prior = 1.0;
            for l in 1..=k {
                let Some(node) = trace.entries.get(l) else { break };
                let t_l = node.t;
                if t_l <= 0.0 {
                    break;
                }
                let nu_l = nu.eval(node.v.norm());
                // t_{l+1}: next entry time, or the leg never ends (inactive
                // velocity) which counts as reaching time zero.
                let t_next = trace.entries.get(l + 1).map(|n| n.t).unwrap_or(f64::NEG_INFINITY);
                let contrib = match variant {
                    IntegralVariant::TailToZero if t_next <= 0.0 => {
                        (1.0 - (-nu_l * t_l).exp()) / nu_l
                    }
                    IntegralVariant::BetweenBounces if t_next > 0.0 => {
                        (1.0 - (-nu_l * (t_l - t_next)).exp()) / nu_l
                    }
                    _ => 0.0,
                };
                total += contrib * leg_weight(node.v) * prior;
                if t_next > 0.0 {
                    prior *= (-nu_l * (t_l - t_next)).exp();
                } else {
                    break;
                }
            }
            total
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

/// |det| of the finite-difference Jacobian of the secondary specular cycle
/// position X'(s1; s, X(s), v') with respect to v'.
///
/// The primary trace runs from (t, x, v); the probe perturbs v' along the
/// spatially active axes with central differences of step `h` (default
/// 1e-5 |v'|) and Richardson-extrapolates using a half step.
#[allow(clippy::too_many_arguments)]
pub fn specular_jacobian_probe(
    d: &Domain,
    t: f64,
    x: Vec3,
    v: Vec3,
    s: f64,
    s1: f64,
    v_prime: Vec3,
    h: Option<f64>,
) -> Result<f64, CycleError> {
    assert!(s1 < s && s <= t && s1 >= 0.0);
    let budget = 10_000;
    let primary = trace_specular_cycle(d, t, x, v, budget)?;
    let (xs, _) = primary.eval(s)?;
    let h0 = h.unwrap_or(1e-5 * v_prime.norm().max(1e-3));

    let det_at = |step: f64| -> Result<f64, CycleError> {
        let dim = d.dim();
        let mut jac = [[0.0f64; 3]; 3];
        let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        for (a, ax) in axes.iter().take(dim).enumerate() {
            let plus = secondary_position(d, s, xs, v_prime + ax.scale(step), s1, budget)?;
            let minus = secondary_position(d, s, xs, v_prime - ax.scale(step), s1, budget)?;
            let diff = plus - minus;
            if diff.norm() < 1e-13 * (1.0 + plus.norm()) {
                return Err(CycleError::DegenerateStep);
            }
            for i in 0..dim {
                jac[i][a] = diff[i] / (2.0 * step);
            }
        }
        Ok(match dim {
            1 => jac[0][0],
            _ => det3(&jac),
        })
    };

    let j_h = det_at(h0)?;
    let j_h2 = det_at(0.5 * h0)?;
    // Central differences are O(h^2); extrapolate.
    Ok(((4.0 * j_h2 - j_h) / 3.0).abs())
}

fn secondary_position(
    d: &Domain,
    s: f64,
    xs: Vec3,
    v_prime: Vec3,
    s1: f64,
    budget: usize,
) -> Result<Vec3, CycleError> {
    let trace = trace_specular_cycle(d, s, xs, v_prime, budget)?;
    if trace.terminated_by == Termination::GrazingAbort {
        return Err(CycleError::GrazingAbort { bounce: trace.bounces() });
    }
    let (pos, _) = trace.eval(s1)?;
    Ok(pos)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}
