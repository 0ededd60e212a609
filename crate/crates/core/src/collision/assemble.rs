//! Dense assembly of the kernel split K = K^chi + K^{1-chi}.
//!
//! Each row is a quadrature over collision partners u and scattering
//! directions omega. The integration region around u = v is covered by a
//! radial-angular rule in the relative velocity w = u - v (the substitution
//! sigma = r^{varrho+3} absorbs the |w|^varrho singularity exactly); the far
//! region is covered by the grid's trapezoid rule at the nodes. A smooth
//! radial blend psi switches between the two, so no mass is counted twice.
//! Off-grid post-collision arguments are distributed by trilinear scatter.

use super::frequency::B0Kind;
use super::grid::VelocityGrid;
use super::{chi, frequency_vector, CollisionError, CollisionOperator};
use crate::quad::gauss_legendre_on;
use crate::vec3::Vec3;
use crate::weights::sqrt_maxwellian;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters of a kernel assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyParams {
    /// Soft-potential exponent, in (-3, 0).
    pub varrho: f64,
    /// Cutoff radius of the smooth split.
    pub eps_chi: f64,
    pub b0_kind: B0Kind,
    /// Total size of the angular product rule (cos-theta nodes x phi nodes).
    pub n_omega: usize,
}

impl Default for AssemblyParams {
    fn default() -> Self {
        AssemblyParams { varrho: -1.0, eps_chi: 0.2, b0_kind: B0Kind::AbsCos, n_omega: 72 }
    }
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta), mirrored
/// about the equator so the |cos| kink sits on a panel boundary, times a
/// uniform midpoint rule in phi. Weights sum to 4 pi.
pub(crate) struct SphereRule {
    /// (cos, sin, cos_phi, sin_phi, weight)
    pub nodes: Vec<(f64, f64, f64, f64, f64)>,
}

impl SphereRule {
    pub fn new(n_total: usize) -> Self {
        let n_phi = (n_total / 12).max(4);
        let n_cos_half = (n_total / n_phi / 2).max(2);
        let (cs, cws) = gauss_legendre_on(n_cos_half, 0.0, 1.0);
        let mut nodes = Vec::with_capacity(2 * n_cos_half * n_phi);
        let wphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (c, cw) in cs.iter().zip(&cws) {
            for half in [1.0, -1.0] {
                let cc = c * half;
                let s = (1.0 - cc * cc).max(0.0).sqrt();
                for m in 0..n_phi {
                    let phi = (m as f64 + 0.5) * wphi;
                    nodes.push((cc, s, phi.cos(), phi.sin(), cw * wphi));
                }
            }
        }
        SphereRule { nodes }
    }
}

/// Descending smoothstep for the near/far blend: 1 below r1, 0 above r2.
fn psi(r: f64, r1: f64, r2: f64) -> f64 {
    if r <= r1 {
        1.0
    } else if r >= r2 {
        0.0
    } else {
        let u = (r - r1) / (r2 - r1);
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}

/// Radial rule for the near zone: per smooth segment, Gauss-Legendre in the
/// transformed variable sigma = r^{varrho+3}, which integrates
/// r^{varrho+2} f(r) dr as f(r(sigma)) dsigma / (varrho+3).
fn radial_rule(breaks: &[f64], varrho: f64, n_per_segment: usize) -> Vec<(f64, f64)> {
    let p = varrho + 3.0;
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a + 1e-15 {
            continue;
        }
        let (sg, wg) = gauss_legendre_on(n_per_segment, a.powf(p), b.powf(p));
        for (s, wq) in sg.iter().zip(&wg) {
            out.push((s.powf(1.0 / p), wq / p));
        }
    }
    out
}

struct NearZone {
    /// (r, radial weight) pairs; weight already includes the r^{rho+2}
    /// Jacobian factor.
    radial: Vec<(f64, f64)>,
    r2: f64,
}

fn near_zone(params: &AssemblyParams, spacing: f64) -> NearZone {
    let r1 = (2.0 * params.eps_chi).max(0.75 * spacing);
    let r2 = r1 + 1.5 * spacing;
    let mut breaks = vec![0.0, params.eps_chi, 2.0 * params.eps_chi, r1, r2];
    breaks.retain(|&b| b <= r2 + 1e-15);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    NearZone { radial: radial_rule(&breaks, params.varrho, 8), r2 }
}

/// Assemble the split kernel matrices and the frequency vector.
///
/// Both matrices are symmetrized in the quadrature inner product afterwards
/// (the continuous kernel is self-adjoint in L^2; the symmetric part is the
/// structure-preserving discretization).
pub fn assemble_k(
    grid: &VelocityGrid,
    params: &AssemblyParams,
) -> Result<CollisionOperator, CollisionError> {
    if params.eps_chi <= 0.0 {
        return Err(CollisionError::InvalidParams(format!(
            "eps_chi must be positive, got {}",
            params.eps_chi
        )));
    }
    if params.n_omega < 32 {
        return Err(CollisionError::InvalidParams(format!(
            "n_omega must be at least 32, got {}",
            params.n_omega
        )));
    }
    if !(params.varrho > -3.0 && params.varrho < 0.0) {
        return Err(CollisionError::InvalidParams(format!(
            "varrho must lie in (-3, 0), got {}",
            params.varrho
        )));
    }
    let n3 = grid.len();
    let rule = SphereRule::new(params.n_omega);
    let ang_b0: f64 = rule.nodes.iter().map(|&(c, _, _, _, w)| params.b0_kind.eval(c) * w).sum();
    let near = near_zone(params, grid.spacing());
    let r1 = (2.0 * params.eps_chi).max(0.75 * grid.spacing());

    // Guard against coincident nodes (cannot happen on a well-formed grid).
    if grid.spacing() < 1e-12 {
        return Err(CollisionError::SingularSeparation);
    }

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n3)
        .into_par_iter()
        .map(|i| assemble_row(grid, params, &rule, ang_b0, &near, r1, i))
        .collect();

    let mut k_chi = vec![0.0; n3 * n3];
    let mut k_1mx = vec![0.0; n3 * n3];
    for (i, (rc, rn)) in rows.into_iter().enumerate() {
        k_chi[i * n3..(i + 1) * n3].copy_from_slice(&rc);
        k_1mx[i * n3..(i + 1) * n3].copy_from_slice(&rn);
    }
    symmetrize(&mut k_chi, grid);
    symmetrize(&mut k_1mx, grid);

    let nu = frequency_vector(grid, params.varrho, params.b0_kind)?;
    Ok(CollisionOperator::from_parts(*params, n3, nu, k_chi, k_1mx))
}

#[allow(clippy::too_many_arguments)]
fn assemble_row(
    grid: &VelocityGrid,
    params: &AssemblyParams,
    rule: &SphereRule,
    ang_b0: f64,
    near: &NearZone,
    r1: f64,
    i: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n3 = grid.len();
    let v = grid.node(i);
    let sq_v = sqrt_maxwellian(v);
    let mut row_chi = vec![0.0; n3];
    let mut row_1mx = vec![0.0; n3];

    // Far zone: grid nodes weighted by (1 - psi); chi = 1 beyond r1 >= 2 eps.
    for j in 0..n3 {
        if j == i {
            continue;
        }
        let u = grid.node(j);
        let w = u - v;
        let d = w.norm();
        let pfac = 1.0 - psi(d, r1, near.r2);
        if pfac <= 0.0 {
            continue;
        }
        let radial = pfac * d.powf(params.varrho) * grid.weight(j);
        let sq_u = sqrt_maxwellian(u);
        // Loss part K1: diagonal-free dense, angular factor done analytically
        // by the same discrete rule used for the gain.
        row_chi[j] -= radial * ang_b0 * sq_u * sq_v;
        scatter_gain(grid, rule, params.b0_kind, v, w, d, radial * sq_u, &mut row_chi);
    }

    // Near zone: radial-angular quadrature in w around v; carries the whole
    // 1-chi part and the psi-weighted chi part.
    for &(r, wr) in &near.radial {
        let chi_r = chi(r, params.eps_chi);
        let f_chi = chi_r * psi(r, r1, near.r2);
        let f_1mx = 1.0 - chi_r;
        if f_chi == 0.0 && f_1mx == 0.0 {
            continue;
        }
        for &(c, s, cp, sp, wd) in &rule.nodes {
            let dir = Vec3::new(s * cp, s * sp, c);
            let u = v + dir.scale(r);
            let sq_u = sqrt_maxwellian(u);
            let base = wr * wd;
            // K1 with trilinear gather adjoint at u.
            let amp1 = base * ang_b0 * sq_u * sq_v;
            if f_chi > 0.0 {
                scatter(grid, &mut row_chi, u, -amp1 * f_chi);
            }
            if f_1mx > 0.0 {
                scatter(grid, &mut row_1mx, u, -amp1 * f_1mx);
            }
            // K2 gain over scattering directions.
            scatter_gain_split(
                grid,
                rule,
                params.b0_kind,
                v,
                dir.scale(r),
                r,
                base * sq_u,
                f_chi,
                f_1mx,
                &mut row_chi,
                &mut row_1mx,
            );
        }
    }

    (row_chi, row_1mx)
}

/// Gain-term scatter for a far-zone pair: for each omega, deposit
/// amp b0 [sqrt_mu(v') at u' and sqrt_mu(u') at v'].
fn scatter_gain(
    grid: &VelocityGrid,
    rule: &SphereRule,
    b0: B0Kind,
    v: Vec3,
    w: Vec3,
    d: f64,
    amp: f64,
    row: &mut [f64],
) {
    let what = w.scale(1.0 / d);
    let (e2, e3) = what.orthonormal_frame();
    for &(c, s, cp, sp, wd) in &rule.nodes {
        let omega = what.scale(c) + (e2.scale(cp) + e3.scale(sp)).scale(s);
        let cc = d * c; // (u - v) . omega
        let vp = v + omega.scale(cc);
        let up = v + w - omega.scale(cc);
        let a = amp * b0.eval(c) * wd;
        scatter(grid, row, up, a * sqrt_maxwellian(vp));
        scatter(grid, row, vp, a * sqrt_maxwellian(up));
    }
}

#[allow(clippy::too_many_arguments)]
fn scatter_gain_split(
    grid: &VelocityGrid,
    rule: &SphereRule,
    b0: B0Kind,
    v: Vec3,
    w: Vec3,
    d: f64,
    amp: f64,
    f_chi: f64,
    f_1mx: f64,
    row_chi: &mut [f64],
    row_1mx: &mut [f64],
) {
    let what = w.scale(1.0 / d);
    let (e2, e3) = what.orthonormal_frame();
    for &(c, s, cp, sp, wd) in &rule.nodes {
        let omega = what.scale(c) + (e2.scale(cp) + e3.scale(sp)).scale(s);
        let cc = d * c;
        let vp = v + omega.scale(cc);
        let up = v + w - omega.scale(cc);
        let a = amp * b0.eval(c) * wd;
        let (gu, gv) = (a * sqrt_maxwellian(vp), a * sqrt_maxwellian(up));
        if f_chi > 0.0 {
            scatter(grid, row_chi, up, f_chi * gu);
            scatter(grid, row_chi, vp, f_chi * gv);
        }
        if f_1mx > 0.0 {
            scatter(grid, row_1mx, up, f_1mx * gu);
            scatter(grid, row_1mx, vp, f_1mx * gv);
        }
    }
}

/// Deposit `value` at the trilinear stencil of `p`; points outside the grid
/// hull are dropped (domain truncation).
fn scatter(grid: &VelocityGrid, row: &mut [f64], p: Vec3, value: f64) {
    if let Some(st) = grid.trilinear(p) {
        for (idx, w) in st {
            row[idx] += w * value;
        }
    }
}

/// Symmetrize in the quadrature inner product: M <- (M + W^{-1} M^T W)/2.
fn symmetrize(m: &mut [f64], grid: &VelocityGrid) {
    let n = grid.len();
    for i in 0..n {
        let wi = grid.weight(i);
        for j in (i + 1)..n {
            let wj = grid.weight(j);
            let a = m[i * n + j];
            let b = m[j * n + i];
            m[i * n + j] = 0.5 * (a + b * wj / wi);
            m[j * n + i] = 0.5 * (b + a * wi / wj);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    #[test]
    fn sphere_rule_integrates_constants_and_b0() {
        let rule = SphereRule::new(72);
        assert_eq!(rule.nodes.len(), 72);
        let total: f64 = rule.nodes.iter().map(|n| n.4).sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        let b0: f64 = rule.nodes.iter().map(|n| n.0.abs() * n.4).sum();
        assert!((b0 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        // Second moment of cos over the sphere: 4 pi / 3.
        let c2: f64 = rule.nodes.iter().map(|n| n.0 * n.0 * n.4).sum();
        assert!((c2 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn radial_rule_integrates_power_times_smooth() {
        // int_0^1 r^{rho+2} e^{-r} dr against adaptive quadrature, rho = -1.7.
        let rho = -1.7;
        let nodes = radial_rule(&[0.0, 0.35, 1.0], rho, 8);
        let approx: f64 = nodes.iter().map(|&(r, w)| w * (-r).exp()).sum();
        let f = |s: f64| {
            let r: f64 = s.powf(1.0 / (rho + 3.0));
            (-r).exp() / (rho + 3.0)
        };
        let exact = adaptive_simpson(&f, 0.0, 1.0, 1e-13, 50).unwrap();
        assert!((approx - exact).abs() < 1e-10, "{approx} vs {exact}");
    }

    #[test]
    fn psi_blend_partition() {
        assert_eq!(psi(0.1, 0.6, 1.8), 1.0);
        assert_eq!(psi(2.0, 0.6, 1.8), 0.0);
        let r = 1.2;
        let u = (r - 0.6) / 1.2;
        assert!((psi(r, 0.6, 1.8) - (1.0 - u * u * (3.0 - 2.0 * u))).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        let g = VelocityGrid::new(3.0, 6);
        let bad = AssemblyParams { eps_chi: -0.1, ..Default::default() };
        assert!(assemble_k(&g, &bad).is_err());
        let bad = AssemblyParams { n_omega: 8, ..Default::default() };
        assert!(assemble_k(&g, &bad).is_err());
        let bad = AssemblyParams { varrho: 0.5, ..Default::default() };
        assert!(assemble_k(&g, &bad).is_err());
    }
}
