//! Bilinear collision operator Gamma(f, g) = gain - loss on the velocity
//! grid, evaluated by direct quadrature with the same near/far partition as
//! the kernel assembly. Post-collision arguments are gathered by trilinear
//! interpolation.

use super::assemble::{AssemblyParams, SphereRule};
use super::grid::VelocityGrid;
use crate::quad::gauss_legendre_on;
use crate::vec3::Vec3;
use crate::weights::sqrt_maxwellian;
use rayon::prelude::*;

/// Gamma(f, g)(v) = int |v-u|^rho b0 sqrt_mu(u) [f(u') g(v') - f(u) g(v)].
///
/// The chi split plays no role here; the full radial factor is integrated,
/// with the singular near zone handled by the sigma = r^{rho+3} substitution.
pub fn gamma(grid: &VelocityGrid, params: &AssemblyParams, f: &[f64], g: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), grid.len());
    assert_eq!(g.len(), grid.len());
    let rule = SphereRule::new(params.n_omega.max(32));
    let ang_b0: f64 = rule.nodes.iter().map(|&(c, _, _, _, w)| params.b0_kind.eval(c) * w).sum();
    let spacing = grid.spacing();
    let r1 = 0.75 * spacing;
    let r2 = r1 + 1.5 * spacing;
    let p = params.varrho + 3.0;
    let mut radial: Vec<(f64, f64)> = Vec::new();
    for seg in [[0.0, r1], [r1, r2]] {
        let (sg, wg) = gauss_legendre_on(8, seg[0].powf(p), seg[1].powf(p));
        for (s, wq) in sg.iter().zip(&wg) {
            radial.push((s.powf(1.0 / p), wq / p));
        }
    }

    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let v = grid.node(i);
            let mut gain = 0.0;
            let mut loss_freq = 0.0;

            // Far zone over grid nodes.
            for j in 0..grid.len() {
                if j == i {
                    continue;
                }
                let u = grid.node(j);
                let w = u - v;
                let d = w.norm();
                let pfac = 1.0 - blend(d, r1, r2);
                if pfac <= 0.0 {
                    continue;
                }
                let radial_w = pfac * d.powf(params.varrho) * grid.weight(j);
                let sq_u = sqrt_maxwellian(u);
                loss_freq += radial_w * ang_b0 * sq_u * f[j];
                let what = w.scale(1.0 / d);
                let (e2, e3) = what.orthonormal_frame();
                for &(c, s, cp, sp, wd) in &rule.nodes {
                    let omega = what.scale(c) + (e2.scale(cp) + e3.scale(sp)).scale(s);
                    let cc = d * c;
                    let vp = v + omega.scale(cc);
                    let up = u - omega.scale(cc);
                    gain += radial_w
                        * params.b0_kind.eval(c)
                        * wd
                        * sq_u
                        * grid.interpolate(f, up)
                        * grid.interpolate(g, vp);
                }
            }

            // Near zone.
            for &(r, wr) in &radial {
                let f_near = blend(r, r1, r2);
                if f_near <= 0.0 {
                    continue;
                }
                for &(c0, s0, cp0, sp0, wd0) in &rule.nodes {
                    let dir = Vec3::new(s0 * cp0, s0 * sp0, c0);
                    let u = v + dir.scale(r);
                    let sq_u = sqrt_maxwellian(u);
                    let base = wr * wd0 * f_near;
                    loss_freq += base * ang_b0 * sq_u * grid.interpolate(f, u);
                    let (e2, e3) = dir.orthonormal_frame();
                    for &(c, s, cp, sp, wd) in &rule.nodes {
                        let omega = dir.scale(c) + (e2.scale(cp) + e3.scale(sp)).scale(s);
                        let cc = r * c;
                        let vp = v + omega.scale(cc);
                        let up = u - omega.scale(cc);
                        gain += base
                            * params.b0_kind.eval(c)
                            * wd
                            * sq_u
                            * grid.interpolate(f, up)
                            * grid.interpolate(g, vp);
                    }
                }
            }

            gain - loss_freq * g[i]
        })
        .collect()
}

/// Ascending-to-descending blend: 1 below r1, 0 above r2 (same smoothstep as
/// the assembly's near/far partition).
fn blend(r: f64, r1: f64, r2: f64) -> f64 {
    if r <= r1 {
        1.0
    } else if r >= r2 {
        0.0
    } else {
        let u = (r - r1) / (r2 - r1);
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}
