//! Macroscopic projection onto the five collision invariants
//! {1, v1, v2, v3, (|v|^2 - 3)/2} sqrt(mu) under the grid quadrature inner
//! product.

use super::grid::VelocityGrid;
use crate::weights::sqrt_maxwellian;

/// Least-squares projector onto the discrete null space of L.
#[derive(Debug, Clone)]
pub struct MacroProjection {
    basis: [Vec<f64>; 5],
    gram_inv: [[f64; 5]; 5],
    weights: Vec<f64>,
}

impl MacroProjection {
    pub fn new(grid: &VelocityGrid) -> Self {
        let mk = |f: &dyn Fn(crate::vec3::Vec3) -> f64| -> Vec<f64> {
            grid.nodes().iter().map(|&v| f(v) * sqrt_maxwellian(v)).collect()
        };
        let basis = [
            mk(&|_| 1.0),
            mk(&|v| v.x),
            mk(&|v| v.y),
            mk(&|v| v.z),
            mk(&|v| 0.5 * (v.norm2() - 3.0)),
        ];
        let mut gram = [[0.0; 5]; 5];
        for a in 0..5 {
            for b in 0..5 {
                gram[a][b] = grid.inner(&basis[a], &basis[b]);
            }
        }
        let gram_inv = invert5(gram);
        MacroProjection { basis, gram_inv, weights: grid.quad_weights().to_vec() }
    }

    pub fn basis(&self) -> &[Vec<f64>; 5] {
        &self.basis
    }

    /// Coefficients of P f in the basis (a, b1, b2, b3, c).
    pub fn coefficients(&self, f: &[f64]) -> [f64; 5] {
        let mut rhs = [0.0; 5];
        for a in 0..5 {
            rhs[a] = self
                .basis[a]
                .iter()
                .zip(f)
                .zip(&self.weights)
                .map(|((b, x), w)| b * x * w)
                .sum();
        }
        let mut c = [0.0; 5];
        for a in 0..5 {
            for b in 0..5 {
                c[a] += self.gram_inv[a][b] * rhs[b];
            }
        }
        c
    }

    /// P f: the macroscopic part.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let c = self.coefficients(f);
        let mut out = vec![0.0; f.len()];
        for a in 0..5 {
            let ca = c[a];
            out.iter_mut().zip(&self.basis[a]).for_each(|(o, b)| *o += ca * b);
        }
        out
    }

    /// (I - P) f: the microscopic part.
    pub fn microscopic(&self, f: &[f64]) -> Vec<f64> {
        let p = self.project(f);
        f.iter().zip(&p).map(|(x, y)| x - y).collect()
    }
}

/// Dense 5x5 inverse by Gauss-Jordan with partial pivoting.
fn invert5(m: [[f64; 5]; 5]) -> [[f64; 5]; 5] {
    let mut a = m;
    let mut inv = [[0.0; 5]; 5];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..5 {
        let piv = (col..5)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
            .unwrap();
        assert!(a[piv][col].abs() > 1e-14, "macroscopic Gram matrix is singular");
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for k in 0..5 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..5 {
            if r != col {
                let factor = a[r][col];
                for k in 0..5 {
                    a[r][k] -= factor * a[col][k];
                    inv[r][k] -= factor * inv[col][k];
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn projection_idempotent_and_orthogonal() {
        let grid = VelocityGrid::new(6.0, 16);
        let mp = MacroProjection::new(&grid);
        let mut rng = CounterRng::new(77, 0);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.normal()).collect();
        let pf = mp.project(&f);
        let ppf = mp.project(&pf);
        let diff: f64 = pf.iter().zip(&ppf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "idempotence violated by {diff:e}");
        // (I - P) f orthogonal to every basis vector.
        let micro = mp.microscopic(&f);
        for b in mp.basis() {
            let ip = grid.inner(&micro, b);
            assert!(ip.abs() < 1e-10, "orthogonality violated: {ip:e}");
        }
    }

    #[test]
    fn projection_fixes_span_and_kills_complement() {
        let grid = VelocityGrid::new(6.0, 16);
        let mp = MacroProjection::new(&grid);
        // f in span: returned unchanged.
        let f: Vec<f64> = mp.basis()[0]
            .iter()
            .zip(&mp.basis()[4])
            .map(|(a, c)| 0.7 * a - 1.3 * c)
            .collect();
        let pf = mp.project(&f);
        let err: f64 = f.iter().zip(&pf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        // A microscopic field projects to (numerically) zero.
        let mut rng = CounterRng::new(78, 0);
        let g: Vec<f64> = (0..grid.len()).map(|_| rng.normal()).collect();
        let micro = mp.microscopic(&g);
        let pm = mp.project(&micro);
        let norm = grid.norm_l2(&pm);
        assert!(norm < 1e-10, "P on microscopic part: {norm:e}");
    }

    #[test]
    fn gram_matrix_diagonal_scales() {
        // On a wide grid the basis is nearly orthogonal: <sqrt mu, sqrt mu>
        // approaches sqrt(2 pi) (the Maxwellian mass) and cross terms vanish
        // by parity.
        let grid = VelocityGrid::new(6.0, 16);
        let mp = MacroProjection::new(&grid);
        let m00 = grid.inner(&mp.basis()[0], &mp.basis()[0]);
        assert!((m00 - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-3);
        let m01 = grid.inner(&mp.basis()[0], &mp.basis()[1]);
        assert!(m01.abs() < 1e-12);
    }
}
