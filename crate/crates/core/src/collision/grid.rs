//! Uniform Cartesian velocity grid on [-V_max, V_max]^3 with trapezoid
//! quadrature weights, indexing, and trilinear interpolation.

use crate::vec3::Vec3;

/// Discretization of velocity space. The node count per axis is even, so the
/// grid is symmetric about the origin (for every node v, -v is a node) and
/// contains no exact zero node.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    half_width: f64,
    n: usize,
    spacing: f64,
    axis: Vec<f64>,
    axis_weights: Vec<f64>,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
}

impl VelocityGrid {
    /// `points_per_axis` must be even and at least 4.
    pub fn new(half_width: f64, points_per_axis: usize) -> Self {
        assert!(points_per_axis >= 4 && points_per_axis % 2 == 0, "points_per_axis must be even and >= 4");
        assert!(half_width > 0.0);
        let n = points_per_axis;
        let spacing = 2.0 * half_width / (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|i| -half_width + spacing * i as f64).collect();
        let axis_weights: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * spacing } else { spacing })
            .collect();
        let mut nodes = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    nodes.push(Vec3::new(axis[ix], axis[iy], axis[iz]));
                    weights.push(axis_weights[ix] * axis_weights[iy] * axis_weights[iz]);
                }
            }
        }
        VelocityGrid { half_width, n, spacing, axis, axis_weights, nodes, weights }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        self.nodes[idx]
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let iz = idx % self.n;
        let iy = (idx / self.n) % self.n;
        let ix = idx / (self.n * self.n);
        (ix, iy, iz)
    }

    /// Index of -v for the node at `idx`.
    pub fn opposite_index(&self, idx: usize) -> usize {
        let (ix, iy, iz) = self.unindex(idx);
        self.index(self.n - 1 - ix, self.n - 1 - iy, self.n - 1 - iz)
    }

    /// Index of the node with the first velocity component flipped.
    pub fn mirror_x_index(&self, idx: usize) -> usize {
        let (ix, iy, iz) = self.unindex(idx);
        self.index(self.n - 1 - ix, iy, iz)
    }

    /// Quadrature inner product sum_i a_i b_i w_i.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    /// Quadrature of a single field.
    pub fn integrate(&self, a: &[f64]) -> f64 {
        a.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    pub fn norm_l2(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Trilinear interpolation stencil at `p`: up to eight (node, weight)
    /// pairs summing to one, or `None` when `p` lies outside the grid hull.
    pub fn trilinear(&self, p: Vec3) -> Option<[(usize, f64); 8]> {
        let (i0, a) = self.cell_coord(p.x)?;
        let (j0, b) = self.cell_coord(p.y)?;
        let (k0, c) = self.cell_coord(p.z)?;
        let out = [
            (self.index(i0, j0, k0), (1.0 - a) * (1.0 - b) * (1.0 - c)),
            (self.index(i0 + 1, j0, k0), a * (1.0 - b) * (1.0 - c)),
            (self.index(i0, j0 + 1, k0), (1.0 - a) * b * (1.0 - c)),
            (self.index(i0, j0, k0 + 1), (1.0 - a) * (1.0 - b) * c),
            (self.index(i0 + 1, j0 + 1, k0), a * b * (1.0 - c)),
            (self.index(i0 + 1, j0, k0 + 1), a * (1.0 - b) * c),
            (self.index(i0, j0 + 1, k0 + 1), (1.0 - a) * b * c),
            (self.index(i0 + 1, j0 + 1, k0 + 1), a * b * c),
        ];
        Some(out)
    }

    fn cell_coord(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x + self.half_width) / self.spacing;
        if !(-1e-9..=(self.n - 1) as f64 + 1e-9).contains(&u) {
            return None;
        }
        let mut i0 = u.floor() as isize;
        if i0 < 0 {
            i0 = 0;
        }
        let mut i0 = i0 as usize;
        if i0 >= self.n - 1 {
            i0 = self.n - 2;
        }
        let a = (u - i0 as f64).clamp(0.0, 1.0);
        Some((i0, a))
    }

    /// Interpolate a grid field at `p`; zero outside the hull.
    pub fn interpolate(&self, field: &[f64], p: Vec3) -> f64 {
        match self.trilinear(p) {
            Some(st) => st.iter().map(|&(i, w)| w * field[i]).sum(),
            None => 0.0,
        }
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis
    }

    pub fn axis_weight(&self, i: usize) -> f64 {
        self.axis_weights[i]
    }
}
