//! Collision frequency, kernel matrices with the smooth cutoff split
//! K = K^chi + K^{1-chi}, the linearized operator L = nu - K, the macroscopic
//! projection, and the bilinear collision operator Gamma.

pub mod assemble;
pub mod frequency;
pub mod gamma;
pub mod grid;
pub mod macro_proj;

pub use assemble::{assemble_k, AssemblyParams};
pub use frequency::{nu_speed, B0Kind, NuRadialTable};
pub use gamma::gamma;
pub use grid::VelocityGrid;
pub use macro_proj::MacroProjection;

use crate::quad::QuadError;
use crate::vec3::Vec3;
use rayon::prelude::*;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CollisionError {
    #[error("quadrature did not converge: {0}")]
    Quadrature(#[from] QuadError),
    #[error("omega is not a unit vector (|omega| = {0})")]
    NonUnitOmega(f64),
    #[error("velocity nodes coincide off the diagonal; grid is malformed")]
    SingularSeparation,
    #[error("invalid assembly parameters: {0}")]
    InvalidParams(String),
    #[error("operator cache i/o: {0}")]
    CacheIo(#[from] io::Error),
    #[error("operator cache does not match the requested parameters")]
    CacheMismatch,
}

/// Post-collision velocities for the omega-representation of the collision
/// sphere: v' = v + [(u - v).omega] omega, u' = u - [(u - v).omega] omega.
/// Momentum and kinetic energy are conserved identically.
pub fn post_collision(u: Vec3, v: Vec3, omega: Vec3) -> Result<(Vec3, Vec3), CollisionError> {
    let n2 = omega.norm2();
    if (n2 - 1.0).abs() > 2e-12 {
        return Err(CollisionError::NonUnitOmega(n2.sqrt()));
    }
    let c = (u - v).dot(omega);
    Ok((u - omega.scale(c), v + omega.scale(c)))
}

/// Smooth cutoff: 0 for s <= eps, 1 for s >= 2 eps, cubic smoothstep between.
pub fn chi(s: f64, eps: f64) -> f64 {
    if s <= eps {
        0.0
    } else if s >= 2.0 * eps {
        1.0
    } else {
        let u = (s - eps) / eps;
        u * u * (3.0 - 2.0 * u)
    }
}

/// Which part of the split kernel to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    Full,
    Chi,
    OneMinusChi,
}

/// Precomputed collision operator on a velocity grid: the frequency vector
/// and dense kernel matrices (full kernel and its cutoff split). Matrices act
/// on node-value vectors; quadrature weights are baked into the entries.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub params: AssemblyParams,
    n3: usize,
    pub nu: Vec<f64>,
    k_chi: Vec<f64>,
    k_one_minus_chi: Vec<f64>,
    k_full: Vec<f64>,
}

impl CollisionOperator {
    pub(crate) fn from_parts(
        params: AssemblyParams,
        n3: usize,
        nu: Vec<f64>,
        k_chi: Vec<f64>,
        k_one_minus_chi: Vec<f64>,
    ) -> Self {
        let k_full = if k_chi.is_empty() {
            Vec::new()
        } else {
            k_chi.iter().zip(&k_one_minus_chi).map(|(a, b)| a + b).collect()
        };
        CollisionOperator { params, n3, nu, k_chi, k_one_minus_chi, k_full }
    }

    /// A frequency-only operator (zero kernel); used for transport-only runs.
    pub fn nu_only(grid: &VelocityGrid, varrho: f64, b0: B0Kind) -> Result<Self, CollisionError> {
        let nu = frequency_vector(grid, varrho, b0)?;
        Ok(CollisionOperator {
            params: AssemblyParams { varrho, eps_chi: 0.0, b0_kind: b0, n_omega: 0 },
            n3: grid.len(),
            nu,
            k_chi: Vec::new(),
            k_one_minus_chi: Vec::new(),
            k_full: Vec::new(),
        })
    }

    pub fn matrix(&self, part: KernelPart) -> &[f64] {
        match part {
            KernelPart::Full => &self.k_full,
            KernelPart::Chi => &self.k_chi,
            KernelPart::OneMinusChi => &self.k_one_minus_chi,
        }
    }

    pub fn dim(&self) -> usize {
        self.n3
    }

    pub fn has_kernel(&self) -> bool {
        !self.k_full.is_empty()
    }

    /// K f (full kernel), parallel over rows.
    pub fn apply_k(&self, f: &[f64]) -> Vec<f64> {
        self.apply_part(KernelPart::Full, f)
    }

    pub fn apply_part(&self, part: KernelPart, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n3);
        let m = self.matrix(part);
        if m.is_empty() {
            return vec![0.0; self.n3];
        }
        let mut out = vec![0.0; self.n3];
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &m[i * self.n3..(i + 1) * self.n3];
            *o = row.iter().zip(f).map(|(a, b)| a * b).sum();
        });
        out
    }

    /// L f = nu f - K f.
    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.apply_k(f);
        out.iter_mut().zip(f.iter().zip(&self.nu)).for_each(|(o, (fi, nui))| {
            *o = nui * fi - *o;
        });
        out
    }

    /// L-infinity -> L-infinity norm of the weight-conjugated kernel part:
    /// max_i sum_j |M_ij| w(v_i) / w(v_j).
    pub fn weighted_sup_norm<W: Fn(Vec3) -> f64 + Sync>(
        &self,
        part: KernelPart,
        grid: &VelocityGrid,
        w: W,
    ) -> f64 {
        let m = self.matrix(part);
        if m.is_empty() {
            return 0.0;
        }
        let winv: Vec<f64> = grid.nodes().iter().map(|&u| 1.0 / w(u)).collect();
        (0..self.n3)
            .into_par_iter()
            .map(|i| {
                let row = &m[i * self.n3..(i + 1) * self.n3];
                let s: f64 = row.iter().zip(&winv).map(|(a, wi)| a.abs() * wi).sum();
                s * w(grid.node(i))
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Weighted absolute row sum for a single row.
    pub fn weighted_row_sum<W: Fn(Vec3) -> f64>(
        &self,
        part: KernelPart,
        grid: &VelocityGrid,
        row: usize,
        w: W,
    ) -> f64 {
        let m = self.matrix(part);
        let r = &m[row * self.n3..(row + 1) * self.n3];
        let wi = w(grid.node(row));
        r.iter()
            .enumerate()
            .map(|(j, a)| a.abs() * wi / w(grid.node(j)))
            .sum()
    }

    /// Binary cache with a version header; keyed by the assembly parameters.
    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<(), CollisionError> {
        out.write_all(b"BLKC")?;
        write_u32(&mut out, 2)?;
        write_f64(&mut out, self.params.varrho)?;
        write_f64(&mut out, self.params.eps_chi)?;
        write_u32(&mut out, 0)?; // b0 kind tag: abs_cos
        write_u32(&mut out, self.params.n_omega as u32)?;
        write_u32(&mut out, self.n3 as u32)?;
        for v in &self.nu {
            write_f64(&mut out, *v)?;
        }
        for m in [&self.k_chi, &self.k_one_minus_chi] {
            write_u32(&mut out, m.len() as u32)?;
            for v in m {
                write_f64(&mut out, *v)?;
            }
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut input: R, expect: &AssemblyParams) -> Result<Self, CollisionError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"BLKC" || read_u32(&mut input)? != 2 {
            return Err(CollisionError::CacheMismatch);
        }
        let varrho = read_f64(&mut input)?;
        let eps_chi = read_f64(&mut input)?;
        let _b0 = read_u32(&mut input)?;
        let n_omega = read_u32(&mut input)? as usize;
        if varrho != expect.varrho || eps_chi != expect.eps_chi || n_omega != expect.n_omega {
            return Err(CollisionError::CacheMismatch);
        }
        let n3 = read_u32(&mut input)? as usize;
        let mut nu = vec![0.0; n3];
        for v in &mut nu {
            *v = read_f64(&mut input)?;
        }
        let mut mats = Vec::new();
        for _ in 0..2 {
            let len = read_u32(&mut input)? as usize;
            let mut m = vec![0.0; len];
            for v in &mut m {
                *v = read_f64(&mut input)?;
            }
            mats.push(m);
        }
        let k_1mx = mats.pop().unwrap();
        let k_chi = mats.pop().unwrap();
        Ok(CollisionOperator::from_parts(*expect, n3, nu, k_chi, k_1mx))
    }
}

/// nu(v) over all grid nodes by radial quadrature, parallel over nodes.
pub fn frequency_vector(
    grid: &VelocityGrid,
    varrho: f64,
    b0: B0Kind,
) -> Result<Vec<f64>, CollisionError> {
    if !(varrho > -3.0 && varrho < 0.0) {
        return Err(CollisionError::InvalidParams(format!(
            "varrho must lie in (-3, 0), got {varrho}"
        )));
    }
    let out: Result<Vec<f64>, QuadError> = grid
        .nodes()
        .par_iter()
        .map(|v| nu_speed(v.norm(), varrho, b0))
        .collect();
    Ok(out?)
}

fn write_u32<W: Write>(out: &mut W, v: u32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(out: &mut W, v: f64) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
