//! Density-based topology optimization on a regular 2D grid: modified-SIMP
//! material interpolation, a banded direct FE solver, sensitivity filtering,
//! and the optimality-criteria update.
//!
//! Conventions follow the classic 88-line layout: nodes are numbered
//! column-major (`n = ix*(ny+1) + iy`, y growing downward), each node carries
//! (x, y) DOFs `2n` and `2n+1`, and element (ex, ey) stores its density at
//! `ex*ny + ey`.

mod fe;
mod optimize;

pub use fe::{
    assemble_and_solve, compliance_and_sensitivity, element_stiffness, evaluate_compliance,
    FeState,
};
pub use optimize::{filter_sensitivities, oc_update, optimize, OcState, OptimizeResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimpError {
    #[error("mesh must have at least one element per axis, got {nx}x{ny}")]
    EmptyMesh { nx: usize, ny: usize },
    #[error("volume fraction {0} outside (0, 1]")]
    BadVolfrac(f64),
    #[error("penalization {0} must be at least 1")]
    BadPenal(f64),
    #[error("filter radius {0} must be at least 1 element")]
    BadRmin(f64),
    #[error("move limit {0} must be positive")]
    BadMove(f64),
    #[error("change tolerance {0} must be positive")]
    BadChangeTol(f64),
    #[error("Poisson ratio {0} outside [0, 0.5)")]
    NuOutOfRange(f64),
    #[error("Young's moduli must satisfy 0 < E0 < E1, got E0={e0}, E1={e1}")]
    BadModuli { e0: f64, e1: f64 },
    #[error("no fixed DOFs: the structure would float")]
    NoSupports,
    #[error("no loads applied")]
    NoLoads,
    #[error("DOF index {dof} out of range for {ndof} DOFs")]
    DofOutOfRange { dof: usize, ndof: usize },
    #[error("density field length {actual}, mesh needs {expected}")]
    WrongDensityLength { expected: usize, actual: usize },
    #[error("density [{index}] = {value} outside [0, 1]")]
    BadDensityValue { index: usize, value: f64 },
    #[error("stiffness matrix not positive definite at pivot {pivot}: structure is under-constrained or degenerate")]
    SingularSystem { pivot: usize },
    #[error("FE residual {residual:.3e} did not reach 1e-9 after refinement")]
    ResidualTooLarge { residual: f64 },
    #[error("volume-constraint bisection stalled after {iterations} iterations")]
    BisectionStalled { iterations: usize },
    #[error("optimization failed at iteration {iteration}")]
    IterationFailed {
        iteration: usize,
        #[source]
        source: Box<SimpError>,
    },
}

/// The three benchmark load cases, plus an escape hatch for hand-built specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    MidLoad,
    CantileverCenterLoad,
    CantileverEndLoad,
    Custom,
}

/// A complete problem description: mesh, supports, loads, material, and the
/// optimizer's knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub nx: usize,
    pub ny: usize,
    pub preset: Preset,
    /// Global DOF indices held at zero displacement.
    pub fixed_dofs: Vec<usize>,
    /// (global DOF index, force magnitude) pairs.
    pub loads: Vec<(usize, f64)>,
    pub volfrac: f64,
    pub penal: f64,
    pub rmin: f64,
    pub max_iterations: usize,
    pub move_limit: f64,
    pub change_tol: f64,
    pub e0: f64,
    pub e1: f64,
    pub nu: f64,
}

impl ProblemSpec {
    pub fn ndof(&self) -> usize {
        2 * (self.nx + 1) * (self.ny + 1)
    }

    pub fn elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn validate(&self) -> Result<(), SimpError> {
        if self.nx == 0 || self.ny == 0 {
            return Err(SimpError::EmptyMesh {
                nx: self.nx,
                ny: self.ny,
            });
        }
        if !(self.volfrac > 0.0 && self.volfrac <= 1.0) {
            return Err(SimpError::BadVolfrac(self.volfrac));
        }
        if !(self.penal >= 1.0) {
            return Err(SimpError::BadPenal(self.penal));
        }
        if !(self.rmin >= 1.0) {
            return Err(SimpError::BadRmin(self.rmin));
        }
        if !(self.move_limit > 0.0) {
            return Err(SimpError::BadMove(self.move_limit));
        }
        if !(self.change_tol > 0.0) {
            return Err(SimpError::BadChangeTol(self.change_tol));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(SimpError::NuOutOfRange(self.nu));
        }
        if !(self.e0 > 0.0 && self.e0 < self.e1) {
            return Err(SimpError::BadModuli {
                e0: self.e0,
                e1: self.e1,
            });
        }
        if self.fixed_dofs.is_empty() {
            return Err(SimpError::NoSupports);
        }
        if self.loads.is_empty() {
            return Err(SimpError::NoLoads);
        }
        let ndof = self.ndof();
        for &dof in &self.fixed_dofs {
            if dof >= ndof {
                return Err(SimpError::DofOutOfRange { dof, ndof });
            }
        }
        for &(dof, _) in &self.loads {
            if dof >= ndof {
                return Err(SimpError::DofOutOfRange { dof, ndof });
            }
        }
        Ok(())
    }
}

/// Node index for grid position (ix, iy), column-major.
#[inline]
pub(crate) fn node(ix: usize, iy: usize, ny: usize) -> usize {
    ix * (ny + 1) + iy
}

/// One of the named benchmark problems with the standard solver defaults.
pub fn preset(p: Preset, nx: usize, ny: usize, volfrac: f64) -> ProblemSpec {
    let (fixed_dofs, loads) = match p {
        Preset::MidLoad => {
            // Simply supported along the bottom: left corner pinned, right
            // corner on a vertical roller; unit downward load at top middle.
            let left = node(0, ny, ny);
            let right = node(nx, ny, ny);
            let mid_top = node(nx / 2, 0, ny);
            (
                vec![2 * left, 2 * left + 1, 2 * right + 1],
                vec![(2 * mid_top + 1, -1.0)],
            )
        }
        Preset::CantileverCenterLoad => {
            let fixed = (0..=ny).flat_map(|iy| {
                let n = node(0, iy, ny);
                [2 * n, 2 * n + 1]
            });
            let tip = node(nx, ny / 2, ny);
            (fixed.collect(), vec![(2 * tip + 1, -1.0)])
        }
        Preset::CantileverEndLoad => {
            let fixed = (0..=ny).flat_map(|iy| {
                let n = node(0, iy, ny);
                [2 * n, 2 * n + 1]
            });
            let corner = node(nx, ny, ny);
            (fixed.collect(), vec![(2 * corner + 1, -1.0)])
        }
        Preset::Custom => (vec![], vec![]),
    };
    ProblemSpec {
        nx,
        ny,
        preset: p,
        fixed_dofs,
        loads,
        volfrac,
        penal: 3.0,
        rmin: 2.4,
        max_iterations: 300,
        move_limit: 0.2,
        change_tol: 0.01,
        e0: 1e-9,
        e1: 1.0,
        nu: 0.3,
    }
}

/// Element densities on the nx x ny grid, element (ex, ey) at `ex*ny + ey`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nx: usize,
    pub ny: usize,
    rho: Vec<f64>,
}

impl DensityField {
    pub fn uniform(nx: usize, ny: usize, value: f64) -> Result<Self, SimpError> {
        Self::from_vec(nx, ny, vec![value; nx * ny])
    }

    pub fn from_vec(nx: usize, ny: usize, rho: Vec<f64>) -> Result<Self, SimpError> {
        if rho.len() != nx * ny {
            return Err(SimpError::WrongDensityLength {
                expected: nx * ny,
                actual: rho.len(),
            });
        }
        if let Some((index, &value)) = rho
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v) || v.is_nan())
        {
            return Err(SimpError::BadDensityValue { index, value });
        }
        Ok(DensityField { nx, ny, rho })
    }

    #[inline]
    pub fn get(&self, ex: usize, ey: usize) -> f64 {
        self.rho[ex * self.ny + ey]
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn mean(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}
