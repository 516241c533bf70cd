//! Finite-element layer: Q4 plane-stress element stiffness, banded global
//! assembly with unit-diagonal treatment of fixed DOFs, and a banded
//! Cholesky solve with iterative refinement.

use super::{node, DensityField, ProblemSpec, SimpError};

/// Element stiffness of a unit-square bilinear quadrilateral, plane stress,
/// unit thickness and Young's modulus, as an 8x8 row-major array.
///
/// Built from the exact integer decomposition KE = ([A11 A12; A12' A11]
/// + nu [B11 B12; B12' B11]) / (24 (1 - nu^2)), DOF order counter-clockwise
/// from the lower-left node, (x, y) per node.
pub fn element_stiffness(nu: f64) -> Result<Vec<f64>, SimpError> {
    if !(0.0..0.5).contains(&nu) {
        return Err(SimpError::NuOutOfRange(nu));
    }
    const A11: [[i32; 4]; 4] = [
        [12, 3, -6, -3],
        [3, 12, 3, 0],
        [-6, 3, 12, -3],
        [-3, 0, -3, 12],
    ];
    const A12: [[i32; 4]; 4] = [
        [-6, -3, 0, 3],
        [-3, -6, -3, -6],
        [0, -3, -6, 3],
        [3, -6, 3, -6],
    ];
    const B11: [[i32; 4]; 4] = [
        [-4, 3, -2, 9],
        [3, -4, -9, 4],
        [-2, -9, -4, -3],
        [9, 4, -3, -4],
    ];
    const B12: [[i32; 4]; 4] = [
        [2, -3, 4, -9],
        [-3, 2, 9, -2],
        [4, 9, 2, 3],
        [-9, -2, 3, 2],
    ];
    let scale = 1.0 / (1.0 - nu * nu) / 24.0;
    let mut ke = vec![0.0; 64];
    for r in 0..8 {
        for c in 0..8 {
            let (a, b) = match (r < 4, c < 4) {
                (true, true) => (A11[r][c], B11[r][c]),
                (true, false) => (A12[r][c - 4], B12[r][c - 4]),
                // Lower-left block is the transpose of the upper-right one.
                (false, true) => (A12[c][r - 4], B12[c][r - 4]),
                (false, false) => (A11[r - 4][c - 4], B11[r - 4][c - 4]),
            };
            ke[r * 8 + c] = scale * (a as f64 + nu * b as f64);
        }
    }
    Ok(ke)
}

/// Global DOF indices of element (ex, ey): nodes counter-clockwise from the
/// lower-left corner, (x, y) DOF per node.
#[inline]
pub(crate) fn element_dofs(ex: usize, ey: usize, ny: usize) -> [usize; 8] {
    let ll = node(ex, ey + 1, ny);
    let lr = node(ex + 1, ey + 1, ny);
    let ur = node(ex + 1, ey, ny);
    let ul = node(ex, ey, ny);
    [
        2 * ll,
        2 * ll + 1,
        2 * lr,
        2 * lr + 1,
        2 * ur,
        2 * ur + 1,
        2 * ul,
        2 * ul + 1,
    ]
}

/// Symmetric banded matrix, lower band stored row-wise: row i holds columns
/// i-bw..=i contiguously, so the Cholesky inner products run over slices.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx(i, j);
        self.data[idx] += v;
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx(i, j);
        self.data[idx] = v;
    }

    /// y = A x with the full symmetric matrix implied by the lower band.
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1) + (lo + self.bw - i)..i * (self.bw + 1) + self.bw + 1];
            let mut diag_acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = lo + k;
                if j < i {
                    diag_acc += a * x[j];
                    y[j] += a * x[i];
                } else {
                    diag_acc += a * x[j];
                }
            }
            y[i] += diag_acc;
        }
    }

    /// In-place Cholesky of the lower band; fails on a non-positive pivot.
    fn factor(&mut self) -> Result<(), SimpError> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let klo = j.saturating_sub(self.bw).max(lo);
                // dot over columns klo..j of rows i and j
                let off_i = i * w + (klo + self.bw - i);
                let off_j = j * w + (klo + self.bw - j);
                let len = j - klo;
                let mut sum = 0.0;
                for k in 0..len {
                    sum += self.data[off_i + k] * self.data[off_j + k];
                }
                let a = self.data[i * w + (j + self.bw - i)] - sum;
                if i == j {
                    if a <= 0.0 || !a.is_finite() {
                        return Err(SimpError::SingularSystem { pivot: i });
                    }
                    self.data[i * w + self.bw] = a.sqrt();
                } else {
                    self.data[i * w + (j + self.bw - i)] = a / self.data[j * w + self.bw];
                }
            }
        }
        Ok(())
    }

    /// Solves L L' x = b given the factored band.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut x = b.to_vec();
        // Forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let off = i * w + (lo + self.bw - i);
            let mut sum = x[i];
            for (k, j) in (lo..i).enumerate() {
                sum -= self.data[off + k] * x[j];
            }
            x[i] = sum / self.data[i * w + self.bw];
        }
        // Backward: L' x = y
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut sum = x[i];
            for j in i + 1..=hi {
                sum -= self.data[j * w + (i + self.bw - j)] * x[j];
            }
            x[i] = sum / self.data[i * w + self.bw];
        }
        x
    }
}

/// Solved state of one FE problem instance.
#[derive(Debug, Clone)]
pub struct FeState {
    /// Global displacements (fixed DOFs exactly zero).
    pub u: Vec<f64>,
    /// Global force vector as assembled from the spec's loads.
    pub f: Vec<f64>,
    /// Unit-modulus element stiffness used for this mesh, 8x8 row-major.
    pub ke: Vec<f64>,
    /// Relative free-DOF residual achieved by the solve.
    pub residual: f64,
    pub e0: f64,
    pub e1: f64,
    pub nu: f64,
}

/// Assembles the SIMP-interpolated global stiffness (E = E0 + rho^p (E1-E0)),
/// applies supports by zeroing fixed rows/columns with a unit diagonal, and
/// solves to a relative residual below 1e-9, refining iteratively if needed.
pub fn assemble_and_solve(
    rho: &DensityField,
    spec: &ProblemSpec,
) -> Result<FeState, SimpError> {
    spec.validate()?;
    if rho.nx != spec.nx || rho.ny != spec.ny {
        return Err(SimpError::WrongDensityLength {
            expected: spec.elements(),
            actual: rho.nx * rho.ny,
        });
    }
    let ke = element_stiffness(spec.nu)?;
    let ndof = spec.ndof();
    let bw = 2 * (spec.ny + 1) + 3;
    let mut kmat = BandMatrix::zeros(ndof, bw.min(ndof - 1));

    for ex in 0..spec.nx {
        for ey in 0..spec.ny {
            let r = rho.get(ex, ey);
            let e = spec.e0 + r.powf(spec.penal) * (spec.e1 - spec.e0);
            let dofs = element_dofs(ex, ey, spec.ny);
            for a in 0..8 {
                for b in 0..8 {
                    let (i, j) = (dofs[a], dofs[b]);
                    if i >= j {
                        kmat.add(i, j, e * ke[a * 8 + b]);
                    }
                }
            }
        }
    }

    let mut f = vec![0.0; ndof];
    for &(dof, mag) in &spec.loads {
        f[dof] += mag;
    }

    // Supports: zero the fixed rows and columns, unit diagonal, zero RHS.
    let mut fixed = vec![false; ndof];
    for &dof in &spec.fixed_dofs {
        fixed[dof] = true;
    }
    let bwna = kmat.bw;
    for d in 0..ndof {
        if fixed[d] {
            for j in d.saturating_sub(bwna)..=d {
                kmat.set(d, j, 0.0);
            }
            for i in d + 1..(d + bwna + 1).min(ndof) {
                kmat.set(i, d, 0.0);
            }
            kmat.set(d, d, 1.0);
            f[d] = 0.0;
        }
    }

    let mut factored = kmat.clone();
    factored.factor()?;
    let mut u = factored.solve(&f);

    let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut residual = f64::INFINITY;
    let mut r = vec![0.0; ndof];
    for _ in 0..6 {
        kmat.matvec(&u, &mut r);
        for (ri, fi) in r.iter_mut().zip(&f) {
            *ri = fi - *ri;
        }
        residual = r.iter().map(|v| v * v).sum::<f64>().sqrt() / f_norm;
        if residual < 1e-9 {
            break;
        }
        let du = factored.solve(&r);
        for (ui, di) in u.iter_mut().zip(&du) {
            *ui += di;
        }
    }
    if !(residual < 1e-9) {
        return Err(SimpError::ResidualTooLarge { residual });
    }
    // Pin fixed DOFs to exact zeros (they already solve to ~0 by construction).
    for d in 0..ndof {
        if fixed[d] {
            u[d] = 0.0;
        }
    }
    Ok(FeState {
        u,
        f,
        ke,
        residual,
        e0: spec.e0,
        e1: spec.e1,
        nu: spec.nu,
    })
}

/// Per-element strain energy q_e = u_e' KE u_e for the unit modulus.
fn element_energy(state: &FeState, ex: usize, ey: usize, ny: usize) -> f64 {
    let dofs = element_dofs(ex, ey, ny);
    let mut ue = [0.0; 8];
    for (k, &d) in dofs.iter().enumerate() {
        ue[k] = state.u[d];
    }
    let mut q = 0.0;
    for a in 0..8 {
        let mut row = 0.0;
        for b in 0..8 {
            row += state.ke[a * 8 + b] * ue[b];
        }
        q += ue[a] * row;
    }
    q
}

/// Compliance C = sum_e E_e q_e and its density gradient
/// dC_e = -p rho_e^(p-1) (E1-E0) q_e (self-adjoint, no extra solve).
pub fn compliance_and_sensitivity(
    state: &FeState,
    rho: &DensityField,
    spec: &ProblemSpec,
) -> (f64, Vec<f64>) {
    let mut c = 0.0;
    let mut dc = vec![0.0; spec.elements()];
    for ex in 0..spec.nx {
        for ey in 0..spec.ny {
            let q = element_energy(state, ex, ey, spec.ny);
            let r = rho.get(ex, ey);
            c += (spec.e0 + r.powf(spec.penal) * (spec.e1 - spec.e0)) * q;
            dc[ex * spec.ny + ey] =
                -spec.penal * r.powf(spec.penal - 1.0) * (spec.e1 - spec.e0) * q;
        }
    }
    (c, dc)
}

/// One FE solve and the compliance of an arbitrary density field, evaluated
/// as-is (no thresholding).
pub fn evaluate_compliance(rho: &DensityField, spec: &ProblemSpec) -> Result<f64, SimpError> {
    let state = assemble_and_solve(rho, spec)?;
    Ok(compliance_and_sensitivity(&state, rho, spec).0)
}
