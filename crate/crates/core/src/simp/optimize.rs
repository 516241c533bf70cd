//! Optimization layer: sensitivity filtering, the optimality-criteria
//! density update with a bisected volume multiplier, and the outer loop.

use super::{
    assemble_and_solve, compliance_and_sensitivity, DensityField, ProblemSpec, SimpError,
};

/// Classic sensitivity filter: weighted average of rho*dC over the disc of
/// radius `rmin` (element units), normalized by max(1e-3, rho_e) * sum(w).
pub fn filter_sensitivities(dc: &[f64], rho: &DensityField, rmin: f64) -> Vec<f64> {
    let (nx, ny) = (rho.nx, rho.ny);
    let reach = (rmin.ceil() as usize).saturating_sub(1) as isize;
    let mut out = vec![0.0; dc.len()];
    for ex in 0..nx as isize {
        for ey in 0..ny as isize {
            let mut num = 0.0;
            let mut den = 0.0;
            for jx in (ex - reach).max(0)..=(ex + reach).min(nx as isize - 1) {
                for jy in (ey - reach).max(0)..=(ey + reach).min(ny as isize - 1) {
                    let dist = (((ex - jx) * (ex - jx) + (ey - jy) * (ey - jy)) as f64).sqrt();
                    let w = rmin - dist;
                    if w > 0.0 {
                        let j = (jx * ny as isize + jy) as usize;
                        num += w * rho.values()[j] * dc[j];
                        den += w;
                    }
                }
            }
            let e = (ex * ny as isize + ey) as usize;
            out[e] = num / (rho.values()[e].max(1e-3) * den);
        }
    }
    out
}

/// Bisection record for one optimality-criteria update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcState {
    pub l1: f64,
    pub l2: f64,
    pub lambda_mid: f64,
    pub iterations: usize,
}

/// One optimality-criteria step: rho' = clamp(rho (-dC/lambda)^eta) within
/// the move limits and [0,1], with lambda bisected on [1e-9, 1e9] until the
/// bracket is relatively tight (< 1e-3) and mean(rho') hits the volume
/// fraction within 1e-4.
pub fn oc_update(
    rho: &DensityField,
    dc: &[f64],
    volfrac: f64,
    move_limit: f64,
    eta: f64,
) -> Result<(DensityField, OcState), SimpError> {
    let x = rho.values();
    let n = x.len() as f64;
    let mut l1 = 1e-9_f64;
    let mut l2 = 1e9_f64;
    let mut xnew = vec![0.0; x.len()];
    for it in 1..=100 {
        let lmid = 0.5 * (l1 + l2);
        for (i, (&xi, &di)) in x.iter().zip(dc).enumerate() {
            let b = xi * (-di / lmid).powf(eta);
            xnew[i] = b
                .min(1.0f64.min(xi + move_limit))
                .max(0.0f64.max(xi - move_limit));
        }
        let mean = xnew.iter().sum::<f64>() / n;
        if mean > volfrac {
            l1 = lmid;
        } else {
            l2 = lmid;
        }
        if (l2 - l1) / (l1 + l2) < 1e-3 && (mean - volfrac).abs() <= 1e-4 {
            let field = DensityField {
                nx: rho.nx,
                ny: rho.ny,
                rho: xnew,
            };
            return Ok((
                field,
                OcState {
                    l1,
                    l2,
                    lambda_mid: lmid,
                    iterations: it,
                },
            ));
        }
    }
    Err(SimpError::BisectionStalled { iterations: 100 })
}

/// Result of an optimization run. `converged` records whether the density
/// change dropped below the tolerance before the iteration cap; a capped run
/// still returns its (non-converged) final field.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub field: DensityField,
    pub compliance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Full SIMP loop from a uniform field at the volume fraction: solve,
/// differentiate, filter, update, until max |delta rho| < change_tol or the
/// iteration cap. The reported compliance comes from one extra solve on the
/// final field, so it matches `evaluate_compliance` on the result exactly.
pub fn optimize(spec: &ProblemSpec) -> Result<OptimizeResult, SimpError> {
    spec.validate()?;
    let mut rho = DensityField::uniform(spec.nx, spec.ny, spec.volfrac)?;
    let mut iterations = 0;
    let mut converged = false;
    let fail = |iteration: usize| {
        move |source: SimpError| SimpError::IterationFailed {
            iteration,
            source: Box::new(source),
        }
    };
    while iterations < spec.max_iterations {
        iterations += 1;
        let state = assemble_and_solve(&rho, spec).map_err(fail(iterations))?;
        let (_, dc) = compliance_and_sensitivity(&state, &rho, spec);
        let dcf = filter_sensitivities(&dc, &rho, spec.rmin);
        let (next, _) =
            oc_update(&rho, &dcf, spec.volfrac, spec.move_limit, 0.5).map_err(fail(iterations))?;
        let change = next
            .values()
            .iter()
            .zip(rho.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rho = next;
        if change < spec.change_tol {
            converged = true;
            break;
        }
    }
    let state = assemble_and_solve(&rho, spec).map_err(fail(iterations))?;
    let (compliance, _) = compliance_and_sensitivity(&state, &rho, spec);
    Ok(OptimizeResult {
        field: rho,
        compliance,
        iterations,
        converged,
    })
}
