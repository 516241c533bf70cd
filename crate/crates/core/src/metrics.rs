//! Volume-fraction and compliance error metrics comparing network
//! predictions against solver ground truth, plus CSV reporting.

use crate::dataset::{self, Dataset, DatasetError};
use crate::network::{Model, NetworkError};
use crate::simp::{self, evaluate_compliance, optimize, DensityField, Preset, ProblemSpec,
    SimpError};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("volume fraction {0} outside (0, 1]")]
    BadVolfrac(f64),
    #[error("reference compliance {0} must be positive")]
    BadCompliance(f64),
    #[error("model does not expose a square input image")]
    NoInputShape,
    #[error("model expects {side}x{side} images, dataset holds {nx}x{ny}")]
    GridMismatch { side: usize, nx: usize, ny: usize },
    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Simp(#[from] SimpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// One evaluated volume fraction: both error percentages and the raw
/// compliances they came from.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub volfrac: f64,
    pub v_err: f64,
    pub c_err: f64,
    pub c_opt: f64,
    pub c_cnn: f64,
    pub model_tag: String,
    pub problem_tag: String,
}

/// Volume error percent: |V_f - mean(pred)| / V_f * 100.
pub fn v_err(pred: &DensityField, volfrac: f64) -> Result<f64, MetricsError> {
    if !(volfrac > 0.0 && volfrac <= 1.0) {
        return Err(MetricsError::BadVolfrac(volfrac));
    }
    Ok((volfrac - pred.mean()).abs() / volfrac * 100.0)
}

/// Compliance error percent: |C_opt - C(pred)| / C_opt * 100, with C(pred)
/// from a fresh FE solve on the predicted field (no thresholding).
pub fn c_err(pred: &DensityField, spec: &ProblemSpec, c_opt: f64) -> Result<f64, MetricsError> {
    if !(c_opt > 0.0) {
        return Err(MetricsError::BadCompliance(c_opt));
    }
    let c_cnn = evaluate_compliance(pred, spec)?;
    Ok((c_opt - c_cnn).abs() / c_opt * 100.0)
}

/// The three images behind one record, for side-by-side reporting.
#[derive(Debug, Clone)]
pub struct EvalImages {
    pub input: DensityField,
    pub prediction: DensityField,
    pub target: DensityField,
}

/// Evaluates a model across volume fractions. Each V_f takes its input image
/// and ground truth from `dataset` when a matching sample exists; otherwise
/// the input is synthesized from `seed` + index and the optimizer is run for
/// the reference design. V_f entries fan out over the rayon pool.
pub fn evaluate_model(
    model: &Model,
    problem: Preset,
    vfs: &[f64],
    dataset: Option<&Dataset>,
    seed: u64,
    model_tag: &str,
) -> Result<Vec<EvalRecord>, MetricsError> {
    let with_images = evaluate_model_with_images(model, problem, vfs, dataset, seed, model_tag)?;
    Ok(with_images.into_iter().map(|(record, _)| record).collect())
}

/// Like `evaluate_model`, but keeps each V_f's input, prediction, and target
/// images alongside its record.
pub fn evaluate_model_with_images(
    model: &Model,
    problem: Preset,
    vfs: &[f64],
    dataset: Option<&Dataset>,
    seed: u64,
    model_tag: &str,
) -> Result<Vec<(EvalRecord, EvalImages)>, MetricsError> {
    let side = model.input_side().ok_or(MetricsError::NoInputShape)?;
    if let Some(ds) = dataset {
        if (ds.nx, ds.ny) != (side, side) {
            return Err(MetricsError::GridMismatch {
                side,
                nx: ds.nx,
                ny: ds.ny,
            });
        }
    }

    vfs.par_iter()
        .enumerate()
        .map(|(k, &vf)| {
            let spec = simp::preset(problem, side, side, vf);
            let matched = dataset.and_then(|ds| {
                ds.samples.iter().find(|s| (s.volfrac - vf).abs() <= 1e-9)
            });
            let (input, target, c_opt) = match matched {
                Some(sample) => (
                    sample.input_image.clone(),
                    sample.target_image.clone(),
                    evaluate_compliance(&sample.target_image, &spec)?,
                ),
                None => {
                    let input =
                        dataset::gen_input_image(vf, side, side, seed.wrapping_add(k as u64))?;
                    let solved = optimize(&spec)?;
                    (input, solved.field, solved.compliance)
                }
            };
            if !(c_opt > 0.0) {
                return Err(MetricsError::BadCompliance(c_opt));
            }
            let pred = model.predict(&dataset::field_to_tensor(&input))?;
            let pred_field = dataset::field_from_tensor(&pred, 0)?;
            let c_cnn = evaluate_compliance(&pred_field, &spec)?;
            let record = EvalRecord {
                volfrac: vf,
                v_err: v_err(&pred_field, vf)?,
                c_err: (c_opt - c_cnn).abs() / c_opt * 100.0,
                c_opt,
                c_cnn,
                model_tag: model_tag.to_string(),
                problem_tag: spec_tag(problem),
            };
            let images = EvalImages {
                input,
                prediction: pred_field,
                target,
            };
            Ok((record, images))
        })
        .collect()
}

/// Concatenates input | prediction | target horizontally with one gray
/// separator column between panels.
pub fn triptych(images: &EvalImages) -> DensityField {
    let (nx, ny) = (images.input.nx, images.input.ny);
    let total_nx = 3 * nx + 2;
    let mut rho = vec![0.5; total_nx * ny];
    for (panel, field) in [&images.input, &images.prediction, &images.target]
        .iter()
        .enumerate()
    {
        let x0 = panel * (nx + 1);
        for ex in 0..nx {
            for ey in 0..ny {
                rho[(x0 + ex) * ny + ey] = field.get(ex, ey);
            }
        }
    }
    DensityField::from_vec(total_nx, ny, rho).expect("panel values are already in range")
}

fn spec_tag(p: Preset) -> String {
    match p {
        Preset::MidLoad => "mid-load",
        Preset::CantileverCenterLoad => "cantilever-center-load",
        Preset::CantileverEndLoad => "cantilever-end-load",
        Preset::Custom => "custom",
    }
    .to_string()
}

/// Renders records as CSV with a fixed header.
pub fn report_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("vf,v_err,c_err,c_opt,c_cnn\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.volfrac, r.v_err, r.c_err, r.c_opt, r.c_cnn
        ));
    }
    out
}

pub fn write_report(records: &[EvalRecord], path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, report_csv(records)).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Published benchmark errors for the 100x100 mid-load model, as
/// (V_f, V_err%, C_err%). Comparison data only — nothing in this repo
/// reproduces these runs.
pub const REFERENCE_MID_LOAD: [(f64, f64, f64); 7] = [
    (0.05, 5.4, 1.65),
    (0.15, 0.53, 2.66),
    (0.20, 0.20, 0.041),
    (0.25, 0.48, 0.51),
    (0.35, 0.057, 0.144),
    (0.50, 0.10, 0.075),
    (0.75, 0.053, 0.096),
];

/// Published benchmark errors for the 100x100 cantilever-end-load model.
pub const REFERENCE_CANTILEVER_END: [(f64, f64, f64); 7] = [
    (0.10, 1.2, 0.20),
    (0.25, 0.36, 0.50),
    (0.40, 0.23, 0.29),
    (0.50, 0.22, 0.14),
    (0.60, 0.40, 0.24),
    (0.70, 0.19, 0.063),
    (0.85, 0.11, 0.025),
];

/// Adaptive-layer widths covered by the published mid-load sweep.
pub const REFERENCE_ADAPTIVE_NEURONS: [usize; 6] = [0, 1000, 2000, 4000, 8000, 12000];

/// Published mid-load errors per adaptive-layer width: one row per V_f, one
/// (V_err%, C_err%) pair per entry of `REFERENCE_ADAPTIVE_NEURONS`.
pub const REFERENCE_MID_LOAD_ADAPTIVE: [(f64, [(f64, f64); 6]); 7] = [
    (0.05, [(7.4, 3.8263), (12.4, 0.1351), (2.2, 10.1873), (6.0, 2.67), (3.4, 2.9814), (0.6, 2.8736)]),
    (0.15, [(1.67, 0.0356), (0.867, 0.1048), (0.0, 0.7071), (1.73, 0.7150), (0.067, 0.1337), (0.53, 0.4479)]),
    (0.25, [(0.88, 0.2312), (0.4, 0.2615), (0.16, 0.9801), (0.36, 0.6686), (0.44, 0.4134), (0.24, 0.3365)]),
    (0.40, [(0.75, 0.0852), (0.275, 0.0654), (0.2, 0.1345), (0.4, 0.2571), (0.175, 0.0648), (0.125, 0.2143)]),
    (0.60, [(0.25, 0.0252), (0.183, 0.0092), (0.033, 0.013), (0.183, 0.0788), (0.067, 0.0), (0.017, 0.025)]),
    (0.65, [(0.23, 0.007), (0.1076, 0.067), (0.77, 0.094), (0.139, 0.105), (0.1692, 0.056), (0.077, 0.044)]),
    (0.75, [(0.027, 0.112), (0.013, 0.022), (0.093, 0.112), (0.13, 0.097), (0.0, 0.011), (0.347, 0.343)]),
];

/// The published single-model reference table for a preset, if one exists.
pub fn reference_for(problem: Preset) -> Option<&'static [(f64, f64, f64); 7]> {
    match problem {
        Preset::MidLoad => Some(&REFERENCE_MID_LOAD),
        Preset::CantileverEndLoad => Some(&REFERENCE_CANTILEVER_END),
        _ => None,
    }
}
