//! Dataset generation and IO: random input images, optimized target images,
//! a PGM-pair on-disk layout with a JSON sidecar, and packing into tensors.

pub mod pgm;

use crate::simp::{self, optimize, DensityField, Preset, ProblemSpec, SimpError};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("volume fraction {0} outside (0, 1]")]
    BadVolfrac(f64),
    #[error("bad sweep: start {start}, end {end}, step {step}")]
    BadSweep { start: f64, end: f64, step: f64 },
    #[error("malformed PGM {path}: {reason}")]
    PgmMalformed { path: PathBuf, reason: String },
    #[error("PGM {path} has maxval {maxval}, only 255 is supported")]
    PgmMaxval { path: PathBuf, maxval: u32 },
    #[error("{path} is not 8-bit grayscale")]
    PngFormat { path: PathBuf },
    #[error("sample {name} has no matching file under {missing_in}")]
    UnpairedSample { name: String, missing_in: String },
    #[error("{name} is {got_w}x{got_h}, dataset is {want_w}x{want_h}")]
    DimensionMismatch {
        name: String,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("no samples found under {0}")]
    Empty(PathBuf),
    #[error("could not parse {path}")]
    MetaParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("image {path} holds a value outside [0, 1]")]
    BadImageValue { path: PathBuf },
    #[error(transparent)]
    Simp(#[from] SimpError),
}

/// Where a sample's target came from: produced by the built-in optimizer, or
/// read from files someone else prepared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    GeneratedSimp,
    Imported,
}

/// One training pair: a random seed image and its optimized topology.
#[derive(Debug, Clone)]
pub struct Sample {
    pub volfrac: f64,
    pub input_image: DensityField,
    pub target_image: DensityField,
    pub provenance: Provenance,
    pub problem_tag: String,
}

/// Solver parameters recorded next to a generated dataset so a load can
/// reproduce or audit the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem: Preset,
    pub nx: usize,
    pub ny: usize,
    pub vf_start: f64,
    pub vf_end: f64,
    pub vf_step: f64,
    pub seed: u64,
    pub penal: f64,
    pub rmin: f64,
    /// Filter kind: 1 = sensitivity filtering, the only mode implemented.
    pub ft: u32,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    pub nu: f64,
    #[serde(rename = "move")]
    pub move_limit: f64,
    pub change_tol: f64,
    #[serde(default = "default_generator_version")]
    pub generator_version: String,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

fn default_generator_version() -> String {
    "unknown".to_string()
}

/// An in-memory dataset; `meta` is present when the samples were generated
/// here (or loaded from a directory that kept its sidecar).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub nx: usize,
    pub ny: usize,
    pub samples: Vec<Sample>,
    pub meta: Option<DatasetMeta>,
}

/// A volume fraction whose solve failed during generation.
#[derive(Debug)]
pub struct GenFailure {
    pub volfrac: f64,
    pub error: SimpError,
}

/// Result of a sweep: the samples that solved, and the ones that did not.
#[derive(Debug)]
pub struct GenOutcome {
    pub dataset: Dataset,
    pub failures: Vec<GenFailure>,
}

/// The volume fractions start, start+step, ... up to end (end inclusive,
/// with a small tolerance so accumulated float error cannot drop it).
pub fn sweep_volfracs(start: f64, end: f64, step: f64) -> Result<Vec<f64>, DatasetError> {
    if !(step > 0.0) || !(start > 0.0) || end < start || end > 1.0 {
        return Err(DatasetError::BadSweep { start, end, step });
    }
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let vf = start + k as f64 * step;
        if vf > end + step * 1e-6 {
            break;
        }
        out.push(vf.min(1.0));
        k += 1;
    }
    Ok(out)
}

/// A random binary image with exactly round(volfrac * nx * ny) solid pixels,
/// placed uniformly without replacement.
pub fn gen_input_image(
    volfrac: f64,
    nx: usize,
    ny: usize,
    seed: u64,
) -> Result<DensityField, DatasetError> {
    if !(volfrac > 0.0 && volfrac <= 1.0) {
        return Err(DatasetError::BadVolfrac(volfrac));
    }
    let total = nx * ny;
    let solid = (volfrac * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = vec![0.0; total];
    for idx in rand::seq::index::sample(&mut rng, total, solid) {
        rho[idx] = 1.0;
    }
    Ok(DensityField::from_vec(nx, ny, rho)?)
}

/// Runs the optimizer across a volume-fraction sweep, one sample per step.
/// Sample k draws its input image from seed + k. Fans out over the rayon
/// thread pool; the result is ordered and seed-determined either way.
pub fn generate_dataset(
    problem: Preset,
    nx: usize,
    ny: usize,
    vf_start: f64,
    vf_end: f64,
    vf_step: f64,
    seed: u64,
) -> Result<GenOutcome, DatasetError> {
    let vfs = sweep_volfracs(vf_start, vf_end, vf_step)?;
    let template = simp::preset(problem, nx, ny, vfs[0]);
    template.validate()?;
    let tag = problem_tag(problem);

    let results: Vec<Result<Sample, GenFailure>> = vfs
        .par_iter()
        .enumerate()
        .map(|(k, &vf)| {
            let input = match gen_input_image(vf, nx, ny, seed.wrapping_add(k as u64)) {
                Ok(img) => img,
                Err(DatasetError::Simp(e)) => return Err(GenFailure { volfrac: vf, error: e }),
                Err(_) => unreachable!("image generation only fails through the solver types"),
            };
            let spec = simp::preset(problem, nx, ny, vf);
            match optimize(&spec) {
                Ok(res) => Ok(Sample {
                    volfrac: vf,
                    input_image: input,
                    target_image: res.field,
                    provenance: Provenance::GeneratedSimp,
                    problem_tag: tag.clone(),
                }),
                Err(error) => Err(GenFailure { volfrac: vf, error }),
            }
        })
        .collect();

    let mut samples = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    let meta = meta_for(&template, problem, vf_start, vf_end, vf_step, seed);
    Ok(GenOutcome {
        dataset: Dataset {
            nx,
            ny,
            samples,
            meta: Some(meta),
        },
        failures,
    })
}

fn problem_tag(p: Preset) -> String {
    match p {
        Preset::MidLoad => "mid-load",
        Preset::CantileverCenterLoad => "cantilever-center-load",
        Preset::CantileverEndLoad => "cantilever-end-load",
        Preset::Custom => "custom",
    }
    .to_string()
}

fn meta_for(
    spec: &ProblemSpec,
    problem: Preset,
    vf_start: f64,
    vf_end: f64,
    vf_step: f64,
    seed: u64,
) -> DatasetMeta {
    DatasetMeta {
        problem,
        nx: spec.nx,
        ny: spec.ny,
        vf_start,
        vf_end,
        vf_step,
        seed,
        penal: spec.penal,
        rmin: spec.rmin,
        ft: 1,
        e0: spec.e0,
        e1: spec.e1,
        nu: spec.nu,
        move_limit: spec.move_limit,
        change_tol: spec.change_tol,
        generator_version: env!("CARGO_PKG_VERSION").to_string(),
        assumptions: vec![
            "unit load magnitude".to_string(),
            "element-grid images, one pixel per element".to_string(),
        ],
    }
}

/// File stem for a sample: the volume fraction scaled by 10^4, so 0.01
/// becomes vf_0100.
fn sample_name(volfrac: f64) -> String {
    format!("vf_{:04}.pgm", (volfrac * 10_000.0).round() as u64)
}

fn name_to_volfrac(name: &str) -> Option<f64> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let digits = stem.strip_prefix("vf_")?;
    let scaled: u64 = digits.parse().ok()?;
    (scaled > 0).then_some(scaled as f64 / 10_000.0)
}

/// Flattens a field to row-major raster order, origin top-left.
fn field_to_raster(field: &DensityField) -> Vec<f64> {
    let (nx, ny) = (field.nx, field.ny);
    let mut out = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        for col in 0..nx {
            out.push(field.get(col, row));
        }
    }
    out
}

fn raster_to_field(
    width: usize,
    height: usize,
    raster: &[f64],
) -> Result<DensityField, SimpError> {
    let mut rho = vec![0.0; width * height];
    for row in 0..height {
        for col in 0..width {
            rho[col * height + row] = raster[row * width + col];
        }
    }
    DensityField::from_vec(width, height, rho)
}

/// Writes input_data/, output_data/ image pairs plus meta.json when the
/// dataset carries one.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    let input_dir = dir.join("input_data");
    let output_dir = dir.join("output_data");
    for d in [&input_dir, &output_dir] {
        std::fs::create_dir_all(d).map_err(|source| DatasetError::Io {
            path: d.clone(),
            source,
        })?;
    }
    for sample in &dataset.samples {
        let name = sample_name(sample.volfrac);
        pgm::write_pgm(
            &input_dir.join(&name),
            dataset.nx,
            dataset.ny,
            &field_to_raster(&sample.input_image),
        )?;
        pgm::write_pgm(
            &output_dir.join(&name),
            dataset.nx,
            dataset.ny,
            &field_to_raster(&sample.target_image),
        )?;
    }
    if let Some(meta) = &dataset.meta {
        let path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        std::fs::write(&path, json).map_err(|source| DatasetError::Io { path, source })?;
    }
    Ok(())
}

fn read_image(path: &Path) -> Result<(usize, usize, Vec<f64>), DatasetError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => {
            let img = image::open(path).map_err(|e| DatasetError::PgmMalformed {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            let image::DynamicImage::ImageLuma8(gray) = img else {
                return Err(DatasetError::PngFormat {
                    path: path.to_path_buf(),
                });
            };
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let densities = gray.as_raw().iter().map(|&p| pgm::byte_to_density(p)).collect();
            Ok((w, h, densities))
        }
        _ => pgm::read_pgm(path),
    }
}

fn list_images(dir: &Path) -> Result<Vec<String>, DatasetError> {
    let entries = std::fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pgm") || name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Loads a dataset directory, pairing input_data/ and output_data/ files by
/// name. Presence of a parseable meta.json marks the samples as generated
/// here; anything else is treated as imported.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let input_dir = dir.join("input_data");
    let output_dir = dir.join("output_data");
    let input_names = list_images(&input_dir)?;
    let output_names = list_images(&output_dir)?;
    if input_names.is_empty() {
        return Err(DatasetError::Empty(dir.to_path_buf()));
    }
    for name in &output_names {
        if !input_names.contains(name) {
            return Err(DatasetError::UnpairedSample {
                name: name.clone(),
                missing_in: "input_data".to_string(),
            });
        }
    }

    let meta: Option<DatasetMeta> = match std::fs::read(dir.join("meta.json")) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|source| {
            DatasetError::MetaParse {
                path: dir.join("meta.json"),
                source,
            }
        })?),
        Err(_) => None,
    };
    let provenance = if meta.is_some() {
        Provenance::GeneratedSimp
    } else {
        Provenance::Imported
    };
    let tag = meta
        .as_ref()
        .map(|m| problem_tag(m.problem))
        .unwrap_or_else(|| "imported".to_string());

    let mut nx = 0;
    let mut ny = 0;
    let mut samples = Vec::with_capacity(input_names.len());
    for name in &input_names {
        if !output_names.contains(name) {
            return Err(DatasetError::UnpairedSample {
                name: name.clone(),
                missing_in: "output_data".to_string(),
            });
        }
        let (iw, ih, input_raster) = read_image(&input_dir.join(name))?;
        let (ow, oh, output_raster) = read_image(&output_dir.join(name))?;
        if samples.is_empty() {
            nx = iw;
            ny = ih;
        }
        for (w, h) in [(iw, ih), (ow, oh)] {
            if (w, h) != (nx, ny) {
                return Err(DatasetError::DimensionMismatch {
                    name: name.clone(),
                    want_w: nx,
                    want_h: ny,
                    got_w: w,
                    got_h: h,
                });
            }
        }
        let input_image =
            raster_to_field(iw, ih, &input_raster).map_err(|_| DatasetError::BadImageValue {
                path: input_dir.join(name),
            })?;
        let target_image =
            raster_to_field(ow, oh, &output_raster).map_err(|_| DatasetError::BadImageValue {
                path: output_dir.join(name),
            })?;
        let volfrac = name_to_volfrac(name).unwrap_or_else(|| input_image.mean());
        samples.push(Sample {
            volfrac,
            input_image,
            target_image,
            provenance,
            problem_tag: tag.clone(),
        });
    }
    Ok(Dataset {
        nx,
        ny,
        samples,
        meta,
    })
}

/// Writes one density field as a PGM image.
pub fn write_field_pgm(path: &Path, field: &DensityField) -> Result<(), DatasetError> {
    pgm::write_pgm(path, field.nx, field.ny, &field_to_raster(field))
}

/// Reads one density field from a PGM (or 8-bit grayscale PNG) image.
pub fn read_field_image(path: &Path) -> Result<DensityField, DatasetError> {
    let (w, h, raster) = read_image(path)?;
    raster_to_field(w, h, &raster).map_err(|_| DatasetError::BadImageValue {
        path: path.to_path_buf(),
    })
}

/// Repacks one batch entry of an (N, ny, nx, 1) tensor as a density field.
pub fn field_from_tensor(t: &Tensor, batch: usize) -> Result<DensityField, SimpError> {
    let [_, ny, nx, _] = t.shape();
    let mut rho = vec![0.0; nx * ny];
    for row in 0..ny {
        for col in 0..nx {
            rho[col * ny + row] = t.at(batch, row, col, 0);
        }
    }
    DensityField::from_vec(nx, ny, rho)
}

/// Packs one field as a single-sample (1, ny, nx, 1) tensor.
pub fn field_to_tensor(field: &DensityField) -> Tensor {
    Tensor::from_vec([1, field.ny, field.nx, 1], field_to_raster(field))
        .expect("field dims are consistent by construction")
}

/// Packs all samples into (inputs, targets) tensors of shape
/// (N, ny, nx, 1), row-major with the origin at the top-left.
pub fn pack_tensors(dataset: &Dataset) -> (Tensor, Tensor) {
    let n = dataset.samples.len();
    let (nx, ny) = (dataset.nx, dataset.ny);
    let mut inputs = Vec::with_capacity(n * ny * nx);
    let mut targets = Vec::with_capacity(n * ny * nx);
    for sample in &dataset.samples {
        inputs.extend(field_to_raster(&sample.input_image));
        targets.extend(field_to_raster(&sample.target_image));
    }
    let shape = [n, ny, nx, 1];
    (
        Tensor::from_vec(shape, inputs).expect("sample dims checked on construction"),
        Tensor::from_vec(shape, targets).expect("sample dims checked on construction"),
    )
}
