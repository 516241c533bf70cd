//! Topology-optimization data generation and a from-scratch CNN surrogate.
//!
//! The crate has five layers, each usable on its own:
//!
//! * [`tensor`]: dense 4-D tensors and the conv / pool / transpose-conv /
//!   dense kernels with hand-written forward and backward passes,
//! * [`network`]: the encoder-decoder model, Adam, the training loop and a
//!   checksummed binary checkpoint format,
//! * [`simp`]: a 2-D SIMP compliance-minimization solver (regular Q4 grid,
//!   sensitivity filter, optimality-criteria updates),
//! * [`dataset`]: sweep generation, PGM interchange and tensor packing,
//! * [`metrics`]: volume and compliance error measures plus model evaluation.
//!
//! Everything numeric runs in f64 and is deterministic for a fixed seed and
//! a single-threaded configuration; checkpoints store parameters as f32.

pub mod dataset;
pub mod metrics;
pub mod network;
pub mod simp;
pub mod tensor;

pub use network::Model;
pub use simp::{DensityField, Preset, ProblemSpec};
pub use tensor::Tensor;
