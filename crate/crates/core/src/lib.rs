//! Tangent bundle signal processing on point clouds.
//!
//! A point cloud sampled from a manifold is turned into an orthogonal
//! cellular sheaf whose Laplacian approximates the connection Laplacian.
//! Vector fields become sheaf signals, FIR filters use the shift operator
//! `e^{Delta_n}`, and stacks of such filters with pointwise nonlinearities
//! form tangent bundle neural networks.

pub mod error;
pub mod experiments;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod sheaf;
pub mod spectral;
pub mod tnn;

pub use error::{Error, Result};
pub use filter::{apply_fir, expm, shift_operator, FirFilter, ShiftMethod, ShiftOperator};
pub use geometry::{add_awgn, rotational_field, sample_sphere, AmbientField, ManifoldTag, PointCloud};
pub use sheaf::{
    build_sheaf, lift_signal, sample_field, sheaf_inner_product, OrthogonalSheaf, SheafParams,
    SheafSignal,
};
pub use spectral::{analyze_response, eigendecompose, FirFrequencyResponse, SheafSpectrum};
pub use tnn::{
    evaluate_mse, mnn_baseline, train_denoiser, Nonlinearity, TnnModel, TrainConfig,
};
