//! Callable-field aliases shared across modules. Coefficient fields are
//! immutable closures behind `Arc` so models and domains can be evaluated
//! concurrently from parallel workers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Jump amplitude `(x, z) -> R^d`.
pub type AmplitudeField = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// All column Jacobians of a matrix field at a point: the j-th entry is the
/// Jacobian of the j-th column.
pub type ColumnJacobianField = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
