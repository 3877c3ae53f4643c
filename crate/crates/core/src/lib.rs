//! Exact generalized functional ANOVA for categorical features on an
//! empirical distribution with arbitrary (dependent, sparse) support.
//!
//! The pipeline is: [`EmpiricalDistribution`] → [`greedy_select`] picks a
//! linearly independent set of basis columns → [`least_squares_coefficients`]
//! solves for their coefficients → [`Decomposition`] groups the result by
//! feature subset and serves Shapley values, importances and diagnostics.
//!
//! ```
//! use std::sync::Arc;
//! use cat_anova::{decompose, Distribution64, SelectionConfig64};
//!
//! let rows = [[0u32, 0], [0, 1], [1, 0], [1, 1]];
//! let dist = Arc::new(Distribution64::from_dataset(&rows, None).unwrap());
//! let f = [0.0, 1.0, 1.0, 0.0];
//! let dec = decompose(&dist, &f, &SelectionConfig64::full(2)).unwrap();
//! let norms = dec.component_norms();
//! assert!((norms[&vec![0, 1]] - 0.25).abs() < 1e-12);
//! ```

pub mod anova;
pub mod basis;
pub mod distribution;
pub mod error;
pub mod gram;
pub mod hierarchy;
pub mod linalg;
pub mod oracle;
pub mod scalar;
pub mod selection;
pub mod synthetic;
pub mod validation;

pub use anova::{
    component_norms, decompose, fit_quality, global_importance, metrics, shapley, AttributionVector, Decomposition,
    DiagnosticsReport, FitQuality, Subset,
};
pub use basis::{enumerate_indices, evaluate_phi, evaluate_psi, index_space_size, BasisColumn, IndexKey};
pub use distribution::{Category, EmpiricalDistribution, HyperGrid, MarginalTable};
pub use error::{AnovaError, Result};
pub use gram::{
    build_system, gram_entry, least_squares_coefficients, mean_coefficient, solve_coefficients,
    CoefficientVector, GramSystem,
};
pub use hierarchy::hierarchical_columns;
pub use oracle::OracleReport;
pub use scalar::Scalar;
pub use selection::{
    greedy_select, prune_inactive, rank_tracker_add, ColumnBasis, OrderingStrategy, RankStep, RankTracker,
    SelectedBasis, SelectionConfig,
};

pub type Distribution64 = EmpiricalDistribution<f64>;
pub type Distribution32 = EmpiricalDistribution<f32>;
pub type Decomposition64 = Decomposition<f64>;
pub type Decomposition32 = Decomposition<f32>;
pub type GramSystem64 = GramSystem<f64>;
pub type GramSystem32 = GramSystem<f32>;
pub type Coefficients64 = CoefficientVector<f64>;
pub type Coefficients32 = CoefficientVector<f32>;
pub type SelectionConfig64 = SelectionConfig<f64>;
pub type SelectionConfig32 = SelectionConfig<f32>;
pub type Diagnostics64 = DiagnosticsReport<f64>;
pub type Attribution64 = AttributionVector<f64>;
