//! Rank-constrained minimization by projected gradient descent and by
//! factorized gradient descent, with certificates relating the stationary
//! points of the two methods.

pub mod certify;
pub mod error;
pub mod factorized;
pub mod instances;
pub mod matrix;
pub mod objective;
pub mod optimize;
pub mod random;
pub mod svd;

pub use error::{Error, Result};
pub use factorized::{FactorDirection, FactorPair};
pub use matrix::{DenseMatrix, RankBudget};
pub use objective::{Objective, ObjectiveKind, SmoothnessProfile};
