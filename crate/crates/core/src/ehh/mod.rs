//! Efficient hinging-hyperplanes (EHH) network: sparse piecewise-linear
//! regression whose structure admits an exact ANOVA decomposition.
//!
//! Source nodes are hinges `max(0, x_m - beta)`; interaction nodes take the
//! minimum of source nodes drawn from distinct input dimensions. The output is
//! a weighted sum of all nodes, so the importance of each input (and input
//! pair) can be read off as the spread of its share of that sum.

mod anova;
mod inverse;
mod linear;
mod network;
mod train;

pub use anova::{anova_decompose, anova_terms, AnovaReport};
pub use inverse::{importance_inverse, InverseImportance};
pub use linear::{fit_linear_ehh, LinearEhh, LinearEhhConfig, LinearEhhReport};
pub use network::{EhhConfig, EhhNetwork, SourceNode};
pub use train::{ehh_train, mse, FitConfig, FitReport};
