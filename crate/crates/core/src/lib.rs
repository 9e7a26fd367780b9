//! Active learning of linear binary classifiers in an embedding space from
//! label, exemplar-selection and ranking queries.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases at the crate root fix it to `f64`.

// `!(x > y)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod dataset;
mod error;
pub mod harness;
pub mod math;
pub mod policy;
pub mod response;
mod scalar;
pub mod selection;
pub mod session;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Belief = belief::GaussianBelief<f64>;
pub type Settings = belief::UpdateSettings<f64>;
pub type StopRule = belief::StoppingRule<f64>;
pub type Item = dataset::EmbeddedItem<f64>;
pub type Pool = dataset::ItemPool<f64>;
pub type Params = response::ResponseParams<f64>;
pub type Query = response::Query<f64>;
pub type Committee = selection::Committee<f64>;
pub type Annotator = simulate::SimulatedAnnotator<f64>;
