//! Numerical verification of causal structure on Lorentzian models:
//! cone-membership decisions for symmetric tensors, canonical null
//! directions, causal relations and conformal maps under pullback,
//! one-parameter families of causal maps, and infinitesimal generators.

pub mod causal;
pub mod config;
pub mod exprs;
pub mod flows;
pub mod generators;
pub mod geometry;
pub mod opt;
pub mod relations;
pub mod spacetimes;
pub mod tensor;

pub use causal::{canonical_null_directions, is_causal_tensor, CausalVerdict, Decision, Method};
pub use geometry::{PointValue, SpacetimeModel};
pub use relations::{is_causal_relation, is_conformal, DiffeoMap, RelationDecision};
