//! Core library of the `mechanic` theorem-proving orchestrator: a Lean 4
//! proof-document model, a verification gateway, the iterative sorrifier,
//! subgoal extraction and assembly, the model roles, and the recursive
//! proving pipeline.

pub mod budget;
pub mod document;
pub mod gateway;
pub mod pipeline;
pub mod roles;
pub mod sorrifier;
pub mod subgoal;
pub mod testkit;

pub use document::{
    innermost, Block, BlockForest, BlockKind, DocumentError, LineIndex, Position, ProofDocument,
    SorrySite, Span,
};
