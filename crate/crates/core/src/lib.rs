//! Entity-relation retrieval over heterogeneous sources: a chain language of GET and JOIN
//! operators, a cardinality-ordered executor, source adapters and the supporting model,
//! post-processing, source-selection and evaluation utilities.

pub mod catalog;
pub mod chain;
pub mod embed;
pub mod evalkit;
pub mod executor;
pub mod gateway;
pub mod postproc;
pub mod selection;
pub mod sources;
pub mod value;

pub use catalog::{Catalog, SourceDescriptor, SourceKind};
pub use chain::{parse_chain, render_chain, ApiChain, Condition, GetNode, JoinEdge};
pub use executor::{Cardinality, EntitySet, ExecError, Executor};
pub use gateway::{Gateway, MockGateway};
pub use value::{CmpOp, Record, Value};
