//! Call graph construction and source-to-sink taint tracking.

pub mod callgraph;
pub mod engine;
pub mod spec;

pub use callgraph::{build_call_graph, CallEdge, CallGraph, CgNode, EntryPointConfig};
pub use engine::{
    confirm_flows, find_flows, ChainStep, FlowEndpoint, FlowPath, FlowStatus, StepKind, TaintGraph,
    DEFAULT_MAX_DEPTH,
};
pub use spec::{Channel, SinkSpec, SourceCategory, SourceSpec, SpecError, TaintSpec};
