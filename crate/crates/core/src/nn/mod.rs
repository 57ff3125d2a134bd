//! Minimal NHWC neural-network stack: layers, computation graph, Adam, losses.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod layers;
pub mod loss;

pub use adam::Adam;
pub use graph::{ForwardPass, Graph, GraphBuilder, GraphError, LayerKind, Mode, Node, NodeId};
pub use layers::{Cache, Padding, Param, Tensor};
pub use loss::Loss;
