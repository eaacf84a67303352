//! Supply-network data model shared by every other module.

mod action;
pub mod dataset;
mod scaler;
mod shipment;
mod state;
mod topology;

pub use action::{ActionTensor, EdgeActions};
pub use dataset::{
    scale_dataset, RawDataset, RawEdge, RawNode, RawNodeWeek, RawShipment, RawTopology, RawWeek, SkuData, Split,
    Transition, WeekRecord, FORMAT_VERSION,
};
pub use scaler::SkuScaler;
pub use shipment::{SendWindow, Shipment, ShipmentLog};
pub use state::{imbalance_profile, NodeStateMatrix};
pub use topology::{NodeKind, Reversed, Topology};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("quantity must be finite and nonnegative, got {0}")]
    NegativeQuantity(f64),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no scaler for SKU `{0}`")]
    MissingScaler(String),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("dataset: {0}")]
    Dataset(String),
}
