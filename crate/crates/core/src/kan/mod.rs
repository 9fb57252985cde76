//! Kolmogorov-Arnold networks: B-spline edges, training, pruning, symbolic
//! replacement and expression extraction.

mod bspline;
mod checkpoint;
mod network;
mod symbolic;
mod train;

pub use bspline::BSplineBasis;
pub use checkpoint::{
    from_json, load, read_header, save, to_json, write_graph_csv, CheckpointHeader, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use network::{silu, silu_derivative, KanEdge, KanInit, KanLayer, KanNetwork, PruneReport, INPUT_DOMAIN};
pub use symbolic::{
    auto_symbolic, extract_expression, fit_symbolic_edge, retrain_affine, EdgeFit, Family, RetrainReport, SymbolicEdge,
    DEFAULT_LIBRARY, MIN_SAMPLES, TIE_WINDOW,
};
pub use train::{
    fit_network, loss_and_gradient, parameters, set_parameters, train, KanTrainConfig, TrainOutcome, TrainRecord,
};
