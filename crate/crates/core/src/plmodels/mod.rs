//! Closed-form pathloss models and the datasets built from them.

pub mod dataset;
pub mod models;
pub mod synthetic;

pub use dataset::{
    load_empirical_csv, norm_sidecar_path, normalize_max, split, ColumnRole, Dataset, LoadReport, ModelKind,
    NormSidecar, Provenance, Schema, TARGET_COLUMN,
};
pub use models::{
    eval_abg, eval_ci, eval_fs, eval_indoor_empirical, eval_mwf, eval_outdoor_empirical, fspl_1m, AbgParams, CiParams,
    EmpiricalConstants, IndoorParams, OutdoorParams, SPEED_OF_LIGHT,
};
pub use synthetic::{generate_synthetic, ParamRange, ParamRanges, SyntheticSpec};
