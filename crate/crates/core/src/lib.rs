//! Activity recognition from joint poses: synthetic on-body signals, temporal
//! convolutional networks and convolutional-layer transfer to inertial data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod binfmt;
pub mod dataio;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod toy;
pub mod transfer;

pub use arch::{build_tcnn, build_tcnn_imu, init_params, NetworkGraph};
pub use dataio::{DatasetManifest, PipelineConfig, PoseClip, Window, WindowedDataset};
pub use metrics::{ConfusionMatrix, MetricsReport, PermTestResult};
pub use nn::{ParamSet, SeededRng, Tensor, TrainConfig};
pub use signal::{ChannelSeries, SplineQuery, Unit};
pub use transfer::{Checkpoint, CheckpointMeta, TransferPlan};
