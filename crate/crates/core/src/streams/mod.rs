//! Spatial and temporal stream networks, their training loop and
//! video-level prediction.

mod config;
mod data;
mod model;
mod train;

pub use config::{LayerSpec, StreamConfig, StreamKind};
pub use data::{compute_clip_flows, sample_taus, ClipSamples, SampleSource, StreamInputs, StreamView};
pub use model::{build_stream, StreamFeature, StreamModel};
pub use train::{
    channel_means, history_csv, predict_video, sample_scores, train_stream, video_accuracy, EpochStats, TrainHyper,
};
