//! Stream runtime: sources, the threaded analysis pipeline, overlay
//! rendering, alert clip capture, and metrics.

pub mod artifact;
mod font;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod scenario;
pub mod source;

pub use artifact::{read_clip, ClipFrame, ClipHeader};
pub use metrics::{ClipLatency, LevelCounts, MetricsHub, MetricsSnapshot, QueueDepths, Stage, StageLatency};
pub use overlay::{level_color, render_overlay, render_overlay_png, render_scene, Canvas, OverlayTrack};
pub use pipeline::{
    run_pipeline, spawn_pipeline, AlertDraft, ClassifierKind, DropPolicy, EmissionMark, NullSink,
    PipelineConfig, PipelineDeps, PipelineHandle, PipelineSink, SessionReport,
};
pub use scenario::Scenario;
pub use source::{open_source, parse_replay, write_replay, FrameSource, PoseFrame, SourceDescriptor, SourceKind};
