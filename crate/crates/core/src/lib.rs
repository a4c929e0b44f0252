//! Hand-motion analytics from depth video and evaluation of the detection
//! and action-segmentation model outputs that feed them.
//!
//! The library never runs a network. It consumes depth frames, per-frame
//! detections and frame-wise gesture labels from disk and produces:
//!
//! - metric 3D hand trajectories ([`geometry`]),
//! - path lengths in 3D and on the XY/YZ/XZ planes, and distance per
//!   gesture ([`motion`]),
//! - per-class AP and mAP over IoU 0.50:0.95 ([`eval_detect`]),
//! - frame accuracy, segmental edit score and F1@k ([`eval_segment`]),
//! - expert-vs-resident rank-sum tests ([`stats`]),
//! - grayscale renderings of depth frames ([`viz`]).
//!
//! [`pipeline`] wires these together over a participant manifest and
//! produces a [`report::MetricReport`].

pub mod eval_detect;
pub mod eval_segment;
pub mod geometry;
pub mod ingest;
pub mod motion;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod viz;
