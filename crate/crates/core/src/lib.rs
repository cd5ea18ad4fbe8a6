// SPDX-License-Identifier: Apache-2.0

//! Multi-view point cloud preprocessing for LiDAR 3D detection.
//!
//! Each frame is cropped and turned into three views: a random fixed-count
//! sample, a distance-aware density sample ([`des`]) and a ground-removed
//! sample ([`gas`]). [`ckps`] finds points present in all three views so
//! per-point predictions can be compared across views ([`consistency`]).
//! [`pipeline`] runs the whole thing over a directory of `.bin` frames.

pub mod analysis;
pub mod boxes;
pub mod branches;
pub mod ckps;
pub mod cloud;
pub mod config;
pub mod consistency;
pub mod des;
pub mod gas;
pub mod interop;
pub mod pipeline;
pub mod seed;
pub mod synthetic;

pub use boxes::{bev_iou, point_in_box, Box7, Label, Proposal};
pub use branches::{sample_branches, MultiViewSet};
pub use ckps::{select_keypoints, CkpsConfig, KeypointMask};
pub use cloud::{crop, random_fixed_count, read_frame, write_frame, CropRange, Point, PointCloud};
pub use config::{PipelineConfig, Preset, Stage};
pub use des::{des_sample, DesConfig};
pub use gas::{gas_filter, GasConfig};
pub use seed::SampleSeed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
