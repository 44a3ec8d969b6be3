//! Vision-based quadrotor hike navigation: a kinematic simulator with plain
//! and Gaussian-splat renderers, a ground-truth PID expert, from-scratch
//! CfC/LSTM policies trained by behavior cloning, and a closed-loop
//! evaluation harness.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod expert;
pub mod nn;
pub mod plots;
pub mod scene;
pub mod simcore;
pub mod splat;
pub mod train;
