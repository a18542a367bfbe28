//! Non-rigid surface tracking with dual-quaternion warp fields.
//!
//! A template surface is deformed by a sparse set of control points, each
//! carrying a rigid motion encoded as a unit dual quaternion. Every frame the
//! control-point motions are re-estimated so the warped template fits an
//! observed depth map (point-to-plane ICP with a Tukey kernel), a set of
//! sparse 3D feature matches (weighted by a 1-point RANSAC preselection), and
//! a dense as-rigid-as-possible regularizer.
//!
//! The crate is `no_std` + `alloc`. The `parallel` feature (on by default)
//! evaluates residuals and per-control-point solves on a rayon pool; results
//! are bitwise identical for any pool size because every reduction runs in a
//! fixed order.
//!
//! Modules, bottom-up:
//!
//! - [`geom`]: quaternions, dual quaternions, rigid transforms, pinhole camera,
//!   small Cholesky solves.
//! - [`warp`]: template, control graph, binding and warping.
//! - [`correspond`]: depth observations, normals and raster correspondences.
//! - [`matching`]: 1-point RANSAC inlier preselection for feature matches.
//! - [`energy`]: ICP, match and ARAP residuals with analytic Jacobians.
//! - [`solver`]: block-coordinate Levenberg-Marquardt over control points.
//! - [`synth`]: synthetic deforming scenes with ground truth, and metrics.
//! - [`tracker`]: frame-by-frame driver with warm starts and preselection.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose to reject NaN; small fixed-size matrix
// loops read better with indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod correspond;
pub mod energy;
pub mod geom;
pub mod matching;
pub mod solver;
pub mod synth;
pub mod tracker;
pub mod warp;

mod math;
mod par;

pub use geom::{DualQuaternion, Mat3, PinholeCamera, Quat, RigidTransform, Vec3};
