//! Superquadric decomposition and parallel-jaw grasp planning.
//!
//! The pipeline voxelizes an object mesh into a truncated signed distance
//! field, decomposes it into superquadrics, samples grasp candidates on each
//! primitive's cross-section, validates them against the original mesh
//! (clearance and near-antipodal contacts) and plans the nearest valid grasp
//! for a gripper pose.

pub mod cli;
pub mod decompose;
pub mod fixtures;
pub mod geometry;
pub mod graspgen;
pub mod planner;
pub mod sdfgrid;
pub mod superquadric;
pub mod validate;
