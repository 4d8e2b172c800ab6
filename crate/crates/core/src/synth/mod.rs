//! Synthetic scenes with exact ground truth, and brute-force oracles.

pub mod oracle;
pub mod render;
pub mod samples;
pub mod scenes;

pub use oracle::{oracle_cuboid, oracle_modes};
pub use render::{generate_scene, write_scene, SceneSpec, SceneTruth};
