//! Zero-shot object-goal navigation with geometric-part and affordance maps.
//!
//! An agent scores each RGB observation against text attributes of the target with a
//! multi-scale patch pyramid, projects the scores onto a 2D grid through the depth
//! image, and explores toward the highest-scoring cells near the frontier.

pub mod attributes;
pub mod gamap;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod planner;
pub mod pyramid;
pub mod remote;
pub mod simworld;
