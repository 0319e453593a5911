//! Dataset compilation and evaluation for panoptic segmentation of
//! georeferenced imagery.

pub mod annotate;
pub mod boundary;
pub mod dataset;
pub mod geo;
pub mod metrics;
pub mod pipeline;
pub mod registry;
pub mod tiler;
