//! Smartphone-style early childhood caries screening, as a library.
//!
//! The pipeline has two visual stages followed by a rule engine:
//!
//! 1. [`gating`] decides from facial landmarks whether the mouth is large and
//!    level enough to analyse, and produces the crop handed to the detector.
//! 2. [`detection`] turns raw SSD head output (class logits and box offsets per
//!    anchor) into suppressed detections grouped by ICDAS severity.
//! 3. [`risk`] fuses the detections with a caregiver questionnaire.
//!
//! [`evaluation`] implements the measurement side (COCO AP/AR, the detection
//! confusion matrix, cavity-level sensitivity/specificity sweeps) and
//! [`dataset`] the annotation formats and census tooling. [`service`] exposes
//! the whole flow over HTTP and [`cli`] drives it from the command line.

pub mod cli;
pub mod dataset;
pub mod detection;
pub mod evaluation;
pub mod gating;
pub mod geometry;
pub mod resources;
pub mod risk;
pub mod service;

pub use dataset::{AnnotationRecord, DatasetStats};
pub use detection::{Detection, SeverityGroup, ToothClass};
pub use geometry::{BoundingBox, PixelSize, Point2D};
