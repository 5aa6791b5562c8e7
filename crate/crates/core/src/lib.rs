//! Per-cell uncertainty for table structure recognition.
//!
//! Cell boxes predicted by several models, each specialised to one image
//! augmentation, are merged into cells whose confidence is the fraction of
//! models that agree on them. Around that core sit image augmentations,
//! cell adjacency graphs, evaluation reports and a synthetic harness with
//! seeded mock predictors.

pub mod augment;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod icdar;
pub mod pipeline;
pub mod report;
pub mod table;

pub use augment::{
    Augmentation, BitMask, GrayImage, GridSpec, LineDetectParams, LineMode, MaskScope,
};
pub use ensemble::{ensemble, EnsembleConfig, FusionRule, MergedCell, MergedTable};
pub use error::{Error, Result};
pub use eval::{ConfidenceBucket, DegreeRow, MatchResult, Prf};
pub use geometry::{area, contains, intersection_area, iou, BBox};
pub use graph::{build_adjacency, AdjacencyGraph, Direction};
pub use harness::{PredictorParams, PredictorSpec, SynthParams};
pub use pipeline::{run_pipeline, PageImage, PipelineOptions, PipelineReport};
pub use table::{Cell, Dataset, GridCoord, PredictionSet, TablePage, TablePredictions};
