//! Floorplan localization from predicted depth rays, with contrastive
//! disambiguation of geometrically repetitive candidates.

pub mod contrastive;
pub mod crop;
pub mod disambiguate;
pub mod error;
pub mod experiment;
pub mod floorplan;
pub mod metrics;
pub mod pose_scoring;
pub mod ray_model;
pub mod synth;

pub use contrastive::{CropEmbedder, Embedding, SignatureEmbedder};
pub use crop::{Crop, CropSpec};
pub use disambiguate::{DisambigConfig, EmbedderPair, Localization, Localizer};
pub use error::{Error, Result};
pub use floorplan::{FanSpec, FloorPlan, Pose, RayFan};
pub use metrics::{evaluate, EvalRecord, EvalReport};
pub use pose_scoring::{CandidateSet, GtRayTable, PoseGrid, PoseGridSpec, ProbMap};
pub use ray_model::BinSpec;
