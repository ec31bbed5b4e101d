//! Contrastive pairing of observations with floorplan crops: sample mining,
//! the point-wise InfoNCE objective with analytic gradients, and a small
//! trainable crop embedder.

mod embedding;
mod io;
mod linear;
mod loss;
mod mining;

pub use embedding::{normalize_backward, CropEmbedder, Embedding, SignatureEmbedder, UNIT_NORM_TOLERANCE};
pub use io::{
    embeddings_from_bytes, embeddings_to_bytes, read_embeddings, write_embeddings, write_manifest, ManifestRecord,
    ManifestSample,
};
pub use linear::{
    retrieval_accuracy, train_linear_embedder, CropFeatureSpec, LinearCropEmbedder, TrainSpec, TrainingExample,
    TrainingOutcome, TEXTURE_BUCKETS,
};
pub use loss::{point_info_nce, point_info_nce_grad, BatchGrad, ContrastiveBatch, Denominator, PairTerm, DEFAULT_TAU};
pub use mining::{
    mine_all, mine_samples, Anchor, MinedSet, MiningDataset, MiningSpec, PerturbSpec, Role, Sample, MAX_RETRIES,
};
