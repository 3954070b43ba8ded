//! Neural surrogate for the synchronization check.

pub mod dataset;
pub mod features;
pub mod labeling;
pub mod network;

pub use dataset::{
    dataset_from_csv, dataset_to_csv, generate_dataset, sidecar, BoundaryFocus, Dataset,
    DatasetSidecar, GenerationConfig, LabeledSample, Provenance, SystemSampler,
};
pub use features::{featurize, featurize_full, FeatureSchema, Featurizer};
pub use labeling::{label_model, label_oracle, Label, LabelingConfig};
pub use network::{evaluate, train, Metrics, SurrogateClassifier, TrainConfig, TrainReport};
