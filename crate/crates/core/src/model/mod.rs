//! Models, datasets, local training, and aggregation.

mod aggregate;
mod dataset;
mod params;
mod trainer;

pub use aggregate::aggregate;
pub use dataset::{
    corrupt_labels, dataset_from_csv, dataset_to_csv, generate_synthetic_dataset, Dataset,
};
pub use params::{LayerShape, ParameterVector};
pub use trainer::{
    evaluate, expected_shapes, full_gradient, init_params, loss, train_local, ModelKind,
    TrainerSpec,
};
