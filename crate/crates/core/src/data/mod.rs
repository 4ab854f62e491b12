//! Synthetic geometry and flow data, sample files and manifests.

pub mod flow;
pub mod format;
pub mod generate;
pub mod geometry;
pub mod mesh;
mod sample;

pub use flow::{potential_flow, FlowCase};
pub use format::{decode_sample, encode_sample, read_sample, write_sample, Dataset, Manifest};
pub use generate::{
    flow_sample, gen_flow_dataset, gen_multibody_dataset, generate_flow, generate_multibody,
    FlowData, FlowDatasetConfig, Interval, MultiBodyConfig, MultiBodyData,
};
pub use geometry::{sdf, Circle, Geometry};
pub use mesh::{sample_mesh, PointCloud};
pub use sample::FieldSample;
