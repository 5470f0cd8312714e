//! Box-counting dimension of images, graphs and level sets, energy
//! integrals and Gaussian-mollified occupation measures.

mod boxcount;
mod energy;
mod level_set;

pub use boxcount::{
    box_count, box_dimension, box_dimension_auto, graph_cloud, image_cloud, DimensionEstimate, PointCloud, ScaleLadder,
};
pub use energy::{energy_integral, mu_measure, EnergyValue, MuMeasure};
pub use level_set::{extract_level_set, level_set_dimension, tube_floor, LevelSet};
