//! Trajectories, scenes, neighbourhood construction and synthetic crowds.

mod instances;
mod neighborhood;
mod normalize;
pub mod synth;
mod trajectory;

pub use instances::{make_instances, window_count, TrainingInstance};
pub use neighborhood::{
    build_neighborhood, mean_heading, Direction, NeighborSlot, NeighborhoodTensor, DIRECTION_COUNT,
    SLOTS_PER_DIRECTION, SLOT_COUNT,
};
pub use normalize::{normalize, NormalizationTransform};
pub use synth::{synth_generate, Label, SynthConfig, SynthOutput, ZoneLayout};
pub use trajectory::{
    filter_trajectories, parse_trajectories, write_trajectories, Bounds, Frame, Point, Scene, Trajectory,
    TrajectoryFormat, CSV_HEADER, DEFAULT_FRAME_RATE,
};
