pub mod beams;
pub mod fcm;
pub mod harness;
pub mod latticegen;
pub mod solve;
pub mod sparse;
pub mod voxel;
