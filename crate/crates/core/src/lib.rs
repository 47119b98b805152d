pub mod filling;
pub mod hierarchy;
pub mod mesh;
pub mod ops;
pub mod scargen;
pub mod training;
