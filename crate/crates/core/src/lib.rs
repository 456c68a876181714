pub mod backends;
pub mod dynamics;
pub mod graph;
pub mod scenario;
pub mod supervision;
pub mod theory;

pub type Vec3 = nalgebra::Vector3<f64>;
