//! Random map families and the driving systems that select them.

mod driver;
mod family;

pub use driver::{DriverState, DrivingSystem};
pub use family::{CircleFamily, CircleParams, CoordinateFunction, MapFamily, TrigPoly, TrigTerm, U1Family, MAX_ORDER};
