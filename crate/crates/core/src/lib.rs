//! Robust dispatch and secondary-controllability analysis for DC power
//! grids under demand-manipulation attacks.

pub mod alpha;
pub mod case_io;
pub mod cost;
pub mod dispatch;
pub mod grid;
pub mod linalg;
pub mod lp;
pub mod primary;
pub mod scalar;
pub mod secondary;

pub use scalar::Scalar;

pub type Grid = grid::Grid<f64>;
pub type FlowMatrices = grid::FlowMatrices<f64>;
pub type LinearProgram = lp::LinearProgram<f64>;
pub type LpResult = lp::LpResult<f64>;
pub type PwlCost = cost::PwlCost<f64>;
pub type DroopModel = primary::DroopModel<f64>;
pub type AttackBounds = primary::AttackBounds<f64>;
pub type FlowChange = primary::FlowChange<f64>;
pub type Dispatch = dispatch::Dispatch<f64>;
pub type ImmuneTrace = dispatch::ImmuneTrace<f64>;
pub type DemandEnvelope = secondary::DemandEnvelope<f64>;
pub type FeasibilityResult = secondary::FeasibilityResult<f64>;
pub type ControllerSpec = secondary::ControllerSpec<f64>;
pub type AlphaBounds = alpha::AlphaBounds<f64>;
