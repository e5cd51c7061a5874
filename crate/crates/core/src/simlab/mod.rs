//! Simulation lab: data-generating processes, exact enumeration for finite
//! laws, a Monte-Carlo truth oracle and the replication harness.

pub mod dgp;
pub mod enumerate;
pub mod harness;
pub mod oracle;
pub mod report;
pub mod scenario;

pub use dgp::{simulate, AttToy, BinaryChain, DgpSpec, DiscreteLaw, PathState, Sim1, Sim2, StructuralModel};
pub use enumerate::{ExactLaw, ExactRegressor, FrameNuisances};
pub use harness::{run_replications, ArmSpec, CellReport, ReplicationReport, StudyConfig};
pub use oracle::{compute_true_gatt, compute_true_gatt_many, Truth};
pub use scenario::Scenario;
