//! Phasor-domain time simulation.

pub mod controls;
pub mod dfig;
pub mod fault;
pub mod machine;
pub mod params;

pub use fault::{fault_shunt_admittance, FaultEvent, FaultType};
pub use machine::{sg_derivatives, sg_jacobian, SyncMachineState};
pub mod sim;
pub mod trajectory;

pub use dfig::dfig_derivatives;
pub use sim::{init_dynamics, run_simulation, DynamicModel, DynamicUnit, EventAlignment, SimOptions};
pub use trajectory::{Termination, Trajectory};
