//! Static network data: buses, branches, loads and generating units, the case
//! file, Y-bus construction and fault-point line splitting.

mod case;
mod split;
pub(crate) mod ybus;

pub use case::{
    load_case, Branch, BranchId, BranchKind, Bus, BusId, BusKind, GeneratorModel, GeneratorUnit, Load,
    PowerSystemCase, SystemInfo, ValidationReport, IEEE39_TOML,
};
pub use split::{split_fraction, split_line_at, SplitCase, MAX_SPLIT_FRACTION};
pub use ybus::{
    build_sequence_ybus, build_ybus, load_admittance, long_line_pi, thevenin_impedance, Sequence, YBus,
};
