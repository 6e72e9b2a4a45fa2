//! Simulation of memristor crossbars whose nodes combine several
//! discrete-level devices.
//!
//! The crate is organised bottom-up:
//!
//! * [`levels`]: how many distinct conductances an `m`-device node reaches.
//! * [`device`]: level placement, aging, variability and programming of one device.
//! * [`crossbar`]: analog vector-matrix products with non-idealities.
//! * [`mapper`]: weight to node-conductance lookup tables.
//! * [`net`]: small network inference through mapped crossbars.
//! * [`experiments`]: configurable sweeps that write CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod device;
pub mod error;
pub mod experiments;
pub mod levels;
pub mod mapper;
pub mod net;
pub mod rng;

pub use crossbar::{
    effective_node_conductance, noisy_read, signed_read, tile_and_sum, ConductanceMatrix, NodeSpec, NonIdealityConfig,
    ProgrammedCrossbar, ReadContext, ReadResult, Topology,
};
pub use device::{
    apply_aging, derive_levels, perturb_level, program_and_verify, AgingState, AgingType, DeviceSpec, LevelPlacement,
};
pub use error::{Error, Result};
pub use levels::{
    count_unique_levels, enumerate_node_levels, select_node_size, simplicial_sequence, LevelCatalog, LevelSet,
};
pub use mapper::{build_quantizer, map_matrix, quantize_weight, MappedMatrix, QuantizerTable};
