//! Optimal power flow on radial distribution networks via the branch flow
//! model and its second-order cone relaxation.
//!
//! Indexing: a network has `n + 1` buses numbered `0..=n` with bus 0 the
//! substation. Every non-root bus has exactly one parent, so each line is
//! identified by its child bus. Per-bus and per-line vectors alike have
//! length `n + 1`; for per-line vectors slot 0 is unused.

pub mod c1cond;
pub mod exactness;
pub mod lindistflow;
pub mod netmodel;
pub mod powerflow;
pub mod socp;

pub use netmodel::{BusId, DevicePortfolio, DeviceSpec, Line, RadialNetwork};
pub use powerflow::FlowState;
