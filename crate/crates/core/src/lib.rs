//! Internal day-ahead market of a community microgrid.
//!
//! The community clearing LP ([`market`]) fixes executed quantities and, via
//! its duals, the internal prices; a second LP ([`sharing`]) then splits the
//! community profit so that no member is worse off than alone. [`verify`]
//! re-derives every duality identity from the outcomes alone.

pub mod lp;
pub mod market;
pub mod scenario;
pub mod sharing;
pub mod synth;
pub mod verify;
