//! Symbolic model of a time-assisted authentication protocol: hash-chain
//! keying, two-segment tickets, ME/P/C role machines, a deterministic
//! network simulator with a Dolev-Yao intruder, trace property checks and
//! operation counters.
//!
//! The crate is `no_std` (with `alloc`). File formats and the command-line
//! runner live in the companion `tap-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod algebra;
pub mod keychain;
pub mod ticket;
pub mod roles;
pub mod sim;
pub mod scenarios;
pub mod checker;
pub mod metrics;

pub use algebra::{hash, open, seal, Digest, Key, KeyKind, KeyPair, KeyRegistry, OpCounts, Term};
pub use keychain::{KeyChain, KeyMsg, RetrievalMode, SecretTable, SessionKey};
pub use ticket::{DriftEstimator, IndexTree, Ticket, TicketError};
