// SPDX-License-Identifier: Apache-2.0

//! The manager daemon: routes Client API traffic from unix-socket
//! connections into TA dispatches, answers the service proxy (sealed
//! storage, time, internal invocation) and keeps per-TA traces.

pub mod config;
pub mod core;
pub mod registry;
pub mod server;
pub mod storage;

pub use config::{ConfigError, ManagerConfig};
pub use core::ManagerCore;
pub use server::Server;
pub use storage::{derive_ta_key, object_file_name, SealedStore, StoreError};
