// SPDX-License-Identifier: Apache-2.0

//! Shared domain types for the virtual TEE framework: TA identity (UUIDs and
//! image measurements), GP-style return codes and operation parameters, the
//! length-prefixed frame protocol spoken between CAs, the manager and TAs,
//! and the backend trace event vocabulary.

pub mod digest;
pub mod error;
pub mod frame;
pub mod manifest;
pub mod params;
pub mod retcode;
pub mod trace;
pub mod uuid;
pub mod wire;

pub use digest::{compute_digest, Digest};
pub use error::WireError;
pub use frame::{read_frame, write_frame, Frame, MsgType};
pub use manifest::TaManifest;
pub use params::{Operation, Parameter};
pub use retcode::ReturnCode;
pub use trace::TraceEvent;
pub use uuid::Uuid;
