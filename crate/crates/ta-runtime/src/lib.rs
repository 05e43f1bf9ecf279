// SPDX-License-Identifier: Apache-2.0

//! TA hosting runtime. A TA instance couples developer-supplied entry-point
//! hooks with a machine backend; every dispatch runs the hook inside the
//! backend's isolation discipline, and all external effects of a hook go
//! through the service proxy. On the SGX-like backend a proxied call exits
//! the enclave via AEX, the I/O side performs the manager call, and
//! ERESUME puts the hook back exactly where it yielded. On the TyTAN-like
//! backend the same call becomes an authenticated IPC round trip with the
//! TEE Core task.

pub mod backend;
pub mod demo;
pub mod instance;
pub mod package;

pub use backend::{BackendKind, BackendState, TaEnv};
pub use instance::{Lifecycle, TaInstance};

use gp_core::{Operation, ReturnCode};

/// The five GP entry points plus mid-session command handling: the surface
/// a TA developer implements. Hooks receive only the mediated services
/// handle; there is no other way to reach the host.
pub trait TaLogic: Send {
    fn create(&mut self, _services: &mut dyn TaServices) -> ReturnCode {
        ReturnCode::Success
    }

    fn open_session(&mut self, _services: &mut dyn TaServices, _params: &mut Operation) -> ReturnCode {
        ReturnCode::Success
    }

    fn invoke_command(
        &mut self,
        services: &mut dyn TaServices,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode;

    fn close_session(&mut self, _services: &mut dyn TaServices) -> ReturnCode {
        ReturnCode::Success
    }

    fn destroy(&mut self, _services: &mut dyn TaServices) -> ReturnCode {
        ReturnCode::Success
    }
}

/// Services reachable from inside a hook. Each call suspends the logic
/// thread and hands the baton to the I/O side until the manager answers.
pub trait TaServices {
    fn storage_read(&mut self, object_id: &[u8]) -> Result<Vec<u8>, ReturnCode>;
    fn storage_write(&mut self, object_id: &[u8], data: &[u8]) -> Result<(), ReturnCode>;
    fn storage_delete(&mut self, object_id: &[u8]) -> Result<(), ReturnCode>;
    /// Monotonic counter, not wall clock.
    fn get_time(&mut self) -> Result<u64, ReturnCode>;
    /// Internal Client API: act as a client to another TA.
    fn invoke_ta(
        &mut self,
        target: gp_core::Uuid,
        command_id: u32,
        params: Operation,
    ) -> (ReturnCode, Operation);
}
