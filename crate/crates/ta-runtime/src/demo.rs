// SPDX-License-Identifier: Apache-2.0

//! Built-in demo TAs. These cover the framework surface end to end: pure
//! computation (echo, doubler), one-proxied-call-per-hook storage use
//! (storage), persistent state across instances (secure-counter) and the
//! internal Client API (cross).

use gp_core::{Operation, Parameter, ReturnCode, Uuid};

use crate::{TaLogic, TaServices};

/// storage TA commands
pub const CMD_PUT: u32 = 1;
pub const CMD_GET: u32 = 2;
pub const CMD_DEL: u32 = 3;
pub const CMD_TIME: u32 = 4;

/// secure-counter TA commands
pub const CMD_INCREMENT: u32 = 1;
pub const CMD_READ: u32 = 2;

/// doubler / cross TA command
pub const CMD_DOUBLE: u32 = 1;
pub const CMD_CALL: u32 = 1;

/// Look up a demo TA implementation by its manifest name.
pub fn demo_logic(name: &str) -> Option<Box<dyn TaLogic>> {
    match name {
        "echo" => Some(Box::new(EchoTa)),
        "doubler" => Some(Box::new(DoublerTa)),
        "storage" => Some(Box::new(StorageTa)),
        "secure-counter" => Some(Box::new(SecureCounterTa)),
        "cross" => Some(Box::new(CrossTa)),
        _ => None,
    }
}

/// Returns every operation unchanged.
pub struct EchoTa;

impl TaLogic for EchoTa {
    fn invoke_command(
        &mut self,
        _services: &mut dyn TaServices,
        _command_id: u32,
        _params: &mut Operation,
    ) -> ReturnCode {
        ReturnCode::Success
    }
}

/// Doubles both words of every value-in-out parameter.
pub struct DoublerTa;

impl TaLogic for DoublerTa {
    fn invoke_command(
        &mut self,
        _services: &mut dyn TaServices,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode {
        if command_id != CMD_DOUBLE {
            return ReturnCode::ErrorBadParameters;
        }
        for p in params.0.iter_mut() {
            if let Parameter::ValueInOut { a, b } = p {
                *a = a.wrapping_mul(2);
                *b = b.wrapping_mul(2);
            }
        }
        ReturnCode::Success
    }
}

/// Exercises sealed storage with exactly one proxied call per session hook:
/// open reads the "state" object, every command performs one storage or
/// time call, close writes "state" back.
pub struct StorageTa;

const STATE_OBJECT: &[u8] = b"state";
const DATA_OBJECT: &[u8] = b"obj";

impl TaLogic for StorageTa {
    fn open_session(&mut self, services: &mut dyn TaServices, _params: &mut Operation) -> ReturnCode {
        // a fresh TA has no state object yet; that is not an error
        match services.storage_read(STATE_OBJECT) {
            Ok(_) | Err(ReturnCode::ErrorItemNotFound) => ReturnCode::Success,
            Err(code) => code,
        }
    }

    fn invoke_command(
        &mut self,
        services: &mut dyn TaServices,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode {
        match command_id {
            CMD_PUT => {
                let Parameter::MemrefIn { data } = &params.0[0] else {
                    return ReturnCode::ErrorBadParameters;
                };
                let data = data.clone();
                match services.storage_write(DATA_OBJECT, &data) {
                    Ok(()) => ReturnCode::Success,
                    Err(code) => code,
                }
            }
            CMD_GET => {
                let Parameter::MemrefOut { capacity, .. } = params.0[0] else {
                    return ReturnCode::ErrorBadParameters;
                };
                let stored = match services.storage_read(DATA_OBJECT) {
                    Ok(data) => data,
                    Err(code) => return code,
                };
                if stored.len() > capacity as usize {
                    return ReturnCode::ErrorBadParameters;
                }
                params.0[0] = Parameter::MemrefOut {
                    capacity,
                    data: stored,
                };
                ReturnCode::Success
            }
            CMD_DEL => match services.storage_delete(DATA_OBJECT) {
                Ok(()) => ReturnCode::Success,
                Err(code) => code,
            },
            CMD_TIME => {
                let t = match services.get_time() {
                    Ok(t) => t,
                    Err(code) => return code,
                };
                params.0[0] = Parameter::ValueOut {
                    a: t as u32,
                    b: (t >> 32) as u32,
                };
                ReturnCode::Success
            }
            _ => ReturnCode::ErrorBadParameters,
        }
    }

    fn close_session(&mut self, services: &mut dyn TaServices) -> ReturnCode {
        match services.storage_write(STATE_OBJECT, b"closed") {
            Ok(()) => ReturnCode::Success,
            Err(code) => code,
        }
    }
}

/// A counter whose value lives only in sealed storage, so it survives
/// instance teardown and manager restarts.
pub struct SecureCounterTa;

const COUNTER_OBJECT: &[u8] = b"counter";

impl SecureCounterTa {
    fn load(services: &mut dyn TaServices) -> Result<u64, ReturnCode> {
        match services.storage_read(COUNTER_OBJECT) {
            Ok(bytes) => {
                let arr: [u8; 8] = bytes
                    .try_into()
                    .map_err(|_| ReturnCode::ErrorGeneric)?;
                Ok(u64::from_le_bytes(arr))
            }
            Err(ReturnCode::ErrorItemNotFound) => Ok(0),
            Err(code) => Err(code),
        }
    }
}

impl TaLogic for SecureCounterTa {
    fn invoke_command(
        &mut self,
        services: &mut dyn TaServices,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode {
        let value = match Self::load(services) {
            Ok(v) => v,
            Err(code) => return code,
        };
        let out = match command_id {
            CMD_READ => value,
            CMD_INCREMENT => {
                let next = value + 1;
                if let Err(code) = services.storage_write(COUNTER_OBJECT, &next.to_le_bytes()) {
                    return code;
                }
                next
            }
            _ => return ReturnCode::ErrorBadParameters,
        };
        params.0[0] = Parameter::ValueOut {
            a: out as u32,
            b: (out >> 32) as u32,
        };
        ReturnCode::Success
    }
}

/// Acts as an internal client: parameter 0 names a target TA, parameter 1
/// is forwarded to the target's CMD_DOUBLE and the result written back.
pub struct CrossTa;

impl TaLogic for CrossTa {
    fn invoke_command(
        &mut self,
        services: &mut dyn TaServices,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode {
        if command_id != CMD_CALL {
            return ReturnCode::ErrorBadParameters;
        }
        let Parameter::MemrefIn { data } = &params.0[0] else {
            return ReturnCode::ErrorBadParameters;
        };
        let Ok(bytes) = <[u8; 16]>::try_from(data.as_slice()) else {
            return ReturnCode::ErrorBadParameters;
        };
        let target = Uuid::from_bytes(bytes);
        let Parameter::ValueInOut { a, b } = params.0[1] else {
            return ReturnCode::ErrorBadParameters;
        };
        let inner = Operation::single(Parameter::ValueInOut { a, b });
        let (code, out) = services.invoke_ta(target, CMD_DOUBLE, inner);
        if code != ReturnCode::Success {
            return code;
        }
        let Parameter::ValueInOut { a, b } = out.0[0] else {
            return ReturnCode::ErrorCommunication;
        };
        params.0[1] = Parameter::ValueInOut { a, b };
        ReturnCode::Success
    }
}
