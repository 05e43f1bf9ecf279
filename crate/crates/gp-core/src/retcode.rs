// SPDX-License-Identifier: Apache-2.0

use crate::error::WireError;

/// GP-style return codes. Wire values follow the TEE Client API constants so
/// the encoding stays stable across processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReturnCode {
    Success,
    ErrorGeneric,
    ErrorAccessDenied,
    ErrorItemNotFound,
    ErrorBadParameters,
    ErrorBadState,
    ErrorOutOfMemory,
    ErrorTargetDead,
    ErrorCommunication,
    ErrorSecurity,
}

impl ReturnCode {
    pub const ALL: [ReturnCode; 10] = [
        ReturnCode::Success,
        ReturnCode::ErrorGeneric,
        ReturnCode::ErrorAccessDenied,
        ReturnCode::ErrorItemNotFound,
        ReturnCode::ErrorBadParameters,
        ReturnCode::ErrorBadState,
        ReturnCode::ErrorOutOfMemory,
        ReturnCode::ErrorTargetDead,
        ReturnCode::ErrorCommunication,
        ReturnCode::ErrorSecurity,
    ];

    /// Fixed 4-octet wire value (serialized little-endian).
    pub fn wire_value(self) -> u32 {
        match self {
            ReturnCode::Success => 0x0000_0000,
            ReturnCode::ErrorGeneric => 0xffff_0000,
            ReturnCode::ErrorAccessDenied => 0xffff_0001,
            ReturnCode::ErrorBadParameters => 0xffff_0006,
            ReturnCode::ErrorBadState => 0xffff_0007,
            ReturnCode::ErrorItemNotFound => 0xffff_0008,
            ReturnCode::ErrorOutOfMemory => 0xffff_000c,
            ReturnCode::ErrorCommunication => 0xffff_000e,
            ReturnCode::ErrorSecurity => 0xffff_000f,
            ReturnCode::ErrorTargetDead => 0xffff_3024,
        }
    }

    pub fn from_wire(value: u32) -> Result<Self, WireError> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.wire_value() == value)
            .ok_or(WireError::UnknownReturnCode(value))
    }

    pub fn is_success(self) -> bool {
        self == ReturnCode::Success
    }
}
