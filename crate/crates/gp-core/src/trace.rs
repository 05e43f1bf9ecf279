// SPDX-License-Identifier: Apache-2.0

//! Backend event traces. Both machines append to an ordered event log; the
//! text export format is shared so conformance checks can compare traces
//! from either backend against golden sequences.

use std::fmt;

/// Memory operation kind, for access-denial records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessOp {
    Read,
    Write,
    Execute,
}

impl fmt::Display for AccessOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessOp::Read => "r",
            AccessOp::Write => "w",
            AccessOp::Execute => "x",
        })
    }
}

/// One entry in a machine's append-only event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Ecreate { enclave: u32 },
    Einit { enclave: u32 },
    Eenter { enclave: u32 },
    Eexit { enclave: u32 },
    Aex { enclave: u32, reason: u32 },
    Eresume { enclave: u32 },
    SyscallDenied,
    IpcSend { from: u32, to: u32 },
    IpcRecv,
    SecureInterrupt { task: u32 },
    TaskResume { task: u32 },
    AccessDenied { pc: u64, addr: u64, op: AccessOp },
}

impl TraceEvent {
    /// Event name as used in the trace export format.
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Ecreate { .. } => "ECREATE",
            TraceEvent::Einit { .. } => "EINIT",
            TraceEvent::Eenter { .. } => "EENTER",
            TraceEvent::Eexit { .. } => "EEXIT",
            TraceEvent::Aex { .. } => "AEX",
            TraceEvent::Eresume { .. } => "ERESUME",
            TraceEvent::SyscallDenied => "SYSCALL_DENIED",
            TraceEvent::IpcSend { .. } => "IPC_SEND",
            TraceEvent::IpcRecv => "IPC_RECV",
            TraceEvent::SecureInterrupt { .. } => "SECURE_INTERRUPT",
            TraceEvent::TaskResume { .. } => "TASK_RESUME",
            TraceEvent::AccessDenied { .. } => "ACCESS_DENIED",
        }
    }

    fn detail(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Ecreate { enclave }
            | TraceEvent::Einit { enclave }
            | TraceEvent::Eenter { enclave }
            | TraceEvent::Eexit { enclave }
            | TraceEvent::Eresume { enclave } => write!(f, " enclave={enclave}"),
            TraceEvent::Aex { enclave, reason } => {
                write!(f, " enclave={enclave} reason={reason}")
            }
            TraceEvent::SyscallDenied | TraceEvent::IpcRecv => Ok(()),
            TraceEvent::IpcSend { from, to } => write!(f, " from={from} to={to}"),
            TraceEvent::SecureInterrupt { task } | TraceEvent::TaskResume { task } => {
                write!(f, " task={task}")
            }
            TraceEvent::AccessDenied { pc, addr, op } => {
                write!(f, " pc=0x{pc:x} addr=0x{addr:x} op={op}")
            }
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        self.detail(f)
    }
}

/// Newline-delimited export: "SEQ EVENT key=value ...".
pub fn render_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for (seq, ev) in events.iter().enumerate() {
        out.push_str(&format!("{seq} {ev}\n"));
    }
    out
}

/// Just the event names, in order. Handy for golden comparisons.
pub fn event_names(events: &[TraceEvent]) -> Vec<&'static str> {
    events.iter().map(TraceEvent::name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_format() {
        let events = vec![
            TraceEvent::Ecreate { enclave: 1 },
            TraceEvent::Aex {
                enclave: 1,
                reason: 14,
            },
            TraceEvent::AccessDenied {
                pc: 0,
                addr: 0x10000,
                op: AccessOp::Read,
            },
        ];
        assert_eq!(
            render_trace(&events),
            "0 ECREATE enclave=1\n1 AEX enclave=1 reason=14\n2 ACCESS_DENIED pc=0x0 addr=0x10000 op=r\n"
        );
    }
}
