// SPDX-License-Identifier: Apache-2.0

//! TEE Client API. A [`Context`] is one connection to the manager; sessions
//! are opened inside it and every call is a blocking frame RPC. Mirrors the
//! GP Client API surface: InitializeContext (connect), OpenSession,
//! InvokeCommand, CloseSession, FinalizeContext.

use std::io::Read;
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use gp_core::wire::Message;
use gp_core::{read_frame, write_frame, Operation, ReturnCode, Uuid, WireError};
use thiserror::Error;

/// Environment variable overriding the manager socket path.
pub const SOCKET_ENV: &str = "VTEE_SOCKET";

pub fn socket_from_env() -> Option<PathBuf> {
    std::env::var_os(SOCKET_ENV).map(PathBuf::from)
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach the manager: {0}")]
    Io(#[from] std::io::Error),
    #[error("wire protocol: {0}")]
    Wire(#[from] WireError),
    #[error("response does not match the request")]
    Protocol,
}

static NEXT_CONTEXT: AtomicU64 = AtomicU64::new(1);

/// An open session. Holds only identifiers; all I/O goes through the
/// owning [`Context`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    id: u64,
}

impl Session {
    pub fn id(&self) -> u64 {
        self.id
    }
}

pub struct Context {
    stream: UnixStream,
    context_id: u64,
    next_request: u64,
}

impl Context {
    /// InitializeContext: connect to the manager socket.
    pub fn connect(socket: &Path) -> Result<Self, ClientError> {
        Ok(Context {
            stream: UnixStream::connect(socket)?,
            context_id: NEXT_CONTEXT.fetch_add(1, Ordering::Relaxed),
            next_request: 0,
        })
    }

    pub fn context_id(&self) -> u64 {
        self.context_id
    }

    fn rpc(&mut self, msg: Message) -> Result<Message, ClientError> {
        let request_id = msg.request_id();
        write_frame(&mut self.stream, &msg.to_frame())?;
        let resp = Message::from_frame(&read_frame(&mut self.stream)?)?;
        if resp.request_id() != request_id {
            return Err(ClientError::Protocol);
        }
        Ok(resp)
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_request += 1;
        self.next_request
    }

    /// OpenSession. On any non-success code the returned session is dead.
    pub fn open_session(
        &mut self,
        uuid: Uuid,
        params: Operation,
    ) -> Result<(ReturnCode, Session, Operation), ClientError> {
        let req = Message::OpenSessionReq {
            request_id: self.fresh_id(),
            context_id: self.context_id,
            uuid,
            params,
        };
        match self.rpc(req)? {
            Message::OpenSessionResp {
                session_id,
                code,
                params,
                ..
            } => Ok((code, Session { id: session_id }, params)),
            _ => Err(ClientError::Protocol),
        }
    }

    /// InvokeCommand on an open session.
    pub fn invoke_command(
        &mut self,
        session: &Session,
        command_id: u32,
        params: Operation,
    ) -> Result<(ReturnCode, Operation), ClientError> {
        let req = Message::InvokeReq {
            request_id: self.fresh_id(),
            session_id: session.id,
            command_id,
            params,
        };
        match self.rpc(req)? {
            Message::InvokeResp { code, params, .. } => Ok((code, params)),
            _ => Err(ClientError::Protocol),
        }
    }

    /// CloseSession. Consumes the session handle.
    pub fn close_session(&mut self, session: Session) -> Result<ReturnCode, ClientError> {
        let req = Message::CloseSessionReq {
            request_id: self.fresh_id(),
            session_id: session.id,
        };
        match self.rpc(req)? {
            Message::CloseSessionResp { code, .. } => Ok(code),
            _ => Err(ClientError::Protocol),
        }
    }

    /// Fetch the manager-side event trace for a TA.
    pub fn trace_dump(&mut self, uuid: Uuid) -> Result<(ReturnCode, String), ClientError> {
        let req = Message::TraceDumpReq {
            request_id: self.fresh_id(),
            uuid,
        };
        match self.rpc(req)? {
            Message::TraceDumpResp { code, text, .. } => {
                Ok((code, String::from_utf8_lossy(&text).into_owned()))
            }
            _ => Err(ClientError::Protocol),
        }
    }

    /// FinalizeContext: the manager closes all remaining sessions, then the
    /// connection. End-of-stream is the acknowledgement.
    pub fn finalize(mut self) -> Result<(), ClientError> {
        let msg = Message::FinalizeCtx {
            request_id: self.fresh_id(),
            context_id: self.context_id,
        };
        write_frame(&mut self.stream, &msg.to_frame())?;
        let mut sink = Vec::new();
        self.stream.read_to_end(&mut sink)?;
        if sink.is_empty() {
            Ok(())
        } else {
            Err(ClientError::Protocol)
        }
    }
}
