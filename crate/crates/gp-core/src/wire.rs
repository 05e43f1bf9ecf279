// SPDX-License-Identifier: Apache-2.0

//! Payload codecs for every message in the code table. Fields are serialized
//! in declaration order; counts are 32-bit little-endian; byte fields are
//! length-prefixed. Every request carries a 64-bit correlation id chosen by
//! the sender and echoed in the response.

use crate::error::WireError;
use crate::frame::{Frame, MsgType};
use crate::params::Operation;
use crate::retcode::ReturnCode;
use crate::uuid::Uuid;

pub struct Writer(Vec<u8>);

impl Writer {
    pub fn new() -> Self {
        Writer(Vec::new())
    }

    pub fn put_u8(&mut self, v: u8) {
        self.0.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed byte field.
    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.0.extend_from_slice(v);
    }

    pub fn put_uuid(&mut self, u: &Uuid) {
        self.0.extend_from_slice(u.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl Default for Writer {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::TruncatedPayload(what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn get_u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn get_u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn get_u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn get_bytes(&mut self, what: &'static str) -> Result<Vec<u8>, WireError> {
        let len = self.get_u32(what)? as usize;
        Ok(self.take(len, what)?.to_vec())
    }

    pub fn get_uuid(&mut self) -> Result<Uuid, WireError> {
        let bytes: [u8; 16] = self.take(16, "uuid")?.try_into().unwrap();
        Ok(Uuid::from_bytes(bytes))
    }

    /// Fails if any octets remain unread.
    pub fn finish(self) -> Result<(), WireError> {
        let rest = self.buf.len() - self.pos;
        if rest != 0 {
            return Err(WireError::TrailingBytes(rest));
        }
        Ok(())
    }
}

fn get_code(r: &mut Reader<'_>) -> Result<ReturnCode, WireError> {
    ReturnCode::from_wire(r.get_u32("return code")?)
}

/// Every message the framework speaks, in decoded form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    OpenSessionReq {
        request_id: u64,
        context_id: u64,
        uuid: Uuid,
        params: Operation,
    },
    OpenSessionResp {
        request_id: u64,
        session_id: u64,
        code: ReturnCode,
        params: Operation,
    },
    InvokeReq {
        request_id: u64,
        session_id: u64,
        command_id: u32,
        params: Operation,
    },
    InvokeResp {
        request_id: u64,
        code: ReturnCode,
        params: Operation,
    },
    CloseSessionReq {
        request_id: u64,
        session_id: u64,
    },
    CloseSessionResp {
        request_id: u64,
        code: ReturnCode,
    },
    /// One-way: the manager closes all the context's sessions and then the
    /// connection. End-of-stream is the acknowledgement.
    FinalizeCtx {
        request_id: u64,
        context_id: u64,
    },
    StorageReadReq {
        request_id: u64,
        object_id: Vec<u8>,
    },
    StorageReadResp {
        request_id: u64,
        code: ReturnCode,
        data: Vec<u8>,
    },
    StorageWriteReq {
        request_id: u64,
        object_id: Vec<u8>,
        data: Vec<u8>,
    },
    StorageWriteResp {
        request_id: u64,
        code: ReturnCode,
    },
    StorageDeleteReq {
        request_id: u64,
        object_id: Vec<u8>,
    },
    StorageDeleteResp {
        request_id: u64,
        code: ReturnCode,
    },
    TraceDumpReq {
        request_id: u64,
        uuid: Uuid,
    },
    TraceDumpResp {
        request_id: u64,
        code: ReturnCode,
        text: Vec<u8>,
    },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::OpenSessionReq { .. } => MsgType::OpenSessionReq,
            Message::OpenSessionResp { .. } => MsgType::OpenSessionResp,
            Message::InvokeReq { .. } => MsgType::InvokeReq,
            Message::InvokeResp { .. } => MsgType::InvokeResp,
            Message::CloseSessionReq { .. } => MsgType::CloseSessionReq,
            Message::CloseSessionResp { .. } => MsgType::CloseSessionResp,
            Message::FinalizeCtx { .. } => MsgType::FinalizeCtx,
            Message::StorageReadReq { .. } => MsgType::StorageReadReq,
            Message::StorageReadResp { .. } => MsgType::StorageReadResp,
            Message::StorageWriteReq { .. } => MsgType::StorageWriteReq,
            Message::StorageWriteResp { .. } => MsgType::StorageWriteResp,
            Message::StorageDeleteReq { .. } => MsgType::StorageDeleteReq,
            Message::StorageDeleteResp { .. } => MsgType::StorageDeleteResp,
            Message::TraceDumpReq { .. } => MsgType::TraceDumpReq,
            Message::TraceDumpResp { .. } => MsgType::TraceDumpResp,
        }
    }

    pub fn request_id(&self) -> u64 {
        match self {
            Message::OpenSessionReq { request_id, .. }
            | Message::OpenSessionResp { request_id, .. }
            | Message::InvokeReq { request_id, .. }
            | Message::InvokeResp { request_id, .. }
            | Message::CloseSessionReq { request_id, .. }
            | Message::CloseSessionResp { request_id, .. }
            | Message::FinalizeCtx { request_id, .. }
            | Message::StorageReadReq { request_id, .. }
            | Message::StorageReadResp { request_id, .. }
            | Message::StorageWriteReq { request_id, .. }
            | Message::StorageWriteResp { request_id, .. }
            | Message::StorageDeleteReq { request_id, .. }
            | Message::StorageDeleteResp { request_id, .. }
            | Message::TraceDumpReq { request_id, .. }
            | Message::TraceDumpResp { request_id, .. } => *request_id,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = Writer::new();
        match self {
            Message::OpenSessionReq {
                request_id,
                context_id,
                uuid,
                params,
            } => {
                w.put_u64(*request_id);
                w.put_u64(*context_id);
                w.put_uuid(uuid);
                params.encode(&mut w);
            }
            Message::OpenSessionResp {
                request_id,
                session_id,
                code,
                params,
            } => {
                w.put_u64(*request_id);
                w.put_u64(*session_id);
                w.put_u32(code.wire_value());
                params.encode(&mut w);
            }
            Message::InvokeReq {
                request_id,
                session_id,
                command_id,
                params,
            } => {
                w.put_u64(*request_id);
                w.put_u64(*session_id);
                w.put_u32(*command_id);
                params.encode(&mut w);
            }
            Message::InvokeResp {
                request_id,
                code,
                params,
            } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
                params.encode(&mut w);
            }
            Message::CloseSessionReq {
                request_id,
                session_id,
            } => {
                w.put_u64(*request_id);
                w.put_u64(*session_id);
            }
            Message::CloseSessionResp { request_id, code } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
            }
            Message::FinalizeCtx {
                request_id,
                context_id,
            } => {
                w.put_u64(*request_id);
                w.put_u64(*context_id);
            }
            Message::StorageReadReq {
                request_id,
                object_id,
            } => {
                w.put_u64(*request_id);
                w.put_bytes(object_id);
            }
            Message::StorageReadResp {
                request_id,
                code,
                data,
            } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
                w.put_bytes(data);
            }
            Message::StorageWriteReq {
                request_id,
                object_id,
                data,
            } => {
                w.put_u64(*request_id);
                w.put_bytes(object_id);
                w.put_bytes(data);
            }
            Message::StorageWriteResp { request_id, code } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
            }
            Message::StorageDeleteReq {
                request_id,
                object_id,
            } => {
                w.put_u64(*request_id);
                w.put_bytes(object_id);
            }
            Message::StorageDeleteResp { request_id, code } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
            }
            Message::TraceDumpReq { request_id, uuid } => {
                w.put_u64(*request_id);
                w.put_uuid(uuid);
            }
            Message::TraceDumpResp {
                request_id,
                code,
                text,
            } => {
                w.put_u64(*request_id);
                w.put_u32(code.wire_value());
                w.put_bytes(text);
            }
        }
        Frame::new(self.msg_type(), w.into_bytes())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, WireError> {
        let msg_type = frame.msg_type()?;
        let mut r = Reader::new(&frame.payload);
        let msg = match msg_type {
            MsgType::OpenSessionReq => Message::OpenSessionReq {
                request_id: r.get_u64("request id")?,
                context_id: r.get_u64("context id")?,
                uuid: r.get_uuid()?,
                params: Operation::decode(&mut r)?,
            },
            MsgType::OpenSessionResp => Message::OpenSessionResp {
                request_id: r.get_u64("request id")?,
                session_id: r.get_u64("session id")?,
                code: get_code(&mut r)?,
                params: Operation::decode(&mut r)?,
            },
            MsgType::InvokeReq => Message::InvokeReq {
                request_id: r.get_u64("request id")?,
                session_id: r.get_u64("session id")?,
                command_id: r.get_u32("command id")?,
                params: Operation::decode(&mut r)?,
            },
            MsgType::InvokeResp => Message::InvokeResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
                params: Operation::decode(&mut r)?,
            },
            MsgType::CloseSessionReq => Message::CloseSessionReq {
                request_id: r.get_u64("request id")?,
                session_id: r.get_u64("session id")?,
            },
            MsgType::CloseSessionResp => Message::CloseSessionResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
            },
            MsgType::FinalizeCtx => Message::FinalizeCtx {
                request_id: r.get_u64("request id")?,
                context_id: r.get_u64("context id")?,
            },
            MsgType::StorageReadReq => Message::StorageReadReq {
                request_id: r.get_u64("request id")?,
                object_id: r.get_bytes("object id")?,
            },
            MsgType::StorageReadResp => Message::StorageReadResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
                data: r.get_bytes("data")?,
            },
            MsgType::StorageWriteReq => Message::StorageWriteReq {
                request_id: r.get_u64("request id")?,
                object_id: r.get_bytes("object id")?,
                data: r.get_bytes("data")?,
            },
            MsgType::StorageWriteResp => Message::StorageWriteResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
            },
            MsgType::StorageDeleteReq => Message::StorageDeleteReq {
                request_id: r.get_u64("request id")?,
                object_id: r.get_bytes("object id")?,
            },
            MsgType::StorageDeleteResp => Message::StorageDeleteResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
            },
            MsgType::TraceDumpReq => Message::TraceDumpReq {
                request_id: r.get_u64("request id")?,
                uuid: r.get_uuid()?,
            },
            MsgType::TraceDumpResp => Message::TraceDumpResp {
                request_id: r.get_u64("request id")?,
                code: get_code(&mut r)?,
                text: r.get_bytes("trace text")?,
            },
        };
        r.finish()?;
        Ok(msg)
    }
}
