// SPDX-License-Identifier: Apache-2.0

//! The length-prefixed binary framing used on every byte-stream channel:
//! a 32-bit little-endian length covering the message-type octet plus the
//! payload that follows it.

use std::io::{Read, Write};

use crate::error::WireError;

/// Message type code table. One octet on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    OpenSessionReq = 0x01,
    OpenSessionResp = 0x02,
    InvokeReq = 0x03,
    InvokeResp = 0x04,
    CloseSessionReq = 0x05,
    CloseSessionResp = 0x06,
    FinalizeCtx = 0x07,
    StorageReadReq = 0x10,
    StorageReadResp = 0x11,
    StorageWriteReq = 0x12,
    StorageWriteResp = 0x13,
    StorageDeleteReq = 0x14,
    StorageDeleteResp = 0x15,
    TraceDumpReq = 0x20,
    TraceDumpResp = 0x21,
}

impl MsgType {
    pub fn from_code(code: u8) -> Result<Self, WireError> {
        use MsgType::*;
        Ok(match code {
            0x01 => OpenSessionReq,
            0x02 => OpenSessionResp,
            0x03 => InvokeReq,
            0x04 => InvokeResp,
            0x05 => CloseSessionReq,
            0x06 => CloseSessionResp,
            0x07 => FinalizeCtx,
            0x10 => StorageReadReq,
            0x11 => StorageReadResp,
            0x12 => StorageWriteReq,
            0x13 => StorageWriteResp,
            0x14 => StorageDeleteReq,
            0x15 => StorageDeleteResp,
            0x20 => TraceDumpReq,
            0x21 => TraceDumpResp,
            other => return Err(WireError::UnknownMsgType(other)),
        })
    }
}

/// One wire frame. The raw type octet is preserved even when it is not in
/// the code table, so unknown frames survive decode and are flagged only
/// when interpreted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame {
            msg_type: msg_type as u8,
            payload,
        }
    }

    pub fn msg_type(&self) -> Result<MsgType, WireError> {
        MsgType::from_code(self.msg_type)
    }

    pub fn encode(&self) -> Vec<u8> {
        let length = 1 + self.payload.len();
        let mut out = Vec::with_capacity(4 + length);
        out.extend_from_slice(&(length as u32).to_le_bytes());
        out.push(self.msg_type);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < 5 {
            return Err(WireError::TruncatedFrame {
                need: 5,
                have: buf.len(),
            });
        }
        let length = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
        if length != buf.len() - 4 {
            return Err(WireError::LengthMismatch {
                declared: length,
                actual: buf.len() - 4,
            });
        }
        Ok(Frame {
            msg_type: buf[4],
            payload: buf[5..].to_vec(),
        })
    }
}

/// Read exactly one frame from a byte stream.
pub fn read_frame(r: &mut impl Read) -> Result<Frame, WireError> {
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let length = u32::from_le_bytes(len_buf) as usize;
    if length < 1 {
        return Err(WireError::LengthMismatch {
            declared: length,
            actual: 0,
        });
    }
    let mut body = vec![0u8; length];
    r.read_exact(&mut body)?;
    Ok(Frame {
        msg_type: body[0],
        payload: body[1..].to_vec(),
    })
}

/// Write one frame to a byte stream.
pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), WireError> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_frame_encoding() {
        let f = Frame::new(MsgType::OpenSessionReq, vec![]);
        assert_eq!(f.encode(), vec![0x01, 0x00, 0x00, 0x00, 0x01]);
    }

    #[test]
    fn three_octet_buffer_is_truncated() {
        assert!(matches!(
            Frame::decode(&[1, 0, 0]),
            Err(WireError::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn length_mismatch_detected() {
        // declares 2 octets after the length field but carries 3
        let buf = [0x02, 0x00, 0x00, 0x00, 0x01, 0xaa, 0xbb];
        assert!(matches!(
            Frame::decode(&buf),
            Err(WireError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn unknown_msg_type_preserved_but_flagged() {
        let f = Frame {
            msg_type: 0x7f,
            payload: vec![1, 2],
        };
        let decoded = Frame::decode(&f.encode()).unwrap();
        assert_eq!(decoded, f);
        assert!(matches!(
            decoded.msg_type(),
            Err(WireError::UnknownMsgType(0x7f))
        ));
    }

    #[test]
    fn stream_round_trip() {
        let f = Frame::new(MsgType::InvokeReq, vec![9; 300]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &f).unwrap();
        let got = read_frame(&mut buf.as_slice()).unwrap();
        assert_eq!(got, f);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn codec_round_trip(msg_type in any::<u8>(),
                            payload in prop::collection::vec(any::<u8>(), 0..65536)) {
            let f = Frame { msg_type, payload };
            prop_assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }
}
