// SPDX-License-Identifier: Apache-2.0

//! GP operation parameters. An operation carries exactly four parameter
//! slots; value parameters hold two 32-bit words, memref parameters carry
//! copied buffers with an explicit output capacity.

use crate::error::WireError;
use crate::wire::{Reader, Writer};

pub const PARAM_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Parameter {
    #[default]
    None,
    ValueIn {
        a: u32,
        b: u32,
    },
    ValueOut {
        a: u32,
        b: u32,
    },
    ValueInOut {
        a: u32,
        b: u32,
    },
    MemrefIn {
        data: Vec<u8>,
    },
    /// `data` is empty on the request path; the TA fills it up to `capacity`.
    MemrefOut {
        capacity: u32,
        data: Vec<u8>,
    },
    MemrefInOut {
        data: Vec<u8>,
        capacity: u32,
    },
}

impl Parameter {
    fn tag(&self) -> u8 {
        match self {
            Parameter::None => 0,
            Parameter::ValueIn { .. } => 1,
            Parameter::ValueOut { .. } => 2,
            Parameter::ValueInOut { .. } => 3,
            Parameter::MemrefIn { .. } => 4,
            Parameter::MemrefOut { .. } => 5,
            Parameter::MemrefInOut { .. } => 6,
        }
    }

    /// Output buffers never exceed their declared capacity.
    pub fn check_capacity(&self) -> Result<(), WireError> {
        match self {
            Parameter::MemrefOut { capacity, data }
            | Parameter::MemrefInOut { data, capacity } => {
                if data.len() > *capacity as usize {
                    return Err(WireError::CapacityExceeded {
                        len: data.len(),
                        capacity: *capacity as usize,
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u8(self.tag());
        match self {
            Parameter::None => {}
            Parameter::ValueIn { a, b }
            | Parameter::ValueOut { a, b }
            | Parameter::ValueInOut { a, b } => {
                w.put_u32(*a);
                w.put_u32(*b);
            }
            Parameter::MemrefIn { data } => w.put_bytes(data),
            Parameter::MemrefOut { capacity, data } => {
                w.put_u32(*capacity);
                w.put_bytes(data);
            }
            Parameter::MemrefInOut { data, capacity } => {
                w.put_bytes(data);
                w.put_u32(*capacity);
            }
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.get_u8("parameter tag")?;
        let param = match tag {
            0 => Parameter::None,
            1 => Parameter::ValueIn {
                a: r.get_u32("value a")?,
                b: r.get_u32("value b")?,
            },
            2 => Parameter::ValueOut {
                a: r.get_u32("value a")?,
                b: r.get_u32("value b")?,
            },
            3 => Parameter::ValueInOut {
                a: r.get_u32("value a")?,
                b: r.get_u32("value b")?,
            },
            4 => Parameter::MemrefIn {
                data: r.get_bytes("memref data")?,
            },
            5 => Parameter::MemrefOut {
                capacity: r.get_u32("memref capacity")?,
                data: r.get_bytes("memref data")?,
            },
            6 => Parameter::MemrefInOut {
                data: r.get_bytes("memref data")?,
                capacity: r.get_u32("memref capacity")?,
            },
            other => return Err(WireError::UnknownParameterTag(other)),
        };
        Ok(param)
    }
}

/// The four parameter slots of one session open or command invocation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Operation(pub [Parameter; PARAM_COUNT]);

impl Operation {
    pub fn new(params: [Parameter; PARAM_COUNT]) -> Self {
        Operation(params)
    }

    /// Operation with `p0` in slot 0 and the rest empty.
    pub fn single(p0: Parameter) -> Self {
        Operation([p0, Parameter::None, Parameter::None, Parameter::None])
    }

    pub fn encode(&self, w: &mut Writer) {
        for p in &self.0 {
            p.encode(w);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let mut params: [Parameter; PARAM_COUNT] = Default::default();
        for slot in &mut params {
            *slot = Parameter::decode(r)?;
        }
        Ok(Operation(params))
    }

    pub fn check_capacities(&self) -> Result<(), WireError> {
        for p in &self.0 {
            p.check_capacity()?;
        }
        Ok(())
    }
}
