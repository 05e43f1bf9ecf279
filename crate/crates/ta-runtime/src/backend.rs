// SPDX-License-Identifier: Apache-2.0

//! The backend seam. Both machines sit behind [`BackendState`]; the
//! dispatch code in [`crate::instance`] drives whichever machine is
//! configured and the manager supplies host services through [`TaEnv`].
//! CA-visible results must not depend on the chosen backend.

use std::collections::BTreeSet;

use eampu_machine::{EampuError, EampuPlatform, RegionKind, TaskId, TaskKind};
use enclave_machine::{EnclaveId, EnclaveMachine, MachineError};
use gp_core::{Digest, Frame, Operation, ReturnCode, TraceEvent, Uuid};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Sgx,
    Tytan,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgx" => Ok(BackendKind::Sgx),
            "tytan" => Ok(BackendKind::Tytan),
            other => Err(format!("unknown backend {other:?} (expected sgx or tytan)")),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Sgx => "sgx",
            BackendKind::Tytan => "tytan",
        })
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("enclave machine: {0}")]
    Machine(#[from] MachineError),
    #[error("eampu platform: {0}")]
    Platform(#[from] EampuError),
    #[error("operation not supported on the {0} backend")]
    WrongBackend(BackendKind),
    #[error("TEE Core task refused IPC from unregistered sender")]
    PolicyRefused,
}

/// Host services the manager provides to running TA instances. The owner
/// identity is the channel: the manager created the instance and passes the
/// owner UUID itself, so a hook can never claim a foreign identity.
pub trait TaEnv {
    fn backend(&mut self) -> &mut BackendState;
    /// Handle one storage request frame on behalf of `owner`.
    fn storage_frame(&mut self, owner: Uuid, request: Frame) -> Frame;
    /// Monotonic time counter.
    fn tick_time(&mut self) -> u64;
    /// Internal Client API routing: open+invoke+close against `target`.
    fn internal_invoke(
        &mut self,
        caller: Uuid,
        target: Uuid,
        command_id: u32,
        params: Operation,
    ) -> (ReturnCode, Operation);
}

pub struct SgxBackend {
    pub machine: EnclaveMachine,
    next_base: u64,
}

impl SgxBackend {
    fn new(page_size: u64) -> Self {
        SgxBackend {
            machine: EnclaveMachine::with_page_size(page_size),
            // leave a low guard area unused
            next_base: page_size * 16,
        }
    }

    /// Page-aligned base for a fresh enclave, with a one-page gap.
    pub fn alloc_base(&mut self, image_len: usize) -> u64 {
        let page = self.machine.page_size();
        let base = self.next_base;
        let pages = (image_len as u64).max(1).div_ceil(page) + 1;
        self.next_base = base + pages * page;
        base
    }
}

pub struct TytanBackend {
    pub platform: EampuPlatform,
    pub tee_core: TaskId,
    pub os: TaskId,
    secure_digests: BTreeSet<Digest>,
    next_base: u64,
    probe_seq: u32,
}

const TYTAN_CODE_SIZE: u64 = 0x400;
const TYTAN_DATA_SIZE: u64 = 0x100;
const TYTAN_SAVE_SIZE: u64 = 0x80;

impl TytanBackend {
    fn new(rule_limit: usize) -> Result<Self, BackendError> {
        let mut platform = EampuPlatform::with_rule_limit(rule_limit);
        let os_code = platform.add_region(0, TYTAN_CODE_SIZE, RegionKind::Code, false)?;
        let os_data =
            platform.add_region(TYTAN_CODE_SIZE, TYTAN_DATA_SIZE, RegionKind::Data, false)?;
        let os = platform.load_task(b"untrusted os", TaskKind::Os, os_code, &[os_data], None)?;
        let mut backend = TytanBackend {
            platform,
            tee_core: TaskId(0),
            os,
            secure_digests: BTreeSet::new(),
            next_base: 0x1000,
            probe_seq: 0,
        };
        // the TEE Core task is the first secure task on the platform
        backend.tee_core = backend.load_secure(b"tee core task image")?;
        Ok(backend)
    }

    fn alloc(&mut self, size: u64) -> u64 {
        let base = self.next_base;
        self.next_base += size.max(0x10).next_multiple_of(0x10);
        base
    }

    /// Load a secure task with its own code, data and save-area regions and
    /// register its measurement with the TEE Core policy.
    pub fn load_secure(&mut self, image: &[u8]) -> Result<TaskId, BackendError> {
        let code_size = TYTAN_CODE_SIZE.max(image.len() as u64);
        let code_base = self.alloc(code_size);
        let data_base = self.alloc(TYTAN_DATA_SIZE);
        let save_base = self.alloc(TYTAN_SAVE_SIZE);
        let code = self
            .platform
            .add_region(code_base, code_size, RegionKind::Code, true)?;
        let data = self
            .platform
            .add_region(data_base, TYTAN_DATA_SIZE, RegionKind::Data, true)?;
        let save = self
            .platform
            .add_region(save_base, TYTAN_SAVE_SIZE, RegionKind::Data, true)?;
        let task = self
            .platform
            .load_task(image, TaskKind::Secure, code, &[data], Some(save))?;
        self.secure_digests
            .insert(self.platform.task(task).unwrap().digest);
        Ok(task)
    }

    fn load_normal(&mut self, image: &[u8]) -> Result<TaskId, BackendError> {
        let code_base = self.alloc(TYTAN_CODE_SIZE.max(image.len() as u64));
        let code = self.platform.add_region(
            code_base,
            TYTAN_CODE_SIZE.max(image.len() as u64),
            RegionKind::Code,
            false,
        )?;
        Ok(self
            .platform
            .load_task(image, TaskKind::Normal, code, &[], None)?)
    }

    /// TEE Core session access policy: only senders whose load-time digest
    /// belongs to a registered secure task are served.
    pub fn tee_core_accepts(&self, digest: &Digest) -> bool {
        self.secure_digests.contains(digest)
    }

    /// Drive one raw IPC to the TEE Core task from a freshly loaded task of
    /// the given kind and report the policy decision. Exercises the rule
    /// that session machinery is reachable only from secure tasks.
    pub fn ipc_probe(&mut self, kind: TaskKind) -> Result<ReturnCode, BackendError> {
        self.probe_seq += 1;
        let image = format!("probe task {} {:?}", self.probe_seq, kind);
        let task = match kind {
            TaskKind::Secure => self.load_secure(image.as_bytes())?,
            TaskKind::Normal => self.load_normal(image.as_bytes())?,
            TaskKind::Os => return Err(BackendError::WrongBackend(BackendKind::Tytan)),
        };
        self.platform.dispatch(task)?;
        self.platform.ipc_send(task, self.tee_core, b"open-session probe")?;
        self.platform.dispatch(self.tee_core)?;
        let envelope = self.platform.ipc_recv(self.tee_core)?;
        if self.tee_core_accepts(&envelope.sender_digest) {
            Ok(ReturnCode::Success)
        } else {
            Ok(ReturnCode::ErrorAccessDenied)
        }
    }
}

pub enum BackendState {
    Sgx(SgxBackend),
    Tytan(TytanBackend),
}

impl BackendState {
    pub fn new(kind: BackendKind, page_size: u64, rule_limit: usize) -> Result<Self, BackendError> {
        Ok(match kind {
            BackendKind::Sgx => BackendState::Sgx(SgxBackend::new(page_size)),
            BackendKind::Tytan => BackendState::Tytan(TytanBackend::new(rule_limit)?),
        })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            BackendState::Sgx(_) => BackendKind::Sgx,
            BackendState::Tytan(_) => BackendKind::Tytan,
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        match self {
            BackendState::Sgx(b) => b.machine.trace(),
            BackendState::Tytan(b) => b.platform.trace(),
        }
    }

    pub fn sgx_mut(&mut self) -> Result<&mut SgxBackend, BackendError> {
        match self {
            BackendState::Sgx(b) => Ok(b),
            BackendState::Tytan(_) => Err(BackendError::WrongBackend(BackendKind::Tytan)),
        }
    }

    pub fn tytan_mut(&mut self) -> Result<&mut TytanBackend, BackendError> {
        match self {
            BackendState::Tytan(b) => Ok(b),
            BackendState::Sgx(_) => Err(BackendError::WrongBackend(BackendKind::Sgx)),
        }
    }
}

/// Backend binding of one launched TA instance.
#[derive(Debug, Clone, Copy)]
pub enum BackendBinding {
    Sgx { enclave: EnclaveId, entry: u64 },
    Tytan { task: TaskId },
}
