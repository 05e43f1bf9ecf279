// SPDX-License-Identifier: Apache-2.0

//! One launched TA and the dispatch discipline around its hooks.
//!
//! Every entry point runs "inside" the backend: on SGX between EENTER and
//! EEXIT, on TyTAN between the TEE Core's request IPC and the completion
//! IPC. A proxied service call suspends the hook (AEX or an IPC to the TEE
//! Core), lets the manager act, and resumes exactly where the hook yielded.

use std::collections::BTreeSet;

use enclave_machine::{EnclaveId, Regs, REG_COUNT};
use gp_core::wire::{Message, Reader, Writer};
use gp_core::{Frame, Operation, ReturnCode, TraceEvent, Uuid};

use crate::backend::{BackendBinding, BackendError, BackendState, TaEnv};
use crate::{TaLogic, TaServices};

/// AEX reason code used for service-proxy exits.
pub const AEX_REASON_SERVICE: u32 = 1;

/// Service tags on the TyTAN proxy channel (first payload octet).
const SVC_STORAGE: u8 = 0x01;
const SVC_TIME: u8 = 0x02;
const SVC_INVOKE: u8 = 0x03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifecycle {
    /// Loaded into the manager, TA_CreateEntryPoint not yet run.
    Launched,
    /// Created, no open sessions.
    Created,
    /// At least one open session.
    Active,
    /// TA_DestroyEntryPoint has run; the instance is dead.
    Destroyed,
}

pub struct TaInstance {
    uuid: Uuid,
    name: String,
    image: Vec<u8>,
    logic: Option<Box<dyn TaLogic>>,
    lifecycle: Lifecycle,
    sessions: BTreeSet<u64>,
    binding: Option<BackendBinding>,
    /// Backend events attributed to this instance's dispatches, in order.
    trace: Vec<TraceEvent>,
    next_request_id: u64,
}

impl TaInstance {
    pub fn new(uuid: Uuid, name: &str, image: Vec<u8>, logic: Box<dyn TaLogic>) -> Self {
        TaInstance {
            uuid,
            name: name.to_string(),
            image,
            logic: Some(logic),
            lifecycle: Lifecycle::Launched,
            sessions: BTreeSet::new(),
            binding: None,
            trace: Vec::new(),
            next_request_id: 0,
        }
    }

    pub fn uuid(&self) -> Uuid {
        self.uuid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.lifecycle
    }

    pub fn sessions(&self) -> &BTreeSet<u64> {
        &self.sessions
    }

    pub fn has_session(&self, id: u64) -> bool {
        self.sessions.contains(&id)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        gp_core::trace::render_trace(&self.trace)
    }

    /// TA_CreateEntryPoint: bind the image to the backend, then run the
    /// create hook under the backend's entry discipline.
    pub fn dispatch_create(&mut self, env: &mut dyn TaEnv) -> ReturnCode {
        if self.lifecycle != Lifecycle::Launched {
            return ReturnCode::ErrorBadState;
        }
        let mark = env.backend().trace().len();
        let binding = match self.bind(env) {
            Ok(b) => b,
            Err(_) => {
                self.trace_delta(env, mark);
                self.lifecycle = Lifecycle::Destroyed;
                return ReturnCode::ErrorGeneric;
            }
        };
        self.binding = Some(binding);
        self.trace_delta(env, mark);
        let code = self.run_hook(env, true, |logic, services| logic.create(services));
        if code == ReturnCode::Success {
            self.lifecycle = Lifecycle::Created;
        } else {
            self.lifecycle = Lifecycle::Destroyed;
            self.binding = None;
        }
        code
    }

    /// TA_OpenSessionEntryPoint for a manager-chosen session id.
    pub fn dispatch_open_session(
        &mut self,
        env: &mut dyn TaEnv,
        session_id: u64,
        params: &mut Operation,
    ) -> ReturnCode {
        match self.lifecycle {
            Lifecycle::Created | Lifecycle::Active => {}
            _ => return ReturnCode::ErrorBadState,
        }
        if self.sessions.contains(&session_id) {
            return ReturnCode::ErrorBadState;
        }
        let code = self.run_hook(env, true, |logic, services| {
            logic.open_session(services, params)
        });
        if code == ReturnCode::Success {
            self.sessions.insert(session_id);
            self.lifecycle = Lifecycle::Active;
        }
        code
    }

    /// TA_InvokeCommandEntryPoint on an open session.
    pub fn dispatch_invoke(
        &mut self,
        env: &mut dyn TaEnv,
        session_id: u64,
        command_id: u32,
        params: &mut Operation,
    ) -> ReturnCode {
        if !self.sessions.contains(&session_id) {
            return ReturnCode::ErrorBadState;
        }
        self.run_hook(env, true, |logic, services| {
            logic.invoke_command(services, command_id, params)
        })
    }

    /// TA_CloseSessionEntryPoint. The session is gone regardless of the
    /// hook's return code.
    pub fn dispatch_close_session(&mut self, env: &mut dyn TaEnv, session_id: u64) -> ReturnCode {
        if !self.sessions.remove(&session_id) {
            return ReturnCode::ErrorBadState;
        }
        let code = self.run_hook(env, true, |logic, services| logic.close_session(services));
        if self.sessions.is_empty() {
            self.lifecycle = Lifecycle::Created;
        }
        code
    }

    /// TA_DestroyEntryPoint. Only legal with no open sessions; the destroy
    /// hook may not issue proxied calls (they fail with ErrorBadState).
    pub fn dispatch_destroy(&mut self, env: &mut dyn TaEnv) -> ReturnCode {
        if self.lifecycle != Lifecycle::Created {
            return ReturnCode::ErrorBadState;
        }
        let code = self.run_hook(env, false, |logic, services| logic.destroy(services));
        self.lifecycle = Lifecycle::Destroyed;
        self.binding = None;
        code
    }

    fn bind(&mut self, env: &mut dyn TaEnv) -> Result<BackendBinding, BackendError> {
        match env.backend() {
            BackendState::Sgx(sgx) => {
                let base = sgx.alloc_base(self.image.len());
                let enclave = sgx.machine.ecreate(&self.image, base)?;
                sgx.machine.einit(enclave)?;
                Ok(BackendBinding::Sgx {
                    enclave,
                    entry: base,
                })
            }
            BackendState::Tytan(t) => {
                let task = t.load_secure(&self.image)?;
                // registration handshake: the new task announces itself and
                // the TEE Core checks the platform-stamped digest
                t.platform.dispatch(task)?;
                t.platform.ipc_send(task, t.tee_core, b"register")?;
                t.platform.dispatch(t.tee_core)?;
                let envelope = t.platform.ipc_recv(t.tee_core)?;
                if !t.tee_core_accepts(&envelope.sender_digest) {
                    return Err(BackendError::PolicyRefused);
                }
                Ok(BackendBinding::Tytan { task })
            }
        }
    }

    fn trace_delta(&mut self, env: &mut dyn TaEnv, mark: usize) {
        self.trace.extend_from_slice(&env.backend().trace()[mark..]);
    }

    fn run_hook<F>(&mut self, env: &mut dyn TaEnv, allow_proxy: bool, f: F) -> ReturnCode
    where
        F: FnOnce(&mut dyn TaLogic, &mut dyn TaServices) -> ReturnCode,
    {
        let Some(binding) = self.binding else {
            return ReturnCode::ErrorBadState;
        };
        let mark = env.backend().trace().len();
        let mut logic = self.logic.take().expect("logic present outside dispatch");
        let code = match binding {
            BackendBinding::Sgx { enclave, entry } => {
                self.run_sgx(env, enclave, entry, allow_proxy, logic.as_mut(), f)
            }
            BackendBinding::Tytan { task } => {
                self.run_tytan(env, task, allow_proxy, logic.as_mut(), f)
            }
        };
        self.logic = Some(logic);
        self.trace_delta(env, mark);
        code
    }

    fn run_sgx<F>(
        &mut self,
        env: &mut dyn TaEnv,
        enclave: EnclaveId,
        entry: u64,
        allow_proxy: bool,
        logic: &mut dyn TaLogic,
        f: F,
    ) -> ReturnCode
    where
        F: FnOnce(&mut dyn TaLogic, &mut dyn TaServices) -> ReturnCode,
    {
        self.next_request_id += 1;
        let seed: Regs = [self.next_request_id; REG_COUNT];
        {
            let Ok(sgx) = env.backend().sgx_mut() else {
                return ReturnCode::ErrorGeneric;
            };
            if sgx.machine.eenter(enclave, entry).is_err() {
                return ReturnCode::ErrorGeneric;
            }
            sgx.machine.set_regs(seed);
        }
        let (code, broken) = {
            let mut services = SgxServices {
                env: &mut *env,
                enclave,
                owner: self.uuid,
                allow_proxy,
                next_request_id: &mut self.next_request_id,
                broken: false,
            };
            let code = f(logic, &mut services);
            (code, services.broken)
        };
        if broken {
            return ReturnCode::ErrorGeneric;
        }
        let Ok(sgx) = env.backend().sgx_mut() else {
            return ReturnCode::ErrorGeneric;
        };
        debug_assert_eq!(sgx.machine.regs(), seed);
        if sgx.machine.eexit(enclave).is_err() {
            return ReturnCode::ErrorGeneric;
        }
        code
    }

    fn run_tytan<F>(
        &mut self,
        env: &mut dyn TaEnv,
        task: eampu_machine::TaskId,
        allow_proxy: bool,
        logic: &mut dyn TaLogic,
        f: F,
    ) -> ReturnCode
    where
        F: FnOnce(&mut dyn TaLogic, &mut dyn TaServices) -> ReturnCode,
    {
        // the TEE Core hands the entry request to the TA task
        let setup = (|| -> Result<(), BackendError> {
            let t = env.backend().tytan_mut()?;
            let tee_core = t.tee_core;
            t.platform.dispatch(tee_core)?;
            t.platform.ipc_send(tee_core, task, b"entry")?;
            t.platform.dispatch(task)?;
            t.platform.ipc_recv(task)?;
            Ok(())
        })();
        if setup.is_err() {
            return ReturnCode::ErrorGeneric;
        }
        let (mut code, broken) = {
            let mut services = TytanServices {
                env: &mut *env,
                task,
                owner: self.uuid,
                allow_proxy,
                next_request_id: &mut self.next_request_id,
                broken: false,
            };
            let code = f(logic, &mut services);
            (code, services.broken)
        };
        if broken {
            code = ReturnCode::ErrorGeneric;
        }
        // completion IPC back to the TEE Core
        let done = (|| -> Result<(), BackendError> {
            let t = env.backend().tytan_mut()?;
            let tee_core = t.tee_core;
            t.platform.dispatch(task)?;
            t.platform.ipc_send(task, tee_core, &code.wire_value().to_le_bytes())?;
            t.platform.dispatch(tee_core)?;
            t.platform.ipc_recv(tee_core)?;
            Ok(())
        })();
        if done.is_err() {
            return ReturnCode::ErrorGeneric;
        }
        code
    }
}

/// Decode a storage response message and extract (code, data).
fn storage_result(msg: Message) -> Result<Vec<u8>, ReturnCode> {
    let (code, data) = match msg {
        Message::StorageReadResp { code, data, .. } => (code, data),
        Message::StorageWriteResp { code, .. } | Message::StorageDeleteResp { code, .. } => {
            (code, Vec::new())
        }
        _ => return Err(ReturnCode::ErrorCommunication),
    };
    if code == ReturnCode::Success {
        Ok(data)
    } else {
        Err(code)
    }
}

struct SgxServices<'a> {
    env: &'a mut dyn TaEnv,
    enclave: EnclaveId,
    owner: Uuid,
    allow_proxy: bool,
    next_request_id: &'a mut u64,
    broken: bool,
}

impl SgxServices<'_> {
    fn fresh_id(&mut self) -> u64 {
        *self.next_request_id += 1;
        *self.next_request_id
    }

    /// AEX out of the enclave so the I/O side can run host code.
    fn yield_out(&mut self) -> Result<Regs, ReturnCode> {
        if !self.allow_proxy {
            return Err(ReturnCode::ErrorBadState);
        }
        let sgx = self
            .env
            .backend()
            .sgx_mut()
            .map_err(|_| ReturnCode::ErrorGeneric)?;
        let saved = sgx.machine.regs();
        if sgx.machine.aex(AEX_REASON_SERVICE).is_err() {
            self.broken = true;
            return Err(ReturnCode::ErrorGeneric);
        }
        // host-side I/O issues its syscall in Normal mode, never in-enclave
        let _ = sgx.machine.syscall();
        Ok(saved)
    }

    fn resume(&mut self, saved: Regs) -> Result<(), ReturnCode> {
        let sgx = self
            .env
            .backend()
            .sgx_mut()
            .map_err(|_| ReturnCode::ErrorGeneric)?;
        if sgx.machine.eresume(self.enclave).is_err() {
            self.broken = true;
            return Err(ReturnCode::ErrorGeneric);
        }
        debug_assert_eq!(sgx.machine.regs(), saved);
        Ok(())
    }

    fn storage_call(&mut self, req: Message) -> Result<Message, ReturnCode> {
        let saved = self.yield_out()?;
        let resp = self.env.storage_frame(self.owner, req.to_frame());
        self.resume(saved)?;
        Message::from_frame(&resp).map_err(|_| ReturnCode::ErrorCommunication)
    }
}

impl TaServices for SgxServices<'_> {
    fn storage_read(&mut self, object_id: &[u8]) -> Result<Vec<u8>, ReturnCode> {
        let req = Message::StorageReadReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
        };
        storage_result(self.storage_call(req)?)
    }

    fn storage_write(&mut self, object_id: &[u8], data: &[u8]) -> Result<(), ReturnCode> {
        let req = Message::StorageWriteReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
            data: data.to_vec(),
        };
        storage_result(self.storage_call(req)?).map(drop)
    }

    fn storage_delete(&mut self, object_id: &[u8]) -> Result<(), ReturnCode> {
        let req = Message::StorageDeleteReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
        };
        storage_result(self.storage_call(req)?).map(drop)
    }

    fn get_time(&mut self) -> Result<u64, ReturnCode> {
        let saved = self.yield_out()?;
        let t = self.env.tick_time();
        self.resume(saved)?;
        Ok(t)
    }

    fn invoke_ta(
        &mut self,
        target: Uuid,
        command_id: u32,
        params: Operation,
    ) -> (ReturnCode, Operation) {
        let saved = match self.yield_out() {
            Ok(s) => s,
            Err(code) => return (code, params),
        };
        let owner = self.owner;
        let result = self.env.internal_invoke(owner, target, command_id, params);
        if self.resume(saved).is_err() {
            return (ReturnCode::ErrorGeneric, result.1);
        }
        result
    }
}

struct TytanServices<'a> {
    env: &'a mut dyn TaEnv,
    task: eampu_machine::TaskId,
    owner: Uuid,
    allow_proxy: bool,
    next_request_id: &'a mut u64,
    broken: bool,
}

impl TytanServices<'_> {
    fn fresh_id(&mut self) -> u64 {
        *self.next_request_id += 1;
        *self.next_request_id
    }

    /// One service round trip: request IPC to the TEE Core, digest policy
    /// check, manager call, reply IPC back to the TA task.
    fn proxy(&mut self, request: Vec<u8>) -> Result<Vec<u8>, ReturnCode> {
        if !self.allow_proxy {
            return Err(ReturnCode::ErrorBadState);
        }
        let envelope = (|| -> Result<eampu_machine::IpcEnvelope, BackendError> {
            let t = self.env.backend().tytan_mut()?;
            let tee_core = t.tee_core;
            t.platform.dispatch(self.task)?;
            t.platform.ipc_send(self.task, tee_core, &request)?;
            t.platform.dispatch(tee_core)?;
            Ok(t.platform.ipc_recv(tee_core)?)
        })()
        .map_err(|_| {
            self.broken = true;
            ReturnCode::ErrorGeneric
        })?;
        let accepted = {
            let t = self
                .env
                .backend()
                .tytan_mut()
                .map_err(|_| ReturnCode::ErrorGeneric)?;
            t.tee_core_accepts(&envelope.sender_digest)
        };
        if !accepted {
            return Err(ReturnCode::ErrorAccessDenied);
        }
        let reply = self.serve(&envelope.payload)?;
        (|| -> Result<Vec<u8>, BackendError> {
            let t = self.env.backend().tytan_mut()?;
            let tee_core = t.tee_core;
            t.platform.dispatch(tee_core)?;
            t.platform.ipc_send(tee_core, self.task, &reply)?;
            t.platform.dispatch(self.task)?;
            Ok(t.platform.ipc_recv(self.task)?.payload)
        })()
        .map_err(|_| {
            self.broken = true;
            ReturnCode::ErrorGeneric
        })
    }

    /// TEE Core side: decode the tagged service request and call into the
    /// manager on the sender's behalf.
    fn serve(&mut self, payload: &[u8]) -> Result<Vec<u8>, ReturnCode> {
        let (&tag, body) = payload
            .split_first()
            .ok_or(ReturnCode::ErrorCommunication)?;
        match tag {
            SVC_STORAGE => {
                let frame = Frame::decode(body).map_err(|_| ReturnCode::ErrorCommunication)?;
                let resp = self.env.storage_frame(self.owner, frame);
                Ok(resp.encode())
            }
            SVC_TIME => Ok(self.env.tick_time().to_le_bytes().to_vec()),
            SVC_INVOKE => {
                let mut r = Reader::new(body);
                let target = r.get_uuid().map_err(|_| ReturnCode::ErrorCommunication)?;
                let command_id = r
                    .get_u32("command id")
                    .map_err(|_| ReturnCode::ErrorCommunication)?;
                let params =
                    Operation::decode(&mut r).map_err(|_| ReturnCode::ErrorCommunication)?;
                r.finish().map_err(|_| ReturnCode::ErrorCommunication)?;
                let owner = self.owner;
                let (code, out) = self.env.internal_invoke(owner, target, command_id, params);
                let mut w = Writer::new();
                w.put_u32(code.wire_value());
                out.encode(&mut w);
                Ok(w.into_bytes())
            }
            _ => Err(ReturnCode::ErrorCommunication),
        }
    }

    fn storage_call(&mut self, req: Message) -> Result<Message, ReturnCode> {
        let mut request = vec![SVC_STORAGE];
        request.extend_from_slice(&req.to_frame().encode());
        let reply = self.proxy(request)?;
        let frame = Frame::decode(&reply).map_err(|_| ReturnCode::ErrorCommunication)?;
        Message::from_frame(&frame).map_err(|_| ReturnCode::ErrorCommunication)
    }
}

impl TaServices for TytanServices<'_> {
    fn storage_read(&mut self, object_id: &[u8]) -> Result<Vec<u8>, ReturnCode> {
        let req = Message::StorageReadReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
        };
        storage_result(self.storage_call(req)?)
    }

    fn storage_write(&mut self, object_id: &[u8], data: &[u8]) -> Result<(), ReturnCode> {
        let req = Message::StorageWriteReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
            data: data.to_vec(),
        };
        storage_result(self.storage_call(req)?).map(drop)
    }

    fn storage_delete(&mut self, object_id: &[u8]) -> Result<(), ReturnCode> {
        let req = Message::StorageDeleteReq {
            request_id: self.fresh_id(),
            object_id: object_id.to_vec(),
        };
        storage_result(self.storage_call(req)?).map(drop)
    }

    fn get_time(&mut self) -> Result<u64, ReturnCode> {
        let reply = self.proxy(vec![SVC_TIME])?;
        let bytes: [u8; 8] = reply
            .try_into()
            .map_err(|_| ReturnCode::ErrorCommunication)?;
        Ok(u64::from_le_bytes(bytes))
    }

    fn invoke_ta(
        &mut self,
        target: Uuid,
        command_id: u32,
        params: Operation,
    ) -> (ReturnCode, Operation) {
        let mut w = Writer::new();
        w.put_u8(SVC_INVOKE);
        w.put_uuid(&target);
        w.put_u32(command_id);
        params.encode(&mut w);
        let reply = match self.proxy(w.into_bytes()) {
            Ok(r) => r,
            Err(code) => return (code, params),
        };
        let decode = (|| -> Result<(ReturnCode, Operation), gp_core::WireError> {
            let mut r = Reader::new(&reply);
            let code = ReturnCode::from_wire(r.get_u32("return code")?)?;
            let out = Operation::decode(&mut r)?;
            r.finish()?;
            Ok((code, out))
        })();
        match decode {
            Ok(result) => result,
            Err(_) => (ReturnCode::ErrorCommunication, params),
        }
    }
}
