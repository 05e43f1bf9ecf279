// SPDX-License-Identifier: Apache-2.0

//! The manager core: one mutable state machine owning the backend, the
//! sealed store, the registry and every live TA instance. The socket
//! server is a thin framing layer over [`ManagerCore::handle_message`].

use std::collections::{BTreeMap, BTreeSet};

use gp_core::wire::Message;
use gp_core::{Frame, Operation, ReturnCode, TraceEvent, Uuid};
use ta_runtime::backend::{BackendState, TaEnv};
use ta_runtime::demo::demo_logic;
use ta_runtime::{Lifecycle, TaInstance};
use thiserror::Error;

use crate::config::ManagerConfig;
use crate::registry::{Registry, RegistryError};
use crate::storage::{SealedStore, StoreError};

/// Connection id reserved for TA-internal client calls.
pub const INTERNAL_CONN: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("backend: {0}")]
    Backend(#[from] ta_runtime::backend::BackendError),
    #[error("storage: {0}")]
    Store(#[from] StoreError),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
}

/// Instance key: single-instance TAs always use slot 0; multi-instance TAs
/// get one slot per session.
type InstanceKey = (Uuid, u64);

struct SessionRec {
    key: InstanceKey,
    conn: u64,
    context: u64,
}

pub struct ManagerCore {
    config: ManagerConfig,
    backend: BackendState,
    store: SealedStore,
    registry: Registry,
    instances: BTreeMap<InstanceKey, TaInstance>,
    /// traces of already-destroyed instances, per TA
    archived: BTreeMap<Uuid, Vec<TraceEvent>>,
    sessions: BTreeMap<u64, SessionRec>,
    next_session_id: u64,
    /// UUIDs with a dispatch currently on the stack (re-entrancy guard)
    in_flight: BTreeSet<Uuid>,
    clock: u64,
}

impl ManagerCore {
    pub fn new(config: ManagerConfig) -> Result<Self, CoreError> {
        std::fs::create_dir_all(&config.storage_dir).map_err(StoreError::from)?;
        let backend = BackendState::new(config.backend, config.page_size, config.rule_limit)?;
        let store = SealedStore::open(&config.storage_dir.join("objects"), config.master_key)?;
        let registry = Registry::open(&config.storage_dir.join("tas"))?;
        Ok(ManagerCore {
            config,
            backend,
            store,
            registry,
            instances: BTreeMap::new(),
            archived: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_session_id: 0,
            in_flight: BTreeSet::new(),
            clock: 0,
        })
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn store(&self) -> &SealedStore {
        &self.store
    }

    pub fn backend_mut(&mut self) -> &mut BackendState {
        &mut self.backend
    }

    pub fn install_package(&mut self, bytes: &[u8]) -> Result<gp_core::TaManifest, CoreError> {
        Ok(self.registry.install(bytes)?)
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn live_instance_count(&self) -> usize {
        self.instances.len()
    }

    /// One status line per concern, for `manager status`.
    pub fn status_text(&self) -> String {
        let installed = self.registry.list().map(|l| l.len()).unwrap_or(0);
        format!(
            "backend={}\ninstalled_tas={}\nlive_instances={}\nopen_sessions={}\n",
            self.backend.kind(),
            installed,
            self.instances.len(),
            self.sessions.len(),
        )
    }

    fn fresh_session_id(&mut self) -> u64 {
        self.next_session_id += 1;
        self.next_session_id
    }

    /// Make sure an instance exists for `key`, lazily loading the package
    /// and running TA_CreateEntryPoint.
    fn ensure_instance(&mut self, key: InstanceKey) -> Result<(), ReturnCode> {
        if let Some(inst) = self.instances.get(&key) {
            if inst.lifecycle() == Lifecycle::Destroyed {
                self.instances.remove(&key);
            } else {
                return Ok(());
            }
        }
        if self.in_flight.contains(&key.0) {
            return Err(ReturnCode::ErrorBadState);
        }
        let pkg = self
            .registry
            .load(&key.0)
            .map_err(|_| ReturnCode::ErrorItemNotFound)?;
        let logic = demo_logic(&pkg.manifest.name).ok_or(ReturnCode::ErrorItemNotFound)?;
        let mut inst = TaInstance::new(key.0, &pkg.manifest.name, pkg.image, logic);
        self.in_flight.insert(key.0);
        let code = inst.dispatch_create(self);
        self.in_flight.remove(&key.0);
        // keep the trace even when create fails
        if code != ReturnCode::Success {
            self.archived
                .entry(key.0)
                .or_default()
                .extend_from_slice(inst.trace());
            return Err(if code == ReturnCode::Success {
                ReturnCode::ErrorGeneric
            } else {
                code
            });
        }
        self.instances.insert(key, inst);
        Ok(())
    }

    /// Run one dispatch against an owned instance with `self` as the
    /// environment (the instance leaves the map for the duration).
    fn with_instance<R>(
        &mut self,
        key: InstanceKey,
        f: impl FnOnce(&mut TaInstance, &mut ManagerCore) -> R,
    ) -> Result<R, ReturnCode> {
        let mut inst = self
            .instances
            .remove(&key)
            .ok_or(ReturnCode::ErrorBadState)?;
        self.in_flight.insert(key.0);
        let r = f(&mut inst, self);
        self.in_flight.remove(&key.0);
        if inst.lifecycle() == Lifecycle::Destroyed {
            self.archived
                .entry(key.0)
                .or_default()
                .extend_from_slice(inst.trace());
        } else {
            self.instances.insert(key, inst);
        }
        Ok(r)
    }

    pub fn open_session(
        &mut self,
        conn: u64,
        context: u64,
        uuid: Uuid,
        mut params: Operation,
    ) -> (ReturnCode, u64, Operation) {
        let manifest = match self.registry.manifest(&uuid) {
            Ok(m) => m,
            Err(_) => return (ReturnCode::ErrorItemNotFound, 0, params),
        };
        let session_id = self.fresh_session_id();
        let key = if manifest.single_instance {
            (uuid, 0)
        } else {
            (uuid, session_id)
        };
        if let Err(code) = self.ensure_instance(key) {
            return (code, 0, params);
        }
        let code = match self.with_instance(key, |inst, env| {
            inst.dispatch_open_session(env, session_id, &mut params)
        }) {
            Ok(code) => code,
            Err(code) => code,
        };
        if code == ReturnCode::Success {
            self.sessions.insert(
                session_id,
                SessionRec { key, conn, context },
            );
            (code, session_id, params)
        } else {
            self.reap_instance(key);
            (code, 0, params)
        }
    }

    /// Destroy an instance that has no sessions left (multi-instance TAs,
    /// or cleanup after a failed open).
    fn reap_instance(&mut self, key: InstanceKey) {
        let sessions_left = self.sessions.values().any(|s| s.key == key);
        let singleton = key.1 == 0;
        if sessions_left || singleton {
            return;
        }
        let _ = self.with_instance(key, |inst, env| inst.dispatch_destroy(env));
    }

    fn session_for(&self, conn: u64, context: u64, session_id: u64) -> Result<InstanceKey, ReturnCode> {
        // unknown or already-closed session: an ordering violation
        let rec = self
            .sessions
            .get(&session_id)
            .ok_or(ReturnCode::ErrorBadState)?;
        if rec.conn != conn || rec.context != context {
            return Err(ReturnCode::ErrorAccessDenied);
        }
        Ok(rec.key)
    }

    pub fn invoke(
        &mut self,
        conn: u64,
        context: u64,
        session_id: u64,
        command_id: u32,
        mut params: Operation,
    ) -> (ReturnCode, Operation) {
        let key = match self.session_for(conn, context, session_id) {
            Ok(k) => k,
            Err(code) => return (code, params),
        };
        let code = match self.with_instance(key, |inst, env| {
            inst.dispatch_invoke(env, session_id, command_id, &mut params)
        }) {
            Ok(code) => code,
            Err(code) => code,
        };
        // output capacities are a protocol invariant, not TA goodwill
        if code == ReturnCode::Success && params.check_capacities().is_err() {
            return (ReturnCode::ErrorSecurity, Operation::default());
        }
        (code, params)
    }

    pub fn close_session(&mut self, conn: u64, context: u64, session_id: u64) -> ReturnCode {
        let key = match self.session_for(conn, context, session_id) {
            Ok(k) => k,
            Err(code) => return code,
        };
        let code = match self.with_instance(key, |inst, env| {
            inst.dispatch_close_session(env, session_id)
        }) {
            Ok(code) => code,
            Err(code) => code,
        };
        self.sessions.remove(&session_id);
        self.reap_instance(key);
        code
    }

    /// Close every session the context still holds.
    pub fn finalize_context(&mut self, conn: u64, context: u64) {
        let ids: Vec<u64> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.conn == conn && s.context == context)
            .map(|(&id, _)| id)
            .collect();
        for id in ids {
            let _ = self.close_session(conn, context, id);
        }
    }

    /// Close everything a dropped connection left behind.
    pub fn finalize_conn(&mut self, conn: u64) {
        let contexts: BTreeSet<u64> = self
            .sessions
            .values()
            .filter(|s| s.conn == conn)
            .map(|s| s.context)
            .collect();
        for context in contexts {
            self.finalize_context(conn, context);
        }
    }

    /// Render the full event trace attributed to one TA, archived
    /// instances first, then live ones.
    pub fn trace_dump(&self, uuid: Uuid) -> Result<String, ReturnCode> {
        let mut events: Vec<TraceEvent> = self.archived.get(&uuid).cloned().unwrap_or_default();
        for ((u, _), inst) in &self.instances {
            if *u == uuid {
                events.extend_from_slice(inst.trace());
            }
        }
        if events.is_empty() {
            return Err(ReturnCode::ErrorItemNotFound);
        }
        Ok(gp_core::trace::render_trace(&events))
    }

    /// The server's single entry point: one decoded request in, one
    /// response out. `None` means "no response" (FinalizeCtx).
    pub fn handle_message(&mut self, conn: u64, msg: Message) -> Option<Message> {
        match msg {
            Message::OpenSessionReq {
                request_id,
                context_id,
                uuid,
                params,
            } => {
                let (code, session_id, params) = self.open_session(conn, context_id, uuid, params);
                Some(Message::OpenSessionResp {
                    request_id,
                    session_id,
                    code,
                    params,
                })
            }
            Message::InvokeReq {
                request_id,
                session_id,
                command_id,
                params,
            } => {
                let context = self
                    .sessions
                    .get(&session_id)
                    .map(|s| s.context)
                    .unwrap_or(0);
                let (code, params) = self.invoke(conn, context, session_id, command_id, params);
                Some(Message::InvokeResp {
                    request_id,
                    code,
                    params,
                })
            }
            Message::CloseSessionReq {
                request_id,
                session_id,
            } => {
                let context = self
                    .sessions
                    .get(&session_id)
                    .map(|s| s.context)
                    .unwrap_or(0);
                let code = self.close_session(conn, context, session_id);
                Some(Message::CloseSessionResp { request_id, code })
            }
            Message::FinalizeCtx { context_id, .. } => {
                self.finalize_context(conn, context_id);
                None
            }
            Message::TraceDumpReq { request_id, uuid } => {
                let (code, text) = match self.trace_dump(uuid) {
                    Ok(text) => (ReturnCode::Success, text.into_bytes()),
                    Err(code) => (code, Vec::new()),
                };
                Some(Message::TraceDumpResp {
                    request_id,
                    code,
                    text,
                })
            }
            // storage traffic comes from TAs through the proxy, never from
            // the client socket
            other => {
                let request_id = other.request_id();
                Some(Message::InvokeResp {
                    request_id,
                    code: ReturnCode::ErrorCommunication,
                    params: Operation::default(),
                })
            }
        }
    }
}

impl TaEnv for ManagerCore {
    fn backend(&mut self) -> &mut BackendState {
        &mut self.backend
    }

    fn storage_frame(&mut self, owner: Uuid, request: Frame) -> Frame {
        let resp = match Message::from_frame(&request) {
            Ok(msg) => self.storage_message(owner, msg),
            Err(_) => Message::StorageReadResp {
                request_id: 0,
                code: ReturnCode::ErrorCommunication,
                data: Vec::new(),
            },
        };
        resp.to_frame()
    }

    fn tick_time(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn internal_invoke(
        &mut self,
        caller: Uuid,
        target: Uuid,
        command_id: u32,
        mut params: Operation,
    ) -> (ReturnCode, Operation) {
        if caller == target || self.in_flight.contains(&target) {
            // no re-entrant dispatch into a TA already on the stack
            return (ReturnCode::ErrorAccessDenied, params);
        }
        let context = caller.as_bytes()[15] as u64;
        let (code, session_id, out) =
            self.open_session(INTERNAL_CONN, context, target, Operation::default());
        let _ = out;
        if code != ReturnCode::Success {
            return (code, params);
        }
        let (code, params_out) =
            self.invoke(INTERNAL_CONN, context, session_id, command_id, params);
        params = params_out;
        let _ = self.close_session(INTERNAL_CONN, context, session_id);
        (code, params)
    }
}

impl ManagerCore {
    fn storage_message(&mut self, owner: Uuid, msg: Message) -> Message {
        match msg {
            Message::StorageReadReq {
                request_id,
                object_id,
            } => match self.store.read(&owner, &object_id) {
                Ok(data) => Message::StorageReadResp {
                    request_id,
                    code: ReturnCode::Success,
                    data,
                },
                Err(StoreError::NotFound) => Message::StorageReadResp {
                    request_id,
                    code: ReturnCode::ErrorItemNotFound,
                    data: Vec::new(),
                },
                Err(StoreError::Corrupt(_)) => Message::StorageReadResp {
                    request_id,
                    code: ReturnCode::ErrorSecurity,
                    data: Vec::new(),
                },
                Err(_) => Message::StorageReadResp {
                    request_id,
                    code: ReturnCode::ErrorGeneric,
                    data: Vec::new(),
                },
            },
            Message::StorageWriteReq {
                request_id,
                object_id,
                data,
            } => {
                let code = self.quota_checked_write(owner, &object_id, &data);
                Message::StorageWriteResp { request_id, code }
            }
            Message::StorageDeleteReq {
                request_id,
                object_id,
            } => {
                let code = match self.store.delete(&owner, &object_id) {
                    Ok(()) => ReturnCode::Success,
                    Err(StoreError::NotFound) => ReturnCode::ErrorItemNotFound,
                    Err(_) => ReturnCode::ErrorGeneric,
                };
                Message::StorageDeleteResp { request_id, code }
            }
            other => Message::StorageReadResp {
                request_id: other.request_id(),
                code: ReturnCode::ErrorCommunication,
                data: Vec::new(),
            },
        }
    }

    fn quota_checked_write(&mut self, owner: Uuid, object_id: &[u8], data: &[u8]) -> ReturnCode {
        let quota = self
            .registry
            .manifest(&owner)
            .map(|m| m.storage_quota)
            .unwrap_or(u64::MAX);
        let current = self.store.len_of(&owner, object_id).unwrap_or(0);
        let projected = self.store.usage(&owner) - current + data.len() as u64;
        if projected > quota {
            return ReturnCode::ErrorOutOfMemory;
        }
        match self.store.write(&owner, object_id, data) {
            Ok(()) => ReturnCode::Success,
            Err(_) => ReturnCode::ErrorGeneric,
        }
    }
}
