// SPDX-License-Identifier: Apache-2.0

//! TrustLite/TyTAN-like platform model. Tasks live in disjoint memory
//! regions; an execution-aware MPU validates every access against a rule
//! table keyed on the current program counter, so secure tasks are isolated
//! from everything else on the platform, including the OS. A secure
//! exception engine preserves that isolation across interrupts, and IPC
//! envelopes are stamped with the sender's load-time measurement by the
//! platform itself.
//!
//! The platform is a sequential state machine: one task is current at any
//! time and the (untrusted) scheduler decides who runs next.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use gp_core::trace::AccessOp;
use gp_core::{compute_digest, Digest, TraceEvent};
use thiserror::Error;

pub const REG_COUNT: usize = 8;
pub type Regs = [u64; REG_COUNT];

pub const SCRUB_VALUE: u64 = 0;
pub const DEFAULT_RULE_LIMIT: usize = 16;
pub const DEFAULT_QUEUE_CAP: usize = 64;
/// Serialized context size: 8 registers plus the pc offset.
pub const SAVE_AREA_LEN: usize = (REG_COUNT + 1) * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u32);

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EampuError {
    #[error("region conflict: {0}")]
    RegionConflict(String),
    #[error("rule table full (limit {0})")]
    RuleTableFull(usize),
    #[error("access denied")]
    AccessDenied,
    #[error("address 0x{0:x} not mapped to any region")]
    UnmappedAddress(u64),
    #[error("EA-MPU fault at 0x{0:x}")]
    EampuFault(u64),
    #[error("task {0} is not the current task")]
    NotCurrent(TaskId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("unknown region {0:?}")]
    UnknownRegion(RegionId),
    #[error("ipc queue full for task {0}")]
    QueueFull(TaskId),
    #[error("ipc queue empty")]
    Empty,
    #[error("task {0} has no saved context")]
    NoSavedContext(TaskId),
    #[error("no runnable task")]
    NoRunnableTask,
    #[error("bad platform setup: {0}")]
    BadSetup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Code,
    Data,
}

#[derive(Debug, Clone)]
pub struct Region {
    pub id: RegionId,
    pub base: u64,
    pub size: u64,
    pub kind: RegionKind,
    pub protected: bool,
    data: Vec<u8>,
}

impl Region {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.base + self.size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Os,
    Normal,
    Secure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Perms {
    pub r: bool,
    pub w: bool,
    pub x: bool,
}

impl Perms {
    pub const RW: Perms = Perms {
        r: true,
        w: true,
        x: false,
    };
    pub const R: Perms = Perms {
        r: true,
        w: false,
        x: false,
    };

    pub fn allows(&self, op: AccessOp) -> bool {
        match op {
            AccessOp::Read => self.r,
            AccessOp::Write => self.w,
            AccessOp::Execute => self.x,
        }
    }
}

/// One EA-MPU rule: code executing inside `subject_code` may perform `perms`
/// on `object`. Locked rules are installed by the loader and immutable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EampuRule {
    pub subject_code: RegionId,
    pub object: RegionId,
    pub perms: Perms,
    pub locked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SavedState {
    pub regs: Regs,
    pub pc_offset: u64,
}

impl SavedState {
    fn to_bytes(self) -> [u8; SAVE_AREA_LEN] {
        let mut out = [0u8; SAVE_AREA_LEN];
        for (i, r) in self.regs.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&r.to_le_bytes());
        }
        out[REG_COUNT * 8..].copy_from_slice(&self.pc_offset.to_le_bytes());
        out
    }

    fn from_bytes(bytes: &[u8]) -> Self {
        let mut regs = [0u64; REG_COUNT];
        for (i, r) in regs.iter_mut().enumerate() {
            *r = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        SavedState {
            regs,
            pc_offset: u64::from_le_bytes(bytes[REG_COUNT * 8..SAVE_AREA_LEN].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    pub code_region: RegionId,
    pub data_regions: BTreeSet<RegionId>,
    pub digest: Digest,
    pub save_area: Option<RegionId>,
    /// Plain context of OS/Normal tasks. Secure task contexts live only in
    /// their protected save area.
    plain_context: Option<SavedState>,
    /// Whether a secure context is currently parked in the save area.
    secure_context_saved: bool,
    pc_offset: u64,
}

/// IPC envelope as delivered. The sender digest is stamped by the platform
/// at send time; no public operation accepts a caller-supplied digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpcEnvelope {
    pub sender_id: TaskId,
    pub sender_digest: Digest,
    pub payload: Vec<u8>,
}

pub struct EampuPlatform {
    regions: BTreeMap<RegionId, Region>,
    tasks: BTreeMap<TaskId, Task>,
    rules: Vec<EampuRule>,
    current: Option<TaskId>,
    queues: BTreeMap<TaskId, VecDeque<IpcEnvelope>>,
    trace: Vec<TraceEvent>,
    rule_limit: usize,
    queue_cap: usize,
    cpu_regs: Regs,
    assigned_regions: BTreeSet<RegionId>,
    next_region: u32,
    next_task: u32,
    rr_cursor: usize,
}

impl EampuPlatform {
    pub fn new() -> Self {
        Self::with_rule_limit(DEFAULT_RULE_LIMIT)
    }

    pub fn with_rule_limit(rule_limit: usize) -> Self {
        EampuPlatform {
            regions: BTreeMap::new(),
            tasks: BTreeMap::new(),
            rules: Vec::new(),
            current: None,
            queues: BTreeMap::new(),
            trace: Vec::new(),
            rule_limit,
            queue_cap: DEFAULT_QUEUE_CAP,
            cpu_regs: [0; REG_COUNT],
            assigned_regions: BTreeSet::new(),
            next_region: 0,
            next_task: 0,
            rr_cursor: 0,
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn rules(&self) -> &[EampuRule] {
        &self.rules
    }

    pub fn rule_limit(&self) -> usize {
        self.rule_limit
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.regions.get(&id)
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.get(&id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn current(&self) -> Option<TaskId> {
        self.current
    }

    pub fn regs(&self) -> Regs {
        self.cpu_regs
    }

    pub fn set_regs(&mut self, regs: Regs) {
        self.cpu_regs = regs;
    }

    /// Raw view of a region's bytes, for test oracles only; not reachable
    /// from task code.
    pub fn region_bytes(&self, id: RegionId) -> Option<&[u8]> {
        self.regions.get(&id).map(|r| r.data.as_slice())
    }

    pub fn add_region(
        &mut self,
        base: u64,
        size: u64,
        kind: RegionKind,
        protected: bool,
    ) -> Result<RegionId, EampuError> {
        if size == 0 {
            return Err(EampuError::RegionConflict("zero-size region".into()));
        }
        let overlap = self
            .regions
            .values()
            .any(|r| base < r.base + r.size && r.base < base + size);
        if overlap {
            return Err(EampuError::RegionConflict(format!(
                "range [0x{base:x}, +0x{size:x}) overlaps an existing region"
            )));
        }
        let id = RegionId(self.next_region);
        self.next_region += 1;
        self.regions.insert(
            id,
            Region {
                id,
                base,
                size,
                kind,
                protected,
                data: vec![0; size as usize],
            },
        );
        Ok(id)
    }

    fn claim_region(&mut self, id: RegionId) -> Result<(), EampuError> {
        if !self.regions.contains_key(&id) {
            return Err(EampuError::UnknownRegion(id));
        }
        if !self.assigned_regions.insert(id) {
            return Err(EampuError::RegionConflict(format!(
                "region {id:?} already assigned to a task"
            )));
        }
        Ok(())
    }

    /// Load a task, measuring its image. Secure tasks get their locked
    /// self-access rules installed atomically; if the rule table cannot hold
    /// them the load fails without side effects.
    pub fn load_task(
        &mut self,
        image: &[u8],
        kind: TaskKind,
        code_region: RegionId,
        data_regions: &[RegionId],
        save_area: Option<RegionId>,
    ) -> Result<TaskId, EampuError> {
        if self.tasks.is_empty() && kind != TaskKind::Os {
            return Err(EampuError::BadSetup("first task must be the OS".into()));
        }
        if kind == TaskKind::Os && self.tasks.values().any(|t| t.kind == TaskKind::Os) {
            return Err(EampuError::BadSetup("OS task already loaded".into()));
        }
        let code = self
            .regions
            .get(&code_region)
            .ok_or(EampuError::UnknownRegion(code_region))?;
        if code.kind != RegionKind::Code {
            return Err(EampuError::BadSetup("code region must have kind code".into()));
        }
        let protected_wanted = kind == TaskKind::Secure;
        if code.protected != protected_wanted {
            return Err(EampuError::BadSetup(format!(
                "code region protection must match task kind {kind:?}"
            )));
        }
        for &dr in data_regions {
            let r = self
                .regions
                .get(&dr)
                .ok_or(EampuError::UnknownRegion(dr))?;
            if r.protected != protected_wanted {
                return Err(EampuError::BadSetup(format!(
                    "data region protection must match task kind {kind:?}"
                )));
            }
        }
        match (kind, save_area) {
            (TaskKind::Secure, Some(sa)) => {
                let r = self
                    .regions
                    .get(&sa)
                    .ok_or(EampuError::UnknownRegion(sa))?;
                if !r.protected || r.size < SAVE_AREA_LEN as u64 {
                    return Err(EampuError::BadSetup(
                        "save area must be protected and large enough".into(),
                    ));
                }
            }
            (TaskKind::Secure, None) => {
                return Err(EampuError::BadSetup("secure task needs a save area".into()))
            }
            (_, Some(_)) => {
                return Err(EampuError::BadSetup(
                    "only secure tasks have a save area".into(),
                ))
            }
            (_, None) => {}
        }
        // one locked rule per data region
        if kind == TaskKind::Secure && self.rules.len() + data_regions.len() > self.rule_limit {
            return Err(EampuError::RuleTableFull(self.rule_limit));
        }
        self.claim_region(code_region)?;
        let mut claimed = vec![code_region];
        let unwind = |platform: &mut Self, claimed: &[RegionId]| {
            for id in claimed {
                platform.assigned_regions.remove(id);
            }
        };
        for &dr in data_regions {
            if let Err(e) = self.claim_region(dr) {
                unwind(self, &claimed);
                return Err(e);
            }
            claimed.push(dr);
        }
        if let Some(sa) = save_area {
            if let Err(e) = self.claim_region(sa) {
                unwind(self, &claimed);
                return Err(e);
            }
        }
        let id = TaskId(self.next_task);
        self.next_task += 1;
        if kind == TaskKind::Secure {
            for &dr in data_regions {
                self.rules.push(EampuRule {
                    subject_code: code_region,
                    object: dr,
                    perms: Perms::RW,
                    locked: true,
                });
            }
        }
        // load the image into the code region
        let len = image.len().min(self.regions[&code_region].size as usize);
        self.regions.get_mut(&code_region).unwrap().data[..len].copy_from_slice(&image[..len]);
        self.tasks.insert(
            id,
            Task {
                id,
                kind,
                code_region,
                data_regions: data_regions.iter().copied().collect(),
                digest: compute_digest(image),
                save_area,
                plain_context: None,
                secure_context_saved: false,
                pc_offset: 0,
            },
        );
        self.queues.insert(id, VecDeque::new());
        if self.current.is_none() {
            self.current = Some(id);
        }
        Ok(id)
    }

    /// Program an MPU rule from supervisor mode. Only the OS task may call
    /// this, and it can never install a rule that touches a protected
    /// region or mark a rule as locked.
    pub fn program_rule(&mut self, rule: EampuRule, caller: TaskId) -> Result<(), EampuError> {
        let caller_task = self
            .tasks
            .get(&caller)
            .ok_or(EampuError::UnknownTask(caller))?;
        if caller_task.kind != TaskKind::Os {
            return Err(EampuError::AccessDenied);
        }
        if rule.locked {
            return Err(EampuError::AccessDenied);
        }
        let object = self
            .regions
            .get(&rule.object)
            .ok_or(EampuError::UnknownRegion(rule.object))?;
        if object.protected {
            return Err(EampuError::AccessDenied);
        }
        if !self.regions.contains_key(&rule.subject_code) {
            return Err(EampuError::UnknownRegion(rule.subject_code));
        }
        if self.rules.len() >= self.rule_limit {
            return Err(EampuError::RuleTableFull(self.rule_limit));
        }
        self.rules.push(rule);
        Ok(())
    }

    fn region_at(&self, addr: u64) -> Option<&Region> {
        self.regions.values().find(|r| r.contains(addr))
    }

    /// Program counter of the current task: its code region base plus the
    /// task's pc offset. Tasks cannot claim a foreign pc; the platform sets
    /// it on dispatch.
    pub fn current_pc(&self) -> Option<u64> {
        let task = self.tasks.get(&self.current?)?;
        let code = self.regions.get(&task.code_region)?;
        Some(code.base + task.pc_offset)
    }

    /// The EA-MPU decision: allowed iff the target region is unprotected or
    /// some rule whose subject region contains `pc` grants `op` on the
    /// target region. Denials are traced.
    pub fn check_access(&mut self, pc: u64, target: u64, op: AccessOp) -> Result<bool, EampuError> {
        let pc_region = self
            .region_at(pc)
            .ok_or(EampuError::UnmappedAddress(pc))?
            .id;
        let target_region = self
            .region_at(target)
            .ok_or(EampuError::UnmappedAddress(target))?;
        let allowed = !target_region.protected
            || self.rules.iter().any(|rule| {
                rule.subject_code == pc_region
                    && rule.object == target_region.id
                    && rule.perms.allows(op)
            });
        if !allowed {
            self.trace.push(TraceEvent::AccessDenied {
                pc,
                addr: target,
                op,
            });
        }
        Ok(allowed)
    }

    fn checked_access(
        &mut self,
        task: TaskId,
        target: u64,
        op: AccessOp,
    ) -> Result<RegionId, EampuError> {
        if self.current != Some(task) {
            return Err(EampuError::NotCurrent(task));
        }
        let pc = self.current_pc().ok_or(EampuError::UnknownTask(task))?;
        let region = self
            .region_at(target)
            .ok_or(EampuError::UnmappedAddress(target))?
            .id;
        if !self.check_access(pc, target, op)? {
            return Err(EampuError::EampuFault(target));
        }
        Ok(region)
    }

    pub fn mem_read(&mut self, task: TaskId, target: u64) -> Result<u8, EampuError> {
        let region = self.checked_access(task, target, AccessOp::Read)?;
        let r = &self.regions[&region];
        Ok(r.data[(target - r.base) as usize])
    }

    pub fn mem_write(&mut self, task: TaskId, target: u64, byte: u8) -> Result<(), EampuError> {
        let region = self.checked_access(task, target, AccessOp::Write)?;
        let r = self.regions.get_mut(&region).unwrap();
        r.data[(target - r.base) as usize] = byte;
        Ok(())
    }

    fn save_area_write(&mut self, region: RegionId, saved: SavedState) {
        let r = self.regions.get_mut(&region).unwrap();
        r.data[..SAVE_AREA_LEN].copy_from_slice(&saved.to_bytes());
    }

    fn save_area_read(&self, region: RegionId) -> SavedState {
        SavedState::from_bytes(&self.regions[&region].data[..SAVE_AREA_LEN])
    }

    fn os_task(&self) -> Option<TaskId> {
        self.tasks
            .values()
            .find(|t| t.kind == TaskKind::Os)
            .map(|t| t.id)
    }

    /// Hardware/software interrupt. The secure exception engine parks a
    /// secure task's context in its protected save area and scrubs the live
    /// registers before the OS regains control; OS/Normal contexts are
    /// switched in the open.
    pub fn interrupt(&mut self) -> Result<(), EampuError> {
        let current = self.current.ok_or(EampuError::NoRunnableTask)?;
        let saved = SavedState {
            regs: self.cpu_regs,
            pc_offset: self.tasks[&current].pc_offset,
        };
        match self.tasks[&current].kind {
            TaskKind::Secure => {
                let sa = self.tasks[&current].save_area.unwrap();
                self.save_area_write(sa, saved);
                self.tasks.get_mut(&current).unwrap().secure_context_saved = true;
                self.cpu_regs = [SCRUB_VALUE; REG_COUNT];
                self.trace
                    .push(TraceEvent::SecureInterrupt { task: current.0 });
            }
            TaskKind::Normal | TaskKind::Os => {
                self.tasks.get_mut(&current).unwrap().plain_context = Some(saved);
            }
        }
        self.current = self.os_task();
        Ok(())
    }

    /// Saved context of an OS/Normal task, as visible to the OS. Secure
    /// contexts are not reachable this way; they exist only inside the
    /// protected save area.
    pub fn plain_context(&self, id: TaskId) -> Option<SavedState> {
        let task = self.tasks.get(&id)?;
        match task.kind {
            TaskKind::Secure => None,
            _ => task.plain_context,
        }
    }

    pub fn resume_task(&mut self, id: TaskId) -> Result<(), EampuError> {
        let task = self.tasks.get(&id).ok_or(EampuError::UnknownTask(id))?;
        let saved = match task.kind {
            TaskKind::Secure => {
                if !task.secure_context_saved {
                    return Err(EampuError::NoSavedContext(id));
                }
                let sa = task.save_area.unwrap();
                let saved = self.save_area_read(sa);
                self.tasks.get_mut(&id).unwrap().secure_context_saved = false;
                saved
            }
            _ => task
                .plain_context
                .ok_or(EampuError::NoSavedContext(id))?,
        };
        if !matches!(self.tasks[&id].kind, TaskKind::Secure) {
            self.tasks.get_mut(&id).unwrap().plain_context = None;
        }
        self.cpu_regs = saved.regs;
        self.tasks.get_mut(&id).unwrap().pc_offset = saved.pc_offset;
        self.current = Some(id);
        self.trace.push(TraceEvent::TaskResume { task: id.0 });
        Ok(())
    }

    /// Hand the CPU to a task (the untrusted scheduler's dispatch). The
    /// platform sets the pc to the task's code entry.
    pub fn dispatch(&mut self, id: TaskId) -> Result<(), EampuError> {
        if !self.tasks.contains_key(&id) {
            return Err(EampuError::UnknownTask(id));
        }
        self.tasks.get_mut(&id).unwrap().pc_offset = 0;
        self.current = Some(id);
        Ok(())
    }

    /// Round-robin selection over all loaded tasks.
    pub fn schedule_next(&mut self) -> Result<TaskId, EampuError> {
        if self.tasks.is_empty() {
            return Err(EampuError::NoRunnableTask);
        }
        let ids: Vec<TaskId> = self.tasks.keys().copied().collect();
        let id = ids[self.rr_cursor % ids.len()];
        self.rr_cursor = (self.rr_cursor + 1) % ids.len();
        self.dispatch(id)?;
        Ok(id)
    }

    pub fn ipc_send(&mut self, from: TaskId, to: TaskId, payload: &[u8]) -> Result<(), EampuError> {
        if self.current != Some(from) {
            return Err(EampuError::NotCurrent(from));
        }
        let sender_digest = self
            .tasks
            .get(&from)
            .ok_or(EampuError::UnknownTask(from))?
            .digest;
        if !self.tasks.contains_key(&to) {
            return Err(EampuError::UnknownTask(to));
        }
        let queue = self.queues.get_mut(&to).unwrap();
        if queue.len() >= self.queue_cap {
            return Err(EampuError::QueueFull(to));
        }
        queue.push_back(IpcEnvelope {
            sender_id: from,
            sender_digest,
            payload: payload.to_vec(),
        });
        self.trace.push(TraceEvent::IpcSend {
            from: from.0,
            to: to.0,
        });
        Ok(())
    }

    pub fn ipc_recv(&mut self, task: TaskId) -> Result<IpcEnvelope, EampuError> {
        if self.current != Some(task) {
            return Err(EampuError::NotCurrent(task));
        }
        let queue = self
            .queues
            .get_mut(&task)
            .ok_or(EampuError::UnknownTask(task))?;
        let env = queue.pop_front().ok_or(EampuError::Empty)?;
        self.trace.push(TraceEvent::IpcRecv);
        Ok(env)
    }
}

impl Default for EampuPlatform {
    fn default() -> Self {
        Self::new()
    }
}
