// SPDX-License-Identifier: Apache-2.0

//! Abstract SGX-like machine. Models the enclave lifecycle instructions
//! (ECREATE/EINIT/EENTER/EEXIT/AEX/ERESUME), the CPU mode and its register
//! file, the memory access predicate for enclave pages, a cached-translation
//! (TLB) model and syscall prohibition in enclave mode. Every lifecycle
//! event and denied access is appended to an ordered trace.
//!
//! There is no instruction-set emulation: enclave code runs as host
//! callbacks whose memory traffic goes through [`EnclaveMachine::mem_read`]
//! and [`EnclaveMachine::mem_write`].

pub mod grammar;

use std::collections::{BTreeMap, BTreeSet};

use gp_core::trace::AccessOp;
use gp_core::{compute_digest, Digest, TraceEvent};
use thiserror::Error;

pub const REG_COUNT: usize = 8;
pub type Regs = [u64; REG_COUNT];

/// Value a Normal-mode or agent read of an enclave page observes.
pub const ABORT_BYTE: u8 = 0xff;
/// Register value after an AEX scrub.
pub const SCRUB_VALUE: u64 = 0;
pub const DEFAULT_PAGE_SIZE: u64 = 4096;
pub const DEFAULT_SSA_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnclaveId(pub u32);

impl std::fmt::Display for EnclaveId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("address 0x{0:x} not page-aligned")]
    Misaligned(u64),
    #[error("range [0x{base:x}, +0x{size:x}) overlaps an existing enclave")]
    RangeOverlap { base: u64, size: u64 },
    #[error("enclave {0} in wrong lifecycle state for this operation")]
    BadLifecycleState(EnclaveId),
    #[error("unknown enclave {0}")]
    UnknownEnclave(EnclaveId),
    #[error("cpu already in enclave mode")]
    AlreadyInEnclave,
    #[error("entry address 0x{0:x} is not a declared entry point")]
    BadEntryPoint(u64),
    #[error("cpu not in enclave {0}'s mode")]
    NotInEnclave(EnclaveId),
    #[error("cpu not in enclave mode")]
    NotInAnyEnclave,
    #[error("enclave-mode access to a page owned by another enclave")]
    CrossEnclaveFault,
    #[error("state save area is empty")]
    EmptySsa,
    #[error("state save area is full")]
    SsaOverflow,
    #[error("SYSCALL prohibited in enclave mode")]
    SyscallProhibited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnclaveState {
    Created,
    Initialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SavedState {
    pub regs: Regs,
    pub pc: u64,
}

/// Serialized size of one SSA frame inside enclave memory.
const SSA_FRAME_LEN: usize = (REG_COUNT + 1) * 8;

impl SavedState {
    fn to_bytes(self) -> [u8; SSA_FRAME_LEN] {
        let mut out = [0u8; SSA_FRAME_LEN];
        for (i, r) in self.regs.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&r.to_le_bytes());
        }
        out[REG_COUNT * 8..].copy_from_slice(&self.pc.to_le_bytes());
        out
    }

    fn from_bytes(bytes: &[u8]) -> Self {
        let mut regs = [0u64; REG_COUNT];
        for (i, r) in regs.iter_mut().enumerate() {
            *r = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        let pc = u64::from_le_bytes(bytes[REG_COUNT * 8..SSA_FRAME_LEN].try_into().unwrap());
        SavedState { regs, pc }
    }
}

#[derive(Debug, Clone)]
pub struct Enclave {
    pub id: EnclaveId,
    pub base: u64,
    pub size: u64,
    pub state: EnclaveState,
    pub measurement: Digest,
    pub entry_points: BTreeSet<u64>,
    ssa_depth: usize,
}

impl Enclave {
    pub fn range(&self) -> (u64, u64) {
        (self.base, self.size)
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.base + self.size
    }

    pub fn ssa_depth(&self) -> usize {
        self.ssa_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpuMode {
    Normal,
    EnclaveMode(EnclaveId),
}

#[derive(Debug, Clone)]
pub struct CpuState {
    pub mode: CpuMode,
    pub regs: Regs,
    /// Cached translations as half-open address ranges.
    tlb: BTreeSet<(u64, u64)>,
}

#[derive(Debug, Clone)]
struct Page {
    owner: Option<EnclaveId>,
    data: Vec<u8>,
}

/// Who is performing a memory access, for the shared predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Accessor {
    Cpu,
    Agent,
}

pub struct EnclaveMachine {
    page_size: u64,
    ssa_cap: usize,
    pages: BTreeMap<u64, Page>,
    enclaves: BTreeMap<EnclaveId, Enclave>,
    cpu: CpuState,
    trace: Vec<TraceEvent>,
    next_id: u32,
    syscall_hook: Option<Box<dyn FnMut() + Send>>,
}

impl EnclaveMachine {
    pub fn new() -> Self {
        Self::with_page_size(DEFAULT_PAGE_SIZE)
    }

    pub fn with_page_size(page_size: u64) -> Self {
        assert!(page_size.is_power_of_two() && page_size as usize >= SSA_FRAME_LEN);
        EnclaveMachine {
            page_size,
            ssa_cap: DEFAULT_SSA_CAP,
            pages: BTreeMap::new(),
            enclaves: BTreeMap::new(),
            cpu: CpuState {
                mode: CpuMode::Normal,
                regs: [0; REG_COUNT],
                tlb: BTreeSet::new(),
            },
            trace: Vec::new(),
            next_id: 1,
            syscall_hook: None,
        }
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn mode(&self) -> CpuMode {
        self.cpu.mode
    }

    pub fn regs(&self) -> Regs {
        self.cpu.regs
    }

    pub fn set_regs(&mut self, regs: Regs) {
        self.cpu.regs = regs;
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn enclave(&self, id: EnclaveId) -> Option<&Enclave> {
        self.enclaves.get(&id)
    }

    pub fn enclaves(&self) -> impl Iterator<Item = &Enclave> {
        self.enclaves.values()
    }

    pub fn set_syscall_hook(&mut self, hook: Box<dyn FnMut() + Send>) {
        self.syscall_hook = Some(hook);
    }

    /// Preload a cached translation. Tests use this to observe invalidation.
    pub fn tlb_load(&mut self, start: u64, end: u64) {
        self.cpu.tlb.insert((start, end));
    }

    pub fn tlb_entries(&self) -> Vec<(u64, u64)> {
        self.cpu.tlb.iter().copied().collect()
    }

    fn tlb_flush_range(&mut self, base: u64, size: u64) {
        self.cpu
            .tlb
            .retain(|&(s, e)| e <= base || s >= base + size);
    }

    fn page_base(&self, addr: u64) -> u64 {
        addr & !(self.page_size - 1)
    }

    fn owner_of(&self, addr: u64) -> Option<EnclaveId> {
        self.pages
            .get(&self.page_base(addr))
            .and_then(|p| p.owner)
    }

    fn page_mut(&mut self, addr: u64) -> &mut Page {
        let base = self.page_base(addr);
        let page_size = self.page_size as usize;
        self.pages.entry(base).or_insert_with(|| Page {
            owner: None,
            data: vec![0; page_size],
        })
    }

    /// Create an enclave covering the image, page-granular, and record its
    /// measurement. The whole image is measured in one step.
    pub fn ecreate(&mut self, image: &[u8], base: u64) -> Result<EnclaveId, MachineError> {
        if base % self.page_size != 0 {
            return Err(MachineError::Misaligned(base));
        }
        let size = (image.len() as u64).max(1).div_ceil(self.page_size) * self.page_size;
        let overlaps = self
            .enclaves
            .values()
            .any(|e| base < e.base + e.size && e.base < base + size);
        if overlaps {
            return Err(MachineError::RangeOverlap { base, size });
        }
        let id = EnclaveId(self.next_id);
        self.next_id += 1;
        let page_size = self.page_size as usize;
        for (i, page_addr) in (base..base + size).step_by(page_size).enumerate() {
            let start = i * page_size;
            let end = (start + page_size).min(image.len());
            let mut data = vec![0; page_size];
            if start < image.len() {
                data[..end - start].copy_from_slice(&image[start..end]);
            }
            self.pages.insert(
                page_addr,
                Page {
                    owner: Some(id),
                    data,
                },
            );
        }
        self.enclaves.insert(
            id,
            Enclave {
                id,
                base,
                size,
                state: EnclaveState::Created,
                measurement: compute_digest(image),
                entry_points: [base].into_iter().collect(),
                ssa_depth: 0,
            },
        );
        self.trace.push(TraceEvent::Ecreate { enclave: id.0 });
        Ok(id)
    }

    pub fn einit(&mut self, id: EnclaveId) -> Result<(), MachineError> {
        let enclave = self
            .enclaves
            .get_mut(&id)
            .ok_or(MachineError::BadLifecycleState(id))?;
        if enclave.state != EnclaveState::Created {
            return Err(MachineError::BadLifecycleState(id));
        }
        enclave.state = EnclaveState::Initialized;
        self.trace.push(TraceEvent::Einit { enclave: id.0 });
        Ok(())
    }

    pub fn eenter(&mut self, id: EnclaveId, entry: u64) -> Result<(), MachineError> {
        if self.cpu.mode != CpuMode::Normal {
            return Err(MachineError::AlreadyInEnclave);
        }
        let enclave = self
            .enclaves
            .get(&id)
            .ok_or(MachineError::BadLifecycleState(id))?;
        if enclave.state != EnclaveState::Initialized {
            return Err(MachineError::BadLifecycleState(id));
        }
        if !enclave.entry_points.contains(&entry) {
            return Err(MachineError::BadEntryPoint(entry));
        }
        if enclave.ssa_depth != 0 {
            // an interrupted enclave must be re-entered via ERESUME
            return Err(MachineError::BadLifecycleState(id));
        }
        let (base, size) = enclave.range();
        self.tlb_flush_range(base, size);
        self.cpu.mode = CpuMode::EnclaveMode(id);
        self.trace.push(TraceEvent::Eenter { enclave: id.0 });
        Ok(())
    }

    pub fn eexit(&mut self, id: EnclaveId) -> Result<(), MachineError> {
        if self.cpu.mode != CpuMode::EnclaveMode(id) {
            return Err(MachineError::NotInEnclave(id));
        }
        let (base, size) = self.enclaves[&id].range();
        self.tlb_flush_range(base, size);
        // registers are deliberately NOT scrubbed on a synchronous exit
        self.cpu.mode = CpuMode::Normal;
        self.trace.push(TraceEvent::Eexit { enclave: id.0 });
        Ok(())
    }

    /// Asynchronous exit: save state into the enclave's SSA, scrub the
    /// registers and drop back to Normal mode.
    pub fn aex(&mut self, reason: u32) -> Result<(), MachineError> {
        let id = match self.cpu.mode {
            CpuMode::EnclaveMode(id) => id,
            CpuMode::Normal => return Err(MachineError::NotInAnyEnclave),
        };
        let enclave = self.enclaves.get(&id).unwrap();
        if enclave.ssa_depth >= self.ssa_cap {
            return Err(MachineError::SsaOverflow);
        }
        let saved = SavedState {
            regs: self.cpu.regs,
            pc: enclave.base,
        };
        let slot = enclave.ssa_depth;
        let slot_addr = self.ssa_slot_addr(&self.enclaves[&id], slot);
        self.store_ssa_frame(slot_addr, saved);
        let enclave = self.enclaves.get_mut(&id).unwrap();
        enclave.ssa_depth += 1;
        let (base, size) = (enclave.base, enclave.size);
        self.cpu.regs = [SCRUB_VALUE; REG_COUNT];
        self.cpu.mode = CpuMode::Normal;
        self.tlb_flush_range(base, size);
        self.trace.push(TraceEvent::Aex {
            enclave: id.0,
            reason,
        });
        Ok(())
    }

    pub fn eresume(&mut self, id: EnclaveId) -> Result<(), MachineError> {
        if self.cpu.mode != CpuMode::Normal {
            return Err(MachineError::AlreadyInEnclave);
        }
        let enclave = self
            .enclaves
            .get(&id)
            .ok_or(MachineError::BadLifecycleState(id))?;
        if enclave.state != EnclaveState::Initialized {
            return Err(MachineError::BadLifecycleState(id));
        }
        if enclave.ssa_depth == 0 {
            return Err(MachineError::EmptySsa);
        }
        let slot = enclave.ssa_depth - 1;
        let slot_addr = self.ssa_slot_addr(enclave, slot);
        let saved = self.load_ssa_frame(slot_addr);
        let enclave = self.enclaves.get_mut(&id).unwrap();
        enclave.ssa_depth -= 1;
        self.cpu.regs = saved.regs;
        self.cpu.mode = CpuMode::EnclaveMode(id);
        self.trace.push(TraceEvent::Eresume { enclave: id.0 });
        Ok(())
    }

    /// SSA frames live at the top of the enclave range, growing downward.
    fn ssa_slot_addr(&self, enclave: &Enclave, slot: usize) -> u64 {
        enclave.base + enclave.size - ((slot + 1) * SSA_FRAME_LEN) as u64
    }

    fn store_ssa_frame(&mut self, addr: u64, saved: SavedState) {
        for (i, byte) in saved.to_bytes().iter().enumerate() {
            self.raw_write(addr + i as u64, *byte);
        }
    }

    fn load_ssa_frame(&self, addr: u64) -> SavedState {
        let bytes: Vec<u8> = (0..SSA_FRAME_LEN as u64)
            .map(|i| self.raw_read(addr + i))
            .collect();
        SavedState::from_bytes(&bytes)
    }

    fn raw_read(&self, addr: u64) -> u8 {
        let base = self.page_base(addr);
        self.pages
            .get(&base)
            .map(|p| p.data[(addr - base) as usize])
            .unwrap_or(0)
    }

    fn raw_write(&mut self, addr: u64, byte: u8) {
        let offset = (addr - self.page_base(addr)) as usize;
        self.page_mut(addr).data[offset] = byte;
    }

    fn access(
        &mut self,
        accessor: Accessor,
        addr: u64,
        op: AccessOp,
        write_byte: Option<u8>,
    ) -> Result<u8, MachineError> {
        let owner = self.owner_of(addr);
        let mode = self.cpu.mode;
        let effective_mode = match accessor {
            Accessor::Cpu => mode,
            Accessor::Agent => CpuMode::Normal,
        };
        match (effective_mode, owner) {
            (CpuMode::EnclaveMode(e), Some(o)) if e == o => {}
            (CpuMode::EnclaveMode(_), Some(_)) => return Err(MachineError::CrossEnclaveFault),
            (CpuMode::EnclaveMode(_), None) => {}
            (CpuMode::Normal, Some(_)) => {
                // abort semantics: reads observe the abort pattern, writes
                // are silently dropped
                let pc = 0;
                self.trace.push(TraceEvent::AccessDenied { pc, addr, op });
                return Ok(ABORT_BYTE);
            }
            (CpuMode::Normal, None) => {}
        }
        if accessor == Accessor::Cpu {
            let base = self.page_base(addr);
            self.cpu.tlb.insert((base, base + self.page_size));
        }
        match write_byte {
            Some(byte) => {
                self.raw_write(addr, byte);
                Ok(byte)
            }
            None => Ok(self.raw_read(addr)),
        }
    }

    pub fn mem_read(&mut self, addr: u64) -> Result<u8, MachineError> {
        self.access(Accessor::Cpu, addr, AccessOp::Read, None)
    }

    pub fn mem_write(&mut self, addr: u64, byte: u8) -> Result<(), MachineError> {
        self.access(Accessor::Cpu, addr, AccessOp::Write, Some(byte))
            .map(|_| ())
    }

    /// Physical access by a non-CPU agent (DMA etc). Never faults; enclave
    /// pages behave as nonexistent memory.
    pub fn agent_read(&mut self, addr: u64) -> u8 {
        self.access(Accessor::Agent, addr, AccessOp::Read, None)
            .expect("agent access never faults")
    }

    pub fn agent_write(&mut self, addr: u64, byte: u8) {
        self.access(Accessor::Agent, addr, AccessOp::Write, Some(byte))
            .expect("agent access never faults");
    }

    pub fn syscall(&mut self) -> Result<(), MachineError> {
        if let CpuMode::EnclaveMode(_) = self.cpu.mode {
            self.trace.push(TraceEvent::SyscallDenied);
            return Err(MachineError::SyscallProhibited);
        }
        if let Some(hook) = self.syscall_hook.as_mut() {
            hook();
        }
        Ok(())
    }
}

impl Default for EnclaveMachine {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: u64 = 0x10000;

    fn machine_with_enclave() -> (EnclaveMachine, EnclaveId) {
        let mut m = EnclaveMachine::new();
        let id = m.ecreate(&[0xaa; 8192], BASE).unwrap();
        (m, id)
    }

    fn initialized() -> (EnclaveMachine, EnclaveId) {
        let (mut m, id) = machine_with_enclave();
        m.einit(id).unwrap();
        (m, id)
    }

    #[test]
    fn first_creation() {
        let (m, id) = machine_with_enclave();
        assert_eq!(id, EnclaveId(1));
        let e = m.enclave(id).unwrap();
        assert_eq!(e.state, EnclaveState::Created);
        assert_eq!(e.range(), (BASE, 8192));
    }

    #[test]
    fn overlapping_create_rejected() {
        let (mut m, _) = machine_with_enclave();
        assert!(matches!(
            m.ecreate(&[1; 16], BASE + 4096),
            Err(MachineError::RangeOverlap { .. })
        ));
    }

    #[test]
    fn misaligned_base_rejected() {
        let mut m = EnclaveMachine::new();
        assert!(matches!(
            m.ecreate(&[1; 16], 12),
            Err(MachineError::Misaligned(12))
        ));
    }

    #[test]
    fn measurement_matches_digest_oracle() {
        let image = vec![0x5a; 5000];
        let mut m = EnclaveMachine::new();
        let id = m.ecreate(&image, BASE).unwrap();
        assert_eq!(m.enclave(id).unwrap().measurement, compute_digest(&image));
    }

    #[test]
    fn einit_lifecycle() {
        let (mut m, id) = machine_with_enclave();
        m.einit(id).unwrap();
        assert_eq!(m.enclave(id).unwrap().state, EnclaveState::Initialized);
        assert!(matches!(
            m.einit(id),
            Err(MachineError::BadLifecycleState(_))
        ));
    }

    #[test]
    fn eenter_before_einit_rejected() {
        let (mut m, id) = machine_with_enclave();
        assert!(matches!(
            m.eenter(id, BASE),
            Err(MachineError::BadLifecycleState(_))
        ));
    }

    #[test]
    fn eenter_sets_mode_and_checks_entry() {
        let (mut m, id) = initialized();
        assert!(matches!(
            m.eenter(id, BASE + 8),
            Err(MachineError::BadEntryPoint(_))
        ));
        m.eenter(id, BASE).unwrap();
        assert_eq!(m.mode(), CpuMode::EnclaveMode(id));
    }

    #[test]
    fn eenter_invalidates_overlapping_tlb() {
        let (mut m, id) = initialized();
        m.tlb_load(BASE + 100, BASE + 200);
        m.tlb_load(0x1000, 0x2000);
        m.eenter(id, BASE).unwrap();
        let (base, size) = m.enclave(id).unwrap().range();
        assert!(m
            .tlb_entries()
            .iter()
            .all(|&(s, e)| e <= base || s >= base + size));
        assert!(m.tlb_entries().contains(&(0x1000, 0x2000)));
    }

    #[test]
    fn eexit_returns_to_normal_without_scrub() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.set_regs([1, 2, 3, 4, 5, 6, 7, 8]);
        m.eexit(id).unwrap();
        assert_eq!(m.mode(), CpuMode::Normal);
        assert_eq!(m.regs(), [1, 2, 3, 4, 5, 6, 7, 8]);
        let names = gp_core::trace::event_names(m.trace());
        assert_eq!(names, vec!["ECREATE", "EINIT", "EENTER", "EEXIT"]);
    }

    #[test]
    fn eexit_outside_enclave_rejected() {
        let (mut m, id) = initialized();
        assert!(matches!(m.eexit(id), Err(MachineError::NotInEnclave(_))));
    }

    #[test]
    fn aex_scrubs_and_pushes_ssa() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.set_regs([1, 2, 3, 4, 5, 6, 7, 8]);
        m.aex(14).unwrap();
        assert_eq!(m.regs(), [SCRUB_VALUE; REG_COUNT]);
        assert_eq!(m.mode(), CpuMode::Normal);
        assert_eq!(m.enclave(id).unwrap().ssa_depth(), 1);
    }

    #[test]
    fn aex_outside_enclave_rejected() {
        let (mut m, _) = initialized();
        assert!(matches!(m.aex(0), Err(MachineError::NotInAnyEnclave)));
    }

    #[test]
    fn normal_mode_read_of_ssa_page_returns_abort_pattern() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.set_regs([0x11; REG_COUNT]);
        m.aex(0).unwrap();
        // the SSA frame sits at the top of the enclave range
        let (base, size) = m.enclave(id).unwrap().range();
        for offset in 0..72 {
            assert_eq!(m.mem_read(base + size - 72 + offset).unwrap(), ABORT_BYTE);
        }
    }

    #[test]
    fn eresume_restores_exactly() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        let regs = [9, 8, 7, 6, 5, 4, 3, 2];
        m.set_regs(regs);
        m.aex(0).unwrap();
        m.eresume(id).unwrap();
        assert_eq!(m.regs(), regs);
        assert_eq!(m.mode(), CpuMode::EnclaveMode(id));
    }

    #[test]
    fn eresume_with_empty_ssa_rejected() {
        let (mut m, id) = initialized();
        assert!(matches!(m.eresume(id), Err(MachineError::EmptySsa)));
    }

    #[test]
    fn interrupted_call_trace() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.aex(3).unwrap();
        m.eresume(id).unwrap();
        m.eexit(id).unwrap();
        let names = gp_core::trace::event_names(m.trace());
        assert_eq!(
            names,
            vec!["ECREATE", "EINIT", "EENTER", "AEX", "ERESUME", "EEXIT"]
        );
    }

    #[test]
    fn normal_mode_read_of_enclave_page_aborts() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.mem_write(BASE + 10, 0x42).unwrap();
        m.eexit(id).unwrap();
        assert_eq!(m.mem_read(BASE + 10).unwrap(), ABORT_BYTE);
        assert!(matches!(
            m.trace().last(),
            Some(TraceEvent::AccessDenied { .. })
        ));
    }

    #[test]
    fn normal_mode_write_to_enclave_page_dropped() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.mem_write(BASE, 0x42).unwrap();
        m.eexit(id).unwrap();
        m.mem_write(BASE, 0x99).unwrap();
        m.eenter(id, BASE).unwrap();
        assert_eq!(m.mem_read(BASE).unwrap(), 0x42);
    }

    #[test]
    fn cross_enclave_access_faults() {
        let (mut m, id1) = initialized();
        let id2 = m.ecreate(&[0xbb; 64], 0x40000).unwrap();
        m.einit(id2).unwrap();
        m.eenter(id1, BASE).unwrap();
        assert!(matches!(
            m.mem_read(0x40000),
            Err(MachineError::CrossEnclaveFault)
        ));
        assert!(matches!(
            m.mem_write(0x40000, 1),
            Err(MachineError::CrossEnclaveFault)
        ));
    }

    #[test]
    fn enclave_mode_unowned_access_succeeds() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.mem_write(0x99000, 0x77).unwrap();
        assert_eq!(m.mem_read(0x99000).unwrap(), 0x77);
    }

    #[test]
    fn agent_sees_abort_semantics() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        m.mem_write(BASE + 4, 0x55).unwrap();
        m.eexit(id).unwrap();
        assert_eq!(m.agent_read(BASE + 4), ABORT_BYTE);
        m.agent_write(BASE + 4, 0x00);
        m.eenter(id, BASE).unwrap();
        assert_eq!(m.mem_read(BASE + 4).unwrap(), 0x55);
    }

    #[test]
    fn agent_unowned_access_normal() {
        let mut m = EnclaveMachine::new();
        m.agent_write(0x5000, 0x12);
        assert_eq!(m.agent_read(0x5000), 0x12);
    }

    #[test]
    fn syscall_prohibited_in_enclave_mode() {
        let (mut m, id) = initialized();
        m.eenter(id, BASE).unwrap();
        assert!(matches!(m.syscall(), Err(MachineError::SyscallProhibited)));
        assert!(matches!(m.syscall(), Err(MachineError::SyscallProhibited)));
        let denials = m
            .trace()
            .iter()
            .filter(|e| matches!(e, TraceEvent::SyscallDenied))
            .count();
        assert_eq!(denials, 2);
    }

    #[test]
    fn syscall_dispatches_to_hook_in_normal_mode() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let mut m = EnclaveMachine::new();
        let count = Arc::new(AtomicUsize::new(0));
        let c = count.clone();
        m.set_syscall_hook(Box::new(move || {
            c.fetch_add(1, Ordering::SeqCst);
        }));
        m.syscall().unwrap();
        assert_eq!(count.load(Ordering::SeqCst), 1);
    }
}
