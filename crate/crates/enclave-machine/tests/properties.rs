// SPDX-License-Identifier: Apache-2.0

//! Property tests for the enclave machine: the access-predicate table
//! against a brute-force oracle, save/scrub/restore identity, TLB
//! invalidation and the lifecycle trace grammar under random operation
//! sequences.

use enclave_machine::grammar::check_enclave_trace;
use enclave_machine::{
    CpuMode, EnclaveId, EnclaveMachine, MachineError, Regs, ABORT_BYTE, REG_COUNT, SCRUB_VALUE,
};
use rand::{Rng, SeedableRng};

const E1_BASE: u64 = 0x10000;
const E2_BASE: u64 = 0x20000;
const FREE_ADDR: u64 = 0x30000;

/// Machine with two initialized enclaves and a known byte in each region.
fn two_enclave_machine() -> (EnclaveMachine, EnclaveId, EnclaveId) {
    let mut m = EnclaveMachine::new();
    let e1 = m.ecreate(&[0x11; 64], E1_BASE).unwrap();
    let e2 = m.ecreate(&[0x22; 64], E2_BASE).unwrap();
    m.einit(e1).unwrap();
    m.einit(e2).unwrap();
    m.mem_write(FREE_ADDR, 0x33).unwrap();
    (m, e1, e2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Value(u8),
    Abort,
    Fault,
}

/// Oracle: the access table as stated for the three accessor classes.
/// Normal CPU and agents see enclave pages as nonexistent (abort pattern);
/// an enclave reaches its own pages and unowned pages but faults on pages
/// of another enclave.
fn oracle(accessor: &str, page_owner: Option<u8>) -> Outcome {
    match (accessor, page_owner) {
        ("enclave1", Some(1)) => Outcome::Value(0x11),
        ("enclave1", Some(2)) => Outcome::Fault,
        ("enclave1", None) => Outcome::Value(0x33),
        ("normal", Some(_)) | ("agent", Some(_)) => Outcome::Abort,
        ("normal", None) | ("agent", None) => Outcome::Value(0x33),
        _ => unreachable!(),
    }
}

fn observe(accessor: &str, page_owner: Option<u8>) -> Outcome {
    let (mut m, e1, _) = two_enclave_machine();
    let addr = match page_owner {
        Some(1) => E1_BASE,
        Some(2) => E2_BASE,
        None => FREE_ADDR,
        _ => unreachable!(),
    };
    if accessor == "enclave1" {
        m.eenter(e1, E1_BASE).unwrap();
    }
    let result = match accessor {
        "agent" => Ok(m.agent_read(addr)),
        _ => m.mem_read(addr),
    };
    match result {
        Ok(ABORT_BYTE) if page_owner.is_some() && accessor != "enclave1" => Outcome::Abort,
        Ok(v) => Outcome::Value(v),
        Err(MachineError::CrossEnclaveFault) => Outcome::Fault,
        Err(e) => panic!("unexpected error {e:?}"),
    }
}

#[test]
fn access_predicate_matches_oracle_table() {
    for accessor in ["normal", "enclave1", "agent"] {
        for page_owner in [Some(1), Some(2), None] {
            assert_eq!(
                observe(accessor, page_owner),
                oracle(accessor, page_owner),
                "accessor={accessor} page_owner={page_owner:?}"
            );
        }
    }
}

#[test]
fn aex_eresume_identity_500_random_vectors() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(42);
    let mut m = EnclaveMachine::new();
    let id = m.ecreate(&[7; 128], E1_BASE).unwrap();
    m.einit(id).unwrap();
    for _ in 0..500 {
        let regs: Regs = std::array::from_fn(|_| rng.gen());
        m.eenter(id, E1_BASE).unwrap();
        m.set_regs(regs);
        m.aex(rng.gen_range(0..32)).unwrap();
        assert_eq!(m.regs(), [SCRUB_VALUE; REG_COUNT]);
        m.eresume(id).unwrap();
        assert_eq!(m.regs(), regs);
        m.eexit(id).unwrap();
    }
}

#[test]
fn tlb_never_overlaps_after_transition_events() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let mut m = EnclaveMachine::new();
    let id = m.ecreate(&[1; 4096], E1_BASE).unwrap();
    m.einit(id).unwrap();
    let (base, size) = m.enclave(id).unwrap().range();
    let no_overlap = |m: &EnclaveMachine| {
        m.tlb_entries()
            .iter()
            .all(|&(s, e)| e <= base || s >= base + size)
    };
    for _ in 0..200 {
        m.tlb_load(base + rng.gen_range(0..size), base + size + rng.gen_range(0..64));
        m.eenter(id, E1_BASE).unwrap();
        assert!(no_overlap(&m));
        let _ = m.mem_read(base + rng.gen_range(0..size));
        if rng.gen_bool(0.5) {
            m.aex(0).unwrap();
            assert!(no_overlap(&m));
            m.eresume(id).unwrap();
        }
        m.eexit(id).unwrap();
        assert!(no_overlap(&m));
    }
}

#[test]
fn ranges_stay_disjoint_and_grammar_holds_under_random_ops() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1234);
    for _ in 0..50 {
        let mut m = EnclaveMachine::new();
        let mut ids: Vec<EnclaveId> = Vec::new();
        for _ in 0..200 {
            match rng.gen_range(0..8) {
                0 => {
                    let base = rng.gen_range(0..32u64) * 0x10000;
                    let len = rng.gen_range(1..3 * 4096);
                    if let Ok(id) = m.ecreate(&vec![0xcd; len], base) {
                        ids.push(id);
                    }
                }
                1 => {
                    if let Some(&id) = ids.get(rng.gen_range(0..ids.len().max(1))) {
                        let _ = m.einit(id);
                    }
                }
                2 => {
                    if let Some(&id) = ids.get(rng.gen_range(0..ids.len().max(1))) {
                        let base = m.enclave(id).unwrap().base;
                        let _ = m.eenter(id, base);
                    }
                }
                3 => {
                    if let Some(&id) = ids.get(rng.gen_range(0..ids.len().max(1))) {
                        let _ = m.eexit(id);
                    }
                }
                4 => {
                    let _ = m.aex(rng.gen_range(0..16));
                }
                5 => {
                    if let Some(&id) = ids.get(rng.gen_range(0..ids.len().max(1))) {
                        let _ = m.eresume(id);
                    }
                }
                6 => {
                    let _ = m.mem_read(rng.gen_range(0..0x40000));
                }
                _ => {
                    let _ = m.mem_write(rng.gen_range(0..0x40000), rng.gen());
                }
            }
        }
        // pairwise disjoint ranges
        let enclaves: Vec<_> = m.enclaves().collect();
        for (i, a) in enclaves.iter().enumerate() {
            for b in &enclaves[i + 1..] {
                assert!(
                    a.base + a.size <= b.base || b.base + b.size <= a.base,
                    "ranges overlap: {a:?} {b:?}"
                );
            }
        }
        for e in &enclaves {
            assert!(
                check_enclave_trace(m.trace(), e.id.0),
                "grammar violated for enclave {}",
                e.id
            );
        }
    }
}

#[test]
fn normal_mode_between_aex_and_eresume_sees_scrub_constant() {
    let mut m = EnclaveMachine::new();
    let id = m.ecreate(&[1; 64], E1_BASE).unwrap();
    m.einit(id).unwrap();
    m.eenter(id, E1_BASE).unwrap();
    m.set_regs([0xdead; REG_COUNT]);
    m.aex(1).unwrap();
    assert_eq!(m.mode(), CpuMode::Normal);
    assert_eq!(m.regs(), [SCRUB_VALUE; REG_COUNT]);
    m.eresume(id).unwrap();
}
