// SPDX-License-Identifier: Apache-2.0

//! Randomized properties: the EA-MPU decision against a brute-force
//! rule-scan oracle, soundness of secure-region isolation under adversarial
//! OS/Normal-task drivers, and interrupt/resume identity.

use eampu_machine::{
    EampuPlatform, EampuRule, Perms, RegionId, RegionKind, TaskId, TaskKind, Regs, REG_COUNT,
    SCRUB_VALUE,
};
use gp_core::trace::AccessOp;
use rand::{Rng, SeedableRng};

struct TestPlatform {
    p: EampuPlatform,
    os: TaskId,
    normals: Vec<TaskId>,
    secures: Vec<TaskId>,
    region_ids: Vec<RegionId>,
    secure_regions: Vec<RegionId>,
}

/// 3 tasks (OS, Normal, Secure) across at least 6 regions, with extra
/// unprotected scratch space the OS may hand out.
fn build_platform(rng: &mut impl Rng) -> TestPlatform {
    let mut p = EampuPlatform::with_rule_limit(16);
    let os_code = p.add_region(0x0000, 0x80, RegionKind::Code, false).unwrap();
    let os_data = p.add_region(0x0080, 0x80, RegionKind::Data, false).unwrap();
    let n_code = p.add_region(0x0100, 0x80, RegionKind::Code, false).unwrap();
    let n_data = p.add_region(0x0180, 0x80, RegionKind::Data, false).unwrap();
    let s_code = p.add_region(0x0200, 0x80, RegionKind::Code, true).unwrap();
    let s_data = p.add_region(0x0280, 0x80, RegionKind::Data, true).unwrap();
    let s_save = p.add_region(0x0300, 0x80, RegionKind::Data, true).unwrap();
    let scratch = p.add_region(0x0380, 0x80, RegionKind::Data, false).unwrap();
    let os = p.load_task(b"os", TaskKind::Os, os_code, &[os_data], None).unwrap();
    let normal = p
        .load_task(b"normal", TaskKind::Normal, n_code, &[n_data], None)
        .unwrap();
    let secure = p
        .load_task(b"secure", TaskKind::Secure, s_code, &[s_data], Some(s_save))
        .unwrap();
    // a few OS-programmed rules over unprotected regions
    let subjects = [os_code, n_code, s_code];
    let objects = [os_data, n_data, scratch];
    for _ in 0..rng.gen_range(0..6) {
        let rule = EampuRule {
            subject_code: subjects[rng.gen_range(0..subjects.len())],
            object: objects[rng.gen_range(0..objects.len())],
            perms: Perms {
                r: rng.gen(),
                w: rng.gen(),
                x: rng.gen(),
            },
            locked: false,
        };
        let _ = p.program_rule(rule, os);
    }
    TestPlatform {
        p,
        os,
        normals: vec![normal],
        secures: vec![secure],
        region_ids: vec![os_code, os_data, n_code, n_data, s_code, s_data, s_save, scratch],
        secure_regions: vec![s_code, s_data, s_save],
    }
}

/// Independent oracle: plain double scan over regions and the rule list.
fn oracle_allow(p: &EampuPlatform, pc: u64, target: u64, op: AccessOp) -> Option<bool> {
    let pc_region = p.regions().find(|r| r.contains(pc))?.id;
    let target_region = p.regions().find(|r| r.contains(target))?;
    if !target_region.protected {
        return Some(true);
    }
    let mut allowed = false;
    for rule in p.rules() {
        let perm_ok = match op {
            AccessOp::Read => rule.perms.r,
            AccessOp::Write => rule.perms.w,
            AccessOp::Execute => rule.perms.x,
        };
        if rule.subject_code == pc_region && rule.object == target_region.id && perm_ok {
            allowed = true;
        }
    }
    Some(allowed)
}

#[test]
fn check_access_matches_brute_force_oracle() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(77);
    for _ in 0..1000 {
        let mut tp = build_platform(&mut rng);
        let bases: Vec<u64> = tp
            .region_ids
            .iter()
            .map(|&id| tp.p.region(id).unwrap().base)
            .collect();
        for &pc_base in &bases {
            for &target_base in &bases {
                for op in [AccessOp::Read, AccessOp::Write, AccessOp::Execute] {
                    let expected = oracle_allow(&tp.p, pc_base, target_base, op).unwrap();
                    let got = tp.p.check_access(pc_base, target_base, op).unwrap();
                    assert_eq!(got, expected, "pc=0x{pc_base:x} target=0x{target_base:x} {op:?}");
                }
            }
        }
    }
}

#[test]
fn interrupt_resume_identity_500_trials() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut tp = build_platform(&mut rng);
    let secure = tp.secures[0];
    for _ in 0..500 {
        tp.p.dispatch(secure).unwrap();
        let regs: Regs = std::array::from_fn(|_| rng.gen());
        tp.p.set_regs(regs);
        tp.p.interrupt().unwrap();
        assert_eq!(tp.p.regs(), [SCRUB_VALUE; REG_COUNT]);
        tp.p.resume_task(secure).unwrap();
        assert_eq!(tp.p.regs(), regs);
    }
}

/// Adversarial driver: the OS and Normal tasks issue random operations and
/// must never read or write a secure task's protected bytes.
#[test]
fn eampu_soundness_adversarial_sequences() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    for _ in 0..1000 {
        let mut tp = build_platform(&mut rng);
        // seed secure memory with a sentinel pattern via the secure task itself
        let s_data_base = tp.p.region(tp.secure_regions[1]).unwrap().base;
        tp.p.dispatch(tp.secures[0]).unwrap();
        for i in 0..16 {
            tp.p.mem_write(tp.secures[0], s_data_base + i, 0x50 + i as u8)
                .unwrap();
        }
        let snapshot: Vec<Vec<u8>> = tp
            .secure_regions
            .iter()
            .map(|&r| tp.p.region_bytes(r).unwrap().to_vec())
            .collect();
        // adversary gets the CPU
        tp.p.dispatch(tp.os).unwrap();
        let attackers = [tp.os, tp.normals[0]];
        let len = rng.gen_range(1..=200);
        for _ in 0..len {
            let actor = attackers[rng.gen_range(0..attackers.len())];
            match rng.gen_range(0..6) {
                0 => {
                    let _ = tp.p.dispatch(actor);
                }
                1 => {
                    let addr = rng.gen_range(0u64..0x400);
                    if let Ok(byte) = tp.p.mem_read(actor, addr) {
                        // a successful read must never expose protected bytes
                        let region = tp
                            .p
                            .regions()
                            .find(|r| r.contains(addr))
                            .expect("mapped");
                        assert!(!region.protected, "read protected byte 0x{byte:02x}");
                    }
                }
                2 => {
                    let addr = rng.gen_range(0u64..0x400);
                    let _ = tp.p.mem_write(actor, addr, rng.gen());
                }
                3 => {
                    let rule = EampuRule {
                        subject_code: tp.region_ids[rng.gen_range(0..tp.region_ids.len())],
                        object: tp.region_ids[rng.gen_range(0..tp.region_ids.len())],
                        perms: Perms {
                            r: true,
                            w: true,
                            x: true,
                        },
                        locked: rng.gen_bool(0.2),
                    };
                    let _ = tp.p.program_rule(rule, actor);
                }
                4 => {
                    let _ = tp.p.interrupt();
                }
                _ => {
                    let _ = tp.p.ipc_send(actor, tp.secures[0], b"spam");
                }
            }
        }
        // protected bytes unchanged
        for (region, before) in tp.secure_regions.iter().zip(&snapshot) {
            assert_eq!(
                tp.p.region_bytes(*region).unwrap(),
                before.as_slice(),
                "secure region {region:?} mutated by adversary"
            );
        }
    }
}

#[test]
fn rule_table_never_exceeds_limit() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(8);
    for _ in 0..100 {
        let mut tp = build_platform(&mut rng);
        for _ in 0..50 {
            let rule = EampuRule {
                subject_code: tp.region_ids[rng.gen_range(0..tp.region_ids.len())],
                object: tp.region_ids[rng.gen_range(0..tp.region_ids.len())],
                perms: Perms::RW,
                locked: false,
            };
            let _ = tp.p.program_rule(rule, tp.os);
        }
        assert!(tp.p.rules().len() <= tp.p.rule_limit());
    }
}
