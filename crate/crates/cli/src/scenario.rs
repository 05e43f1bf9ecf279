// SPDX-License-Identifier: Apache-2.0

//! Line-oriented scenario scripts for the demo runner. A scenario drives an
//! in-process manager core; every CA-visible step is appended to a
//! transcript so runs on different backends can be diffed verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use gp_core::{Operation, Parameter, ReturnCode, TaManifest, Uuid};
use manager::{ManagerConfig, ManagerCore};
use ta_runtime::backend::BackendState;
use ta_runtime::package::TaPackage;
use ta_runtime::BackendKind;

pub const SCENARIOS: &[(&str, &str)] = &[
    ("secure-storage", include_str!("../../../scenarios/secure-storage.scn")),
    ("cross-ta", include_str!("../../../scenarios/cross-ta.scn")),
    ("adversarial-os", include_str!("../../../scenarios/adversarial-os.scn")),
];

pub fn scenario_text(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub struct ScenarioOutcome {
    /// backend-independent record of CA-visible results
    pub transcript: Vec<String>,
    /// human-readable step log, including backend-specific checks
    pub log: Vec<String>,
}

fn scenario_uuid(n: u8) -> Uuid {
    let mut b = [0u8; 16];
    b[15] = n;
    Uuid::from_bytes(b)
}

fn parse_code(word: &str) -> Result<ReturnCode, String> {
    Ok(match word {
        "success" => ReturnCode::Success,
        "generic" => ReturnCode::ErrorGeneric,
        "access-denied" => ReturnCode::ErrorAccessDenied,
        "item-not-found" => ReturnCode::ErrorItemNotFound,
        "bad-parameters" => ReturnCode::ErrorBadParameters,
        "bad-state" => ReturnCode::ErrorBadState,
        "out-of-memory" => ReturnCode::ErrorOutOfMemory,
        "target-dead" => ReturnCode::ErrorTargetDead,
        "communication" => ReturnCode::ErrorCommunication,
        "security" => ReturnCode::ErrorSecurity,
        other => return Err(format!("unknown return code {other:?}")),
    })
}

struct Runner {
    core: ManagerCore,
    kind: BackendKind,
    sessions: BTreeMap<String, u64>,
    transcript: Vec<String>,
    log: Vec<String>,
}

const CONN: u64 = 1;
const CTX: u64 = 1;

impl Runner {
    fn expect(&mut self, line: &str, got: ReturnCode, want: ReturnCode) -> Result<(), String> {
        if got == want {
            Ok(())
        } else {
            Err(format!("{line}: expected {want:?}, got {got:?}"))
        }
    }

    fn session(&self, name: &str) -> Result<u64, String> {
        self.sessions
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown session {name:?}"))
    }

    fn step(&mut self, line: &str) -> Result<(), String> {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["install", n, name, quota] => {
                let n: u8 = n.parse().map_err(|_| "bad TA index")?;
                let quota: u64 = quota.parse().map_err(|_| "bad quota")?;
                let manifest = TaManifest {
                    uuid: scenario_uuid(n),
                    name: name.to_string(),
                    single_instance: true,
                    valid_digests: Default::default(),
                    storage_quota: quota,
                };
                let image = format!("{name} scenario image #{n}").into_bytes();
                let pkg = TaPackage::build(manifest, image);
                self.core
                    .install_package(&pkg.to_bytes())
                    .map_err(|e| e.to_string())?;
                self.transcript.push(format!("install {n} {name}"));
            }
            ["open", sess, n] => {
                let n: u8 = n.parse().map_err(|_| "bad TA index")?;
                let (code, id, _) =
                    self.core
                        .open_session(CONN, CTX, scenario_uuid(n), Operation::default());
                self.expect(line, code, ReturnCode::Success)?;
                self.sessions.insert(sess.to_string(), id);
                self.transcript.push(format!("open {sess} {n} -> {code:?}"));
            }
            ["close", sess] => {
                let id = self.session(sess)?;
                let code = self.core.close_session(CONN, CTX, id);
                self.expect(line, code, ReturnCode::Success)?;
                self.transcript.push(format!("close {sess} -> {code:?}"));
            }
            ["put", sess, text, "expect", want] => {
                let id = self.session(sess)?;
                let op = Operation::single(Parameter::MemrefIn {
                    data: text.as_bytes().to_vec(),
                });
                let (code, _) = self.core.invoke(CONN, CTX, id, ta_runtime::demo::CMD_PUT, op);
                self.expect(line, code, parse_code(want)?)?;
                self.transcript.push(format!("put {text} -> {code:?}"));
            }
            ["get", sess, cap, "expect", want, rest @ ..] => {
                let id = self.session(sess)?;
                let capacity: u32 = cap.parse().map_err(|_| "bad capacity")?;
                let op = Operation::single(Parameter::MemrefOut {
                    capacity,
                    data: vec![],
                });
                let (code, out) = self.core.invoke(CONN, CTX, id, ta_runtime::demo::CMD_GET, op);
                self.expect(line, code, parse_code(want)?)?;
                let text = match &out.0[0] {
                    Parameter::MemrefOut { data, .. } => String::from_utf8_lossy(data).into_owned(),
                    _ => String::new(),
                };
                if let [expected] = rest {
                    if text != *expected {
                        return Err(format!("{line}: got {text:?}"));
                    }
                }
                self.transcript.push(format!("get cap={capacity} -> {code:?} {text}"));
            }
            ["gettime", sess, "expect", want] => {
                let id = self.session(sess)?;
                let (code, _) = self.core.invoke(
                    CONN,
                    CTX,
                    id,
                    ta_runtime::demo::CMD_TIME,
                    Operation::default(),
                );
                self.expect(line, code, parse_code(want)?)?;
                self.transcript.push(format!("gettime -> {code:?}"));
            }
            ["invoke", sess, cmd, "expect", want, rest @ ..] => {
                let id = self.session(sess)?;
                let cmd: u32 = cmd.parse().map_err(|_| "bad command id")?;
                let (code, out) = self.core.invoke(CONN, CTX, id, cmd, Operation::default());
                self.expect(line, code, parse_code(want)?)?;
                if let ["value", a, b] = rest {
                    let want_a: u32 = a.parse().map_err(|_| "bad value")?;
                    let want_b: u32 = b.parse().map_err(|_| "bad value")?;
                    if out.0[0] != (Parameter::ValueOut { a: want_a, b: want_b }) {
                        return Err(format!("{line}: got {:?}", out.0[0]));
                    }
                }
                self.transcript
                    .push(format!("invoke cmd={cmd} -> {code:?} {:?}", out.0[0]));
            }
            ["double", sess, a, b, "expect", want, a2, b2] => {
                let id = self.session(sess)?;
                let op = Operation::single(Parameter::ValueInOut {
                    a: a.parse().map_err(|_| "bad value")?,
                    b: b.parse().map_err(|_| "bad value")?,
                });
                let (code, out) =
                    self.core
                        .invoke(CONN, CTX, id, ta_runtime::demo::CMD_DOUBLE, op);
                self.expect(line, code, parse_code(want)?)?;
                let expected = Parameter::ValueInOut {
                    a: a2.parse().map_err(|_| "bad value")?,
                    b: b2.parse().map_err(|_| "bad value")?,
                };
                if out.0[0] != expected {
                    return Err(format!("{line}: got {:?}", out.0[0]));
                }
                self.transcript.push(format!("double -> {code:?} {:?}", out.0[0]));
            }
            ["cross", sess, n, a, b, "expect", want, a2, b2] => {
                let id = self.session(sess)?;
                let n: u8 = n.parse().map_err(|_| "bad TA index")?;
                let op = Operation::new([
                    Parameter::MemrefIn {
                        data: scenario_uuid(n).as_bytes().to_vec(),
                    },
                    Parameter::ValueInOut {
                        a: a.parse().map_err(|_| "bad value")?,
                        b: b.parse().map_err(|_| "bad value")?,
                    },
                    Parameter::None,
                    Parameter::None,
                ]);
                let (code, out) = self.core.invoke(CONN, CTX, id, ta_runtime::demo::CMD_CALL, op);
                let want = parse_code(want)?;
                self.expect(line, code, want)?;
                if want == ReturnCode::Success {
                    let expected = Parameter::ValueInOut {
                        a: a2.parse().map_err(|_| "bad value")?,
                        b: b2.parse().map_err(|_| "bad value")?,
                    };
                    if out.0[1] != expected {
                        return Err(format!("{line}: got {:?}", out.0[1]));
                    }
                }
                self.transcript.push(format!("cross -> {code:?}"));
            }
            ["trace-contains", n, event] => {
                let n: u8 = n.parse().map_err(|_| "bad TA index")?;
                let text = self
                    .core
                    .trace_dump(scenario_uuid(n))
                    .map_err(|c| format!("{line}: trace unavailable ({c:?})"))?;
                if !text.lines().any(|l| l.split_whitespace().nth(1) == Some(event)) {
                    return Err(format!("{line}: event missing"));
                }
            }
            ["trace-lacks", n, event] => {
                let n: u8 = n.parse().map_err(|_| "bad TA index")?;
                let text = self
                    .core
                    .trace_dump(scenario_uuid(n))
                    .map_err(|c| format!("{line}: trace unavailable ({c:?})"))?;
                if text.lines().any(|l| l.split_whitespace().nth(1) == Some(event)) {
                    return Err(format!("{line}: forbidden event present"));
                }
            }
            ["adversarial"] => self.adversarial()?,
            _ => return Err(format!("unparsable line {line:?}")),
        }
        self.log.push(format!("ok: {line}"));
        Ok(())
    }

    /// Host-attack battery appropriate to the backend; every probe must be
    /// denied without disturbing TA state.
    fn adversarial(&mut self) -> Result<(), String> {
        match self.core.backend_mut() {
            BackendState::Sgx(sgx) => {
                let (base, _) = sgx
                    .machine
                    .enclaves()
                    .next()
                    .map(|e| e.range())
                    .ok_or("no enclave to attack")?;
                // host reads of enclave memory abort to 0xFF
                for off in 0..16 {
                    if sgx.machine.agent_read(base + off) != enclave_machine::ABORT_BYTE {
                        return Err("host read of enclave memory not aborted".into());
                    }
                }
                // host writes are dropped silently
                sgx.machine.agent_write(base, 0x66);
                if sgx.machine.agent_read(base) != enclave_machine::ABORT_BYTE {
                    return Err("host write of enclave memory not dropped".into());
                }
                let denials = sgx
                    .machine
                    .trace()
                    .iter()
                    .filter(|e| e.name() == "ACCESS_DENIED")
                    .count();
                if denials < 17 {
                    return Err("abort accesses missing from trace".into());
                }
                self.log.push("ok: sgx host probes aborted".into());
            }
            BackendState::Tytan(t) => {
                // an OS-scheduled normal task is refused by the TEE Core
                let code = t
                    .ipc_probe(eampu_machine::TaskKind::Normal)
                    .map_err(|e| e.to_string())?;
                if code != ReturnCode::ErrorAccessDenied {
                    return Err(format!("normal-task probe not denied: {code:?}"));
                }
                // direct OS reads of a protected region fault
                let os = t.os;
                let secure_base = t
                    .platform
                    .regions()
                    .find(|r| r.protected)
                    .map(|r| r.base)
                    .ok_or("no protected region")?;
                t.platform.dispatch(os).map_err(|e| e.to_string())?;
                if t.platform.mem_read(os, secure_base).is_ok() {
                    return Err("OS read of protected region succeeded".into());
                }
                self.log.push("ok: tytan host probes denied".into());
            }
        }
        Ok(())
    }
}

/// Run one scenario against a fresh manager rooted at `dir`.
pub fn run_scenario(
    text: &str,
    kind: BackendKind,
    dir: &Path,
) -> Result<ScenarioOutcome, String> {
    let mut config = ManagerConfig::for_dir(dir, [0x42; 32]);
    config.backend = kind;
    let core = ManagerCore::new(config).map_err(|e| e.to_string())?;
    let mut runner = Runner {
        core,
        kind,
        sessions: BTreeMap::new(),
        transcript: Vec::new(),
        log: Vec::new(),
    };
    for raw in text.lines() {
        let mut line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // backend-conditional prefix
        if let Some(rest) = line.strip_prefix('[') {
            let (tag, rest) = rest.split_once(']').ok_or("unterminated backend tag")?;
            let only: BackendKind = tag.parse()?;
            if only != runner.kind {
                continue;
            }
            line = rest.trim();
        }
        runner.step(line)?;
    }
    Ok(ScenarioOutcome {
        transcript: runner.transcript,
        log: runner.log,
    })
}
