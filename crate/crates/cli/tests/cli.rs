// SPDX-License-Identifier: Apache-2.0

//! End-to-end exercises of the `vtee` binary: daemon control, packaging,
//! installation, invocation and the demo runner.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TA_UUID: &str = "00000000-0000-0000-0000-0000000000d1";

fn vtee(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtee"))
        .args(args)
        .current_dir(dir)
        .env_remove("VTEE_SOCKET")
        .output()
        .expect("spawn vtee")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

/// Kills the daemon on drop so a failing assertion does not leak a process.
struct DaemonGuard {
    pid_file: PathBuf,
}

impl Drop for DaemonGuard {
    fn drop(&mut self) {
        if let Ok(text) = std::fs::read_to_string(&self.pid_file) {
            if let Ok(pid) = text.trim().parse::<i32>() {
                unsafe { libc::kill(pid, libc::SIGKILL) };
            }
        }
    }
}

#[test]
fn manager_lifecycle_install_invoke_trace() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("vtee.toml");
    let config_s = config.to_str().unwrap();

    // init writes a config with a fresh key
    let out = vtee(root, &["manager", "init", "--config", config_s, "--dir", root.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "init failed: {out:?}");
    assert!(config.exists());

    // not running yet: status exits 2
    let out = vtee(root, &["manager", "status", "--config", config_s]);
    assert_eq!(exit_code(&out), 2);
    assert!(stdout(&out).contains("not running"));

    let out = vtee(root, &["manager", "start", "--config", config_s]);
    assert_eq!(exit_code(&out), 0, "start failed: {out:?}");
    let _guard = DaemonGuard { pid_file: root.join("storage").join("manager.pid") };

    let out = vtee(root, &["manager", "status", "--config", config_s]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("running backend=sgx"));

    // package + install + list
    let pkg = root.join("doubler.pkg");
    let out = vtee(
        root,
        &[
            "ta", "package", "--uuid", TA_UUID, "--name", "doubler",
            "--quota", "0", "--out", pkg.to_str().unwrap(),
        ],
    );
    assert_eq!(exit_code(&out), 0, "package failed: {out:?}");
    let out = vtee(root, &["ta", "install", "--config", config_s, pkg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "install failed: {out:?}");
    let out = vtee(root, &["ta", "list", "--config", config_s]);
    assert_eq!(exit_code(&out), 0);
    let listing = stdout(&out);
    assert!(listing.contains(TA_UUID) && listing.contains("doubler"), "{listing}");

    // invoke the doubler over the socket
    let out = vtee(
        root,
        &["invoke", "--config", config_s, "--uuid", TA_UUID, "--cmd", "1", "--value", "3,4"],
    );
    assert_eq!(exit_code(&out), 0, "invoke failed: {out:?}");
    assert!(stdout(&out).contains("param0: value 6,8"), "{}", stdout(&out));

    // the trace reflects the backend discipline of that invocation
    let out = vtee(root, &["trace", "--config", config_s, "--uuid", TA_UUID]);
    assert_eq!(exit_code(&out), 0, "trace failed: {out:?}");
    let trace = stdout(&out);
    for name in ["ECREATE", "EINIT", "EENTER", "EEXIT"] {
        assert!(trace.contains(name), "missing {name} in:\n{trace}");
    }

    // a TEE-level error surfaces as exit code 3, not a tool failure
    let out = vtee(
        root,
        &[
            "invoke", "--config", config_s,
            "--uuid", "00000000-0000-0000-0000-0000000000ee",
            "--cmd", "1",
        ],
    );
    assert_eq!(exit_code(&out), 3, "unknown TA should be a TEE error: {out:?}");

    let out = vtee(root, &["manager", "stop", "--config", config_s]);
    assert_eq!(exit_code(&out), 0, "stop failed: {out:?}");
    let out = vtee(root, &["manager", "status", "--config", config_s]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn demo_runs_both_backends_and_diffs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["secure-storage", "cross-ta", "adversarial-os"] {
        let out = vtee(dir.path(), &["demo", name]);
        assert_eq!(exit_code(&out), 0, "demo {name} failed: {out:?}");
        assert!(
            stdout(&out).contains("PASS (backends equivalent)"),
            "demo {name}:\n{}",
            stdout(&out)
        );
    }
}

#[test]
fn local_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // unknown demo TA name at packaging time
    let out = vtee(
        root,
        &[
            "ta", "package", "--uuid", TA_UUID, "--name", "no-such-ta",
            "--out", root.join("x.pkg").to_str().unwrap(),
        ],
    );
    assert_eq!(exit_code(&out), 1);
    // invoke with no way to find a socket
    let out = vtee(root, &["invoke", "--uuid", TA_UUID, "--cmd", "1"]);
    assert_eq!(exit_code(&out), 1);
    // unreachable manager exits 2
    let out = vtee(
        root,
        &["invoke", "--socket", root.join("nope.sock").to_str().unwrap(), "--uuid", TA_UUID, "--cmd", "1"],
    );
    assert_eq!(exit_code(&out), 2);
}
