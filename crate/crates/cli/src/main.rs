// SPDX-License-Identifier: Apache-2.0

//! `vtee`: manager control, TA packaging/installation, command invocation
//! and scripted demos.
//!
//! Exit codes: 0 success, 1 usage or local error, 2 cannot reach the
//! manager, 3 the TEE returned an error code.

use cli::scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use client_api::Context;
use gp_core::{Operation, Parameter, ReturnCode, TaManifest, Uuid};
use manager::{ManagerConfig, Server};
use ta_runtime::package::TaPackage;
use ta_runtime::BackendKind;

#[derive(Parser)]
#[command(name = "vtee", version, about = "virtual TEE framework control tool")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Control the manager daemon.
    Manager {
        #[command(subcommand)]
        cmd: ManagerCmd,
    },
    /// Package, install and list TAs.
    Ta {
        #[command(subcommand)]
        cmd: TaCmd,
    },
    /// Open a session, invoke one command, close the session.
    Invoke {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long)]
        uuid: String,
        #[arg(long)]
        cmd: u32,
        /// value parameter "a,b"
        #[arg(long)]
        value: Option<String>,
        /// input buffer, hex-encoded
        #[arg(long)]
        memref_in: Option<String>,
        /// output buffer capacity
        #[arg(long)]
        memref_out: Option<u32>,
    },
    /// Dump the backend event trace of a TA.
    Trace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long)]
        uuid: String,
    },
    /// Run a built-in scenario against a throwaway manager.
    Demo {
        /// one of: secure-storage, cross-ta, adversarial-os
        name: String,
        /// sgx, tytan, or both (runs twice and diffs the transcripts)
        #[arg(long, default_value = "both")]
        backend: String,
    },
}

#[derive(Subcommand)]
enum ManagerCmd {
    /// Generate a fresh config file (random master key).
    Init {
        #[arg(long)]
        config: PathBuf,
        /// directory for socket and storage
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "sgx")]
        backend: String,
    },
    Start {
        #[arg(long)]
        config: PathBuf,
        /// run in this process instead of daemonizing
        #[arg(long)]
        foreground: bool,
    },
    Stop {
        #[arg(long)]
        config: PathBuf,
    },
    Status {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum TaCmd {
    /// Build a demo TA package file.
    Package {
        #[arg(long)]
        uuid: String,
        /// demo TA name: echo, doubler, storage, secure-counter, cross
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 65536)]
        quota: u64,
        /// allow one instance per session instead of a shared one
        #[arg(long)]
        multi_instance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Install a package into the manager's registry.
    Install {
        #[arg(long)]
        config: PathBuf,
        package: PathBuf,
    },
    /// List installed TAs.
    List {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn pid_path(config: &ManagerConfig) -> PathBuf {
    config.storage_dir.join("manager.pid")
}

/// --socket flag, then $VTEE_SOCKET, then the config file.
fn resolve_socket(
    socket: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<PathBuf, String> {
    if let Some(s) = socket {
        return Ok(s);
    }
    if let Some(s) = client_api::socket_from_env() {
        return Ok(s);
    }
    if let Some(path) = config {
        let config = ManagerConfig::load(&path).map_err(|e| e.to_string())?;
        return Ok(config.socket_path);
    }
    Err("no socket: pass --socket, set VTEE_SOCKET or pass --config".into())
}

fn connect(socket: &Path) -> Result<Context, ExitCode> {
    Context::connect(socket).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn code_exit(code: ReturnCode) -> ExitCode {
    if code == ReturnCode::Success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Manager { cmd } => run_manager(cmd),
        Cmd::Ta { cmd } => run_ta(cmd),
        Cmd::Invoke {
            config,
            socket,
            uuid,
            cmd,
            value,
            memref_in,
            memref_out,
        } => {
            let socket = resolve_socket(socket, config)?;
            let uuid = Uuid::parse(&uuid).map_err(|e| e.to_string())?;
            let mut params: Vec<Parameter> = Vec::new();
            if let Some(v) = value {
                let (a, b) = v.split_once(',').ok_or("expected --value a,b")?;
                params.push(Parameter::ValueInOut {
                    a: a.trim().parse().map_err(|_| "bad --value")?,
                    b: b.trim().parse().map_err(|_| "bad --value")?,
                });
            }
            if let Some(h) = memref_in {
                params.push(Parameter::MemrefIn {
                    data: hex::decode(h.trim()).map_err(|e| e.to_string())?,
                });
            }
            if let Some(capacity) = memref_out {
                params.push(Parameter::MemrefOut {
                    capacity,
                    data: vec![],
                });
            }
            if params.len() > 4 {
                return Err("too many parameters".into());
            }
            let mut op = Operation::default();
            for (i, p) in params.into_iter().enumerate() {
                op.0[i] = p;
            }
            let mut ctx = match connect(&socket) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let exit = (|| -> Result<ExitCode, client_api::ClientError> {
                let (code, session, _) = ctx.open_session(uuid, Operation::default())?;
                if code != ReturnCode::Success {
                    println!("open-session: {code:?}");
                    return Ok(code_exit(code));
                }
                let (code, out) = ctx.invoke_command(&session, cmd, op)?;
                println!("invoke: {code:?}");
                for (i, p) in out.0.iter().enumerate() {
                    match p {
                        Parameter::None => {}
                        Parameter::ValueIn { a, b }
                        | Parameter::ValueOut { a, b }
                        | Parameter::ValueInOut { a, b } => println!("param{i}: value {a},{b}"),
                        Parameter::MemrefIn { data }
                        | Parameter::MemrefOut { data, .. }
                        | Parameter::MemrefInOut { data, .. } => {
                            println!("param{i}: memref {}", hex::encode(data))
                        }
                    }
                }
                ctx.close_session(session)?;
                ctx.finalize()?;
                Ok(code_exit(code))
            })();
            exit.map_err(|e| e.to_string())
        }
        Cmd::Trace {
            config,
            socket,
            uuid,
        } => {
            let socket = resolve_socket(socket, config)?;
            let uuid = Uuid::parse(&uuid).map_err(|e| e.to_string())?;
            let mut ctx = match connect(&socket) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let (code, text) = ctx.trace_dump(uuid).map_err(|e| e.to_string())?;
            if code != ReturnCode::Success {
                println!("trace: {code:?}");
                return Ok(code_exit(code));
            }
            print!("{text}");
            let _ = ctx.finalize();
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Demo { name, backend } => run_demo(&name, &backend),
    }
}

fn run_manager(cmd: ManagerCmd) -> Result<ExitCode, String> {
    match cmd {
        ManagerCmd::Init {
            config,
            dir,
            backend,
        } => {
            let mut key = [0u8; 32];
            rand::RngCore::fill_bytes(&mut rand::thread_rng(), &mut key);
            let mut cfg = ManagerConfig::for_dir(&dir, key);
            cfg.backend = backend.parse::<BackendKind>()?;
            cfg.save(&config).map_err(|e| e.to_string())?;
            println!("wrote {}", config.display());
            Ok(ExitCode::SUCCESS)
        }
        ManagerCmd::Start { config, foreground } => {
            let cfg = ManagerConfig::load(&config).map_err(|e| e.to_string())?;
            if foreground {
                let server = Server::bind(cfg.clone()).map_err(|e| e.to_string())?;
                std::fs::create_dir_all(&cfg.storage_dir).map_err(|e| e.to_string())?;
                std::fs::write(pid_path(&cfg), std::process::id().to_string())
                    .map_err(|e| e.to_string())?;
                println!("manager listening on {}", cfg.socket_path.display());
                server.run().map_err(|e| e.to_string())?;
                Ok(ExitCode::SUCCESS)
            } else {
                std::fs::create_dir_all(&cfg.storage_dir).map_err(|e| e.to_string())?;
                let log = std::fs::File::create(cfg.storage_dir.join("manager.log"))
                    .map_err(|e| e.to_string())?;
                let exe = std::env::current_exe().map_err(|e| e.to_string())?;
                let child = std::process::Command::new(exe)
                    .args(["manager", "start", "--foreground", "--config"])
                    .arg(&config)
                    .stdout(log.try_clone().map_err(|e| e.to_string())?)
                    .stderr(log)
                    .stdin(std::process::Stdio::null())
                    .spawn()
                    .map_err(|e| e.to_string())?;
                // wait for the socket to come up
                for _ in 0..100 {
                    if std::os::unix::net::UnixStream::connect(&cfg.socket_path).is_ok() {
                        println!("manager started (pid {})", child.id());
                        return Ok(ExitCode::SUCCESS);
                    }
                    std::thread::sleep(std::time::Duration::from_millis(50));
                }
                Err("manager did not come up within 5s (see manager.log)".into())
            }
        }
        ManagerCmd::Stop { config } => {
            let cfg = ManagerConfig::load(&config).map_err(|e| e.to_string())?;
            let pid_file = pid_path(&cfg);
            let pid: i32 = std::fs::read_to_string(&pid_file)
                .map_err(|_| "no pid file; is the manager running?")?
                .trim()
                .parse()
                .map_err(|_| "corrupt pid file")?;
            if unsafe { libc::kill(pid, libc::SIGTERM) } != 0 {
                return Err(format!("cannot signal pid {pid}"));
            }
            for _ in 0..100 {
                if std::os::unix::net::UnixStream::connect(&cfg.socket_path).is_err() {
                    let _ = std::fs::remove_file(&pid_file);
                    let _ = std::fs::remove_file(&cfg.socket_path);
                    println!("manager stopped");
                    return Ok(ExitCode::SUCCESS);
                }
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
            Err("manager did not exit within 5s".into())
        }
        ManagerCmd::Status { config } => {
            let cfg = ManagerConfig::load(&config).map_err(|e| e.to_string())?;
            if std::os::unix::net::UnixStream::connect(&cfg.socket_path).is_ok() {
                println!("running backend={}", cfg.backend);
                Ok(ExitCode::SUCCESS)
            } else {
                println!("not running");
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn run_ta(cmd: TaCmd) -> Result<ExitCode, String> {
    match cmd {
        TaCmd::Package {
            uuid,
            name,
            quota,
            multi_instance,
            out,
        } => {
            if ta_runtime::demo::demo_logic(&name).is_none() {
                return Err(format!("unknown demo TA {name:?}"));
            }
            let uuid = Uuid::parse(&uuid).map_err(|e| e.to_string())?;
            let manifest = TaManifest {
                uuid,
                name: name.clone(),
                single_instance: !multi_instance,
                valid_digests: Default::default(),
                storage_quota: quota,
            };
            let image = format!("{name} ta image {}", uuid.format()).into_bytes();
            TaPackage::build(manifest, image)
                .save(&out)
                .map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        TaCmd::Install { config, package } => {
            let cfg = ManagerConfig::load(&config).map_err(|e| e.to_string())?;
            let registry = manager::registry::Registry::open(&cfg.storage_dir.join("tas"))
                .map_err(|e| e.to_string())?;
            let bytes = std::fs::read(&package).map_err(|e| e.to_string())?;
            let manifest = registry.install(&bytes).map_err(|e| e.to_string())?;
            println!("installed {} ({})", manifest.name, manifest.uuid.format());
            Ok(ExitCode::SUCCESS)
        }
        TaCmd::List { config } => {
            let cfg = ManagerConfig::load(&config).map_err(|e| e.to_string())?;
            let registry = manager::registry::Registry::open(&cfg.storage_dir.join("tas"))
                .map_err(|e| e.to_string())?;
            for m in registry.list().map_err(|e| e.to_string())? {
                println!(
                    "{} {} single_instance={} quota={}",
                    m.uuid.format(),
                    m.name,
                    m.single_instance,
                    m.storage_quota
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_demo(name: &str, backend: &str) -> Result<ExitCode, String> {
    let text = scenario::scenario_text(name)
        .ok_or_else(|| format!("unknown scenario {name:?} (try secure-storage, cross-ta, adversarial-os)"))?;
    let run_one = |kind: BackendKind| -> Result<scenario::ScenarioOutcome, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let outcome = scenario::run_scenario(text, kind, dir.path())?;
        Ok(outcome)
    };
    match backend {
        "both" => {
            let sgx = run_one(BackendKind::Sgx)?;
            let tytan = run_one(BackendKind::Tytan)?;
            for line in &sgx.log {
                println!("[sgx]   {line}");
            }
            for line in &tytan.log {
                println!("[tytan] {line}");
            }
            if sgx.transcript != tytan.transcript {
                eprintln!("transcripts diverge:\n--- sgx ---\n{}\n--- tytan ---\n{}",
                    sgx.transcript.join("\n"), tytan.transcript.join("\n"));
                return Err("backends are not equivalent".into());
            }
            println!("scenario {name}: PASS (backends equivalent)");
            Ok(ExitCode::SUCCESS)
        }
        other => {
            let kind: BackendKind = other.parse()?;
            let outcome = run_one(kind)?;
            for line in &outcome.log {
                println!("{line}");
            }
            println!("scenario {name}: PASS");
            Ok(ExitCode::SUCCESS)
        }
    }
}
