// SPDX-License-Identifier: Apache-2.0

//! Unix-socket frontend. One thread per connection; every request frame is
//! handled under the core lock. FinalizeCtx (or a dropped connection)
//! closes whatever the client left open.

use std::io;
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use gp_core::wire::Message;
use gp_core::{read_frame, write_frame};

use crate::config::ManagerConfig;
use crate::core::{CoreError, ManagerCore};

static NEXT_CONN: AtomicU64 = AtomicU64::new(1);

pub struct Server {
    listener: UnixListener,
    core: Arc<Mutex<ManagerCore>>,
}

/// Bind the manager socket. A live socket file is an error; a stale one
/// (left by a crashed manager) is silently replaced.
fn bind_socket(path: &Path) -> io::Result<UnixListener> {
    if path.exists() {
        if UnixStream::connect(path).is_ok() {
            return Err(io::Error::new(
                io::ErrorKind::AddrInUse,
                format!("a manager is already listening on {}", path.display()),
            ));
        }
        std::fs::remove_file(path)?;
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    UnixListener::bind(path)
}

impl Server {
    pub fn bind(config: ManagerConfig) -> Result<Self, ServerError> {
        let listener = bind_socket(&config.socket_path)?;
        let core = ManagerCore::new(config)?;
        Ok(Server {
            listener,
            core: Arc::new(Mutex::new(core)),
        })
    }

    pub fn core(&self) -> Arc<Mutex<ManagerCore>> {
        Arc::clone(&self.core)
    }

    /// Accept loop; never returns under normal operation.
    pub fn run(&self) -> io::Result<()> {
        loop {
            let (stream, _) = self.listener.accept()?;
            let core = Arc::clone(&self.core);
            std::thread::spawn(move || {
                let conn = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
                let _ = handle_conn(stream, conn, &core);
                core.lock().unwrap().finalize_conn(conn);
            });
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn handle_conn(
    mut stream: UnixStream,
    conn: u64,
    core: &Arc<Mutex<ManagerCore>>,
) -> Result<(), gp_core::WireError> {
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(_) => return Ok(()), // EOF or broken pipe: cleanup happens in the caller
        };
        let msg = Message::from_frame(&frame)?;
        let finalize = matches!(msg, Message::FinalizeCtx { .. });
        let resp = core.lock().unwrap().handle_message(conn, msg);
        if let Some(resp) = resp {
            write_frame(&mut stream, &resp.to_frame())?;
        }
        if finalize {
            // end-of-stream is the acknowledgement
            return Ok(());
        }
    }
}
