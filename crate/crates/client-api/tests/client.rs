// SPDX-License-Identifier: Apache-2.0

//! Client API against a real in-process manager server.

use client_api::{ClientError, Context};
use gp_core::{Operation, Parameter, ReturnCode, TaManifest, Uuid};
use manager::{ManagerConfig, Server};
use ta_runtime::demo::{CMD_DOUBLE, CMD_GET, CMD_PUT};
use ta_runtime::package::TaPackage;

fn uuid(n: u8) -> Uuid {
    let mut b = [0u8; 16];
    b[11] = n;
    Uuid::from_bytes(b)
}

fn install(server: &Server, n: u8, name: &str) {
    let manifest = TaManifest {
        uuid: uuid(n),
        name: name.into(),
        single_instance: true,
        valid_digests: Default::default(),
        storage_quota: 4096,
    };
    let pkg = TaPackage::build(manifest, format!("{name} image").into_bytes());
    server
        .core()
        .lock()
        .unwrap()
        .install_package(&pkg.to_bytes())
        .unwrap();
}

fn start() -> (std::path::PathBuf, Server, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = ManagerConfig::for_dir(dir.path(), [5u8; 32]);
    let socket = config.socket_path.clone();
    let server = Server::bind(config).unwrap();
    (socket, server, dir)
}

#[test]
fn session_lifecycle_over_the_socket() {
    let (socket, server, _dir) = start();
    install(&server, 1, "doubler");
    install(&server, 2, "storage");
    let core = server.core();
    std::thread::spawn(move || {
        let _ = server.run();
    });

    let mut ctx = Context::connect(&socket).unwrap();
    let (code, session, _) = ctx.open_session(uuid(1), Operation::default()).unwrap();
    assert_eq!(code, ReturnCode::Success);
    let (code, out) = ctx
        .invoke_command(
            &session,
            CMD_DOUBLE,
            Operation::single(Parameter::ValueInOut { a: 2, b: 3 }),
        )
        .unwrap();
    assert_eq!(code, ReturnCode::Success);
    assert_eq!(out.0[0], Parameter::ValueInOut { a: 4, b: 6 });

    let (code, store_session, _) = ctx.open_session(uuid(2), Operation::default()).unwrap();
    assert_eq!(code, ReturnCode::Success);
    let (code, _) = ctx
        .invoke_command(
            &store_session,
            CMD_PUT,
            Operation::single(Parameter::MemrefIn {
                data: b"over the wire".to_vec(),
            }),
        )
        .unwrap();
    assert_eq!(code, ReturnCode::Success);
    let (code, out) = ctx
        .invoke_command(
            &store_session,
            CMD_GET,
            Operation::single(Parameter::MemrefOut {
                capacity: 32,
                data: vec![],
            }),
        )
        .unwrap();
    assert_eq!(code, ReturnCode::Success);
    assert_eq!(
        out.0[0],
        Parameter::MemrefOut {
            capacity: 32,
            data: b"over the wire".to_vec()
        }
    );

    assert_eq!(ctx.close_session(session).unwrap(), ReturnCode::Success);

    // the trace is CA-visible through the API as well
    let (code, text) = ctx.trace_dump(uuid(1)).unwrap();
    assert_eq!(code, ReturnCode::Success);
    assert!(text.contains("EENTER"));

    // finalize with store_session still open: the manager mops up
    ctx.finalize().unwrap();
    for _ in 0..100 {
        if core.lock().unwrap().open_sessions() == 0 {
            return;
        }
        std::thread::sleep(std::time::Duration::from_millis(5));
    }
    panic!("sessions not cleaned up after finalize");
}

#[test]
fn open_unknown_ta_is_an_error_code_not_a_failure() {
    let (socket, server, _dir) = start();
    std::thread::spawn(move || {
        let _ = server.run();
    });
    let mut ctx = Context::connect(&socket).unwrap();
    let (code, _, _) = ctx.open_session(uuid(9), Operation::default()).unwrap();
    assert_eq!(code, ReturnCode::ErrorItemNotFound);
    ctx.finalize().unwrap();
}

#[test]
fn connect_failure_is_io() {
    match Context::connect(std::path::Path::new("/nonexistent/vtee.sock")) {
        Err(ClientError::Io(_)) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("connect should fail"),
    }
}
