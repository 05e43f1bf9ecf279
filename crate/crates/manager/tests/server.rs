// SPDX-License-Identifier: Apache-2.0

//! The unix-socket frontend, exercised with hand-rolled frames.

use std::os::unix::net::UnixStream;

use gp_core::wire::Message;
use gp_core::{read_frame, write_frame, Operation, Parameter, ReturnCode, TaManifest, Uuid};
use manager::{ManagerConfig, Server};
use ta_runtime::demo::CMD_DOUBLE;
use ta_runtime::package::TaPackage;

fn uuid(n: u8) -> Uuid {
    let mut b = [0u8; 16];
    b[3] = n;
    Uuid::from_bytes(b)
}

fn start_server(dir: &std::path::Path) -> (std::path::PathBuf, Server) {
    let config = ManagerConfig::for_dir(dir, [9u8; 32]);
    let socket = config.socket_path.clone();
    let server = Server::bind(config).unwrap();
    (socket, server)
}

fn rpc(stream: &mut UnixStream, msg: Message) -> Message {
    write_frame(stream, &msg.to_frame()).unwrap();
    Message::from_frame(&read_frame(stream).unwrap()).unwrap()
}

#[test]
fn frame_rpc_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (socket, server) = start_server(dir.path());
    {
        let core = server.core();
        let manifest = TaManifest {
            uuid: uuid(1),
            name: "doubler".into(),
            single_instance: true,
            valid_digests: Default::default(),
            storage_quota: 0,
        };
        let pkg = TaPackage::build(manifest, b"doubler image".to_vec());
        core.lock().unwrap().install_package(&pkg.to_bytes()).unwrap();
    }
    std::thread::spawn(move || {
        let _ = server.run();
    });

    let mut stream = UnixStream::connect(&socket).unwrap();
    let resp = rpc(
        &mut stream,
        Message::OpenSessionReq {
            request_id: 100,
            context_id: 1,
            uuid: uuid(1),
            params: Operation::default(),
        },
    );
    let Message::OpenSessionResp {
        request_id,
        session_id,
        code,
        ..
    } = resp
    else {
        panic!("unexpected response {resp:?}");
    };
    assert_eq!(request_id, 100);
    assert_eq!(code, ReturnCode::Success);

    let resp = rpc(
        &mut stream,
        Message::InvokeReq {
            request_id: 101,
            session_id,
            command_id: CMD_DOUBLE,
            params: Operation::single(Parameter::ValueInOut { a: 3, b: 4 }),
        },
    );
    let Message::InvokeResp { code, params, .. } = resp else {
        panic!("unexpected response {resp:?}");
    };
    assert_eq!(code, ReturnCode::Success);
    assert_eq!(params.0[0], Parameter::ValueInOut { a: 6, b: 8 });

    // FinalizeCtx: no response frame, EOF is the ack
    write_frame(
        &mut stream,
        &Message::FinalizeCtx {
            request_id: 102,
            context_id: 1,
        }
        .to_frame(),
    )
    .unwrap();
    assert!(read_frame(&mut stream).is_err());

    // a second client cannot touch the finalized session
    let mut stream2 = UnixStream::connect(&socket).unwrap();
    let resp = rpc(
        &mut stream2,
        Message::InvokeReq {
            request_id: 103,
            session_id,
            command_id: CMD_DOUBLE,
            params: Operation::default(),
        },
    );
    let Message::InvokeResp { code, .. } = resp else {
        panic!("unexpected response {resp:?}");
    };
    assert_eq!(code, ReturnCode::ErrorBadState);
}

#[test]
fn live_socket_refuses_second_bind_but_stale_is_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let (socket, server) = start_server(dir.path());
    // live manager on the socket: second bind must fail
    let config2 = {
        let mut c = ManagerConfig::for_dir(dir.path(), [9u8; 32]);
        c.storage_dir = dir.path().join("storage2");
        c
    };
    let t = std::thread::spawn(move || {
        let _ = server.run();
    });
    assert!(Server::bind(config2.clone()).is_err());
    drop(t);

    // stale socket file without a listener: replaced silently
    let dir2 = tempfile::tempdir().unwrap();
    let mut config3 = ManagerConfig::for_dir(dir2.path(), [9u8; 32]);
    std::fs::write(&config3.socket_path, b"").unwrap();
    config3.storage_dir = dir2.path().join("storage");
    let server3 = Server::bind(config3).unwrap();
    drop(server3);
    let _ = socket;
}
