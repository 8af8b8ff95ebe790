use futures_util::{SinkExt, StreamExt};
use std::time::{Duration, Instant};
use tapbench::bridge::BridgeCore;
use tapbench::protocol::{decode, encode, AckStatus, ClientMessage, Mode, ServerMessage, SCHEMA_VERSION};
use tapbench_core::sim::TaskKind;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(task: TaskKind, period: f64) -> String {
    let mut cfg = task.default_config();
    cfg.control_period = period;
    let core = BridgeCore::new(cfg, None, None, 0).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(tapbench::server::serve(listener, core));
    format!("ws://{addr}")
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::binary(encode(msg))).await.unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server replied in time")
            .expect("stream open")
            .unwrap();
        if let Message::Binary(b) = msg {
            return decode(&b).unwrap();
        }
    }
}

/// Next message that is not a snapshot.
async fn recv_event(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = recv(ws).await;
        if !m.is_snapshot() {
            return m;
        }
    }
}

async fn connect(url: &str) -> Ws {
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    send(
        &mut ws,
        &ClientMessage::Hello {
            schema_version: SCHEMA_VERSION,
            client: "test".into(),
        },
    )
    .await;
    assert!(matches!(
        recv(&mut ws).await,
        ServerMessage::Welcome {
            schema_version: SCHEMA_VERSION,
            ..
        }
    ));
    assert!(matches!(recv(&mut ws).await, ServerMessage::VocabularyList { .. }));
    ws
}

#[tokio::test]
async fn handshake_then_text_command_ack() {
    let url = start(TaskKind::Unscrew, 0.02).await;
    let mut ws = connect(&url).await;
    send(&mut ws, &ClientMessage::ModeSwitch { mode: Mode::Teleop }).await;
    send(
        &mut ws,
        &ClientMessage::TextCommand {
            text: "lock x axis".into(),
        },
    )
    .await;
    let ack = recv_event(&mut ws).await;
    assert_eq!(
        ack,
        ServerMessage::TapAck {
            status: AckStatus::Accepted,
            tap: Some(1),
            name: Some("lock x axis".into()),
            distance: Some(0),
        }
    );
}

#[tokio::test]
async fn malformed_message_keeps_session() {
    let url = start(TaskKind::Unscrew, 0.02).await;
    let mut ws = connect(&url).await;
    ws.send(Message::binary(vec![0, 0, 0, 3, 0xff, 0xfe, 0xfd]))
        .await
        .unwrap();
    assert!(matches!(recv_event(&mut ws).await, ServerMessage::Error { .. }));
    ws.send(Message::text("hello?")).await.unwrap();
    assert!(matches!(recv_event(&mut ws).await, ServerMessage::Error { .. }));
    send(&mut ws, &ClientMessage::ModeSwitch { mode: Mode::Teleop }).await;
    send(
        &mut ws,
        &ClientMessage::TextCommand {
            text: "qwertyuiop".into(),
        },
    )
    .await;
    assert!(matches!(
        recv_event(&mut ws).await,
        ServerMessage::TapAck {
            status: AckStatus::NoMatch,
            ..
        }
    ));
}

#[tokio::test]
async fn version_mismatch_is_refused() {
    let url = start(TaskKind::Unscrew, 0.02).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    send(
        &mut ws,
        &ClientMessage::Hello {
            schema_version: SCHEMA_VERSION + 1,
            client: "future".into(),
        },
    )
    .await;
    let ServerMessage::Error { message } = recv(&mut ws).await else {
        panic!("expected an error");
    };
    assert!(message.contains("schema version"));
}

#[tokio::test]
async fn second_operator_is_turned_away() {
    let url = start(TaskKind::VialAspiration, 0.02).await;
    let _first = connect(&url).await;
    let (mut second, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let ServerMessage::Error { message } = recv(&mut second).await else {
        panic!("expected an error");
    };
    assert!(message.contains("session"));
}

#[tokio::test]
async fn reconnect_after_disconnect() {
    let url = start(TaskKind::VialAspiration, 0.02).await;
    let mut first = connect(&url).await;
    first.close(None).await.unwrap();
    drop(first);
    tokio::time::sleep(Duration::from_millis(100)).await;
    let _second = connect(&url).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshots_follow_the_control_period() {
    let period = 0.1;
    let url = start(TaskKind::LiquidTransfer, period).await;
    let mut ws = connect(&url).await;
    send(&mut ws, &ClientMessage::ModeSwitch { mode: Mode::Teleop }).await;
    let session = Duration::from_secs(30);
    let start = Instant::now();
    let mut arrivals = Vec::new();
    let mut last_tick = None;
    while start.elapsed() < session {
        if let ServerMessage::StateSnapshot { tick, mode, .. } = recv(&mut ws).await {
            if mode != Mode::Teleop {
                continue;
            }
            if let Some(t) = last_tick {
                assert!(tick >= t, "snapshot ticks went backwards");
            }
            last_tick = Some(tick);
            arrivals.push(Instant::now());
        }
    }
    let gaps: Vec<f64> = arrivals.windows(2).map(|w| (w[1] - w[0]).as_secs_f64()).collect();
    assert!(gaps.len() >= 250, "only {} snapshots in 30 s", gaps.len() + 1);
    // The mode switch reply is an extra snapshot right after connect.
    let outside: Vec<&f64> = gaps
        .iter()
        .skip(1)
        .filter(|g| (**g - period).abs() > 0.2 * period)
        .collect();
    assert!(
        outside.is_empty(),
        "{} of {} gaps outside 20%: {:?}",
        outside.len(),
        gaps.len(),
        &outside[..outside.len().min(10)]
    );
}
