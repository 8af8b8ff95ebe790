//! WebSocket transport for the bridge. A single control task owns the
//! [`BridgeCore`] and ticks it at the control rate; each connection gets a
//! reader feeding that task and a writer draining an [`Outbox`]. Only one
//! operator session is served at a time.

use crate::bridge::BridgeCore;
use crate::protocol::{decode, encode, ClientMessage, ServerMessage, SCHEMA_VERSION};
use futures_util::{SinkExt, StreamExt};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Notify};
use tokio_tungstenite::tungstenite::Message;

/// Snapshots kept for a slow client before the oldest are dropped.
pub const SNAPSHOT_BACKLOG: usize = 8;

const HELLO_TIMEOUT: Duration = Duration::from_secs(10);

/// Outgoing queue. Snapshots beyond the backlog are dropped oldest first;
/// every other message is kept.
#[derive(Debug)]
pub struct Outbox {
    queue: Mutex<VecDeque<ServerMessage>>,
    notify: Notify,
    backlog: usize,
}

impl Outbox {
    pub fn new(backlog: usize) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            notify: Notify::new(),
            backlog: backlog.max(1),
        }
    }

    pub fn push(&self, msg: ServerMessage) {
        let mut q = self.queue.lock().expect("outbox lock");
        if msg.is_snapshot() && q.iter().filter(|m| m.is_snapshot()).count() >= self.backlog {
            let oldest = q.iter().position(|m| m.is_snapshot()).expect("a snapshot is queued");
            q.remove(oldest);
        }
        q.push_back(msg);
        drop(q);
        self.notify.notify_one();
    }

    pub fn drain(&self) -> Vec<ServerMessage> {
        self.queue.lock().expect("outbox lock").drain(..).collect()
    }

    pub async fn wait(&self) {
        self.notify.notified().await;
    }
}

enum Event {
    Connected(Arc<Outbox>, String),
    Message(ClientMessage),
    Disconnected,
}

/// Serves operator sessions on `listener` until the process ends.
pub async fn serve(listener: TcpListener, core: BridgeCore) -> std::io::Result<()> {
    let (tx, rx) = mpsc::unbounded_channel();
    let period = Duration::from_secs_f64(core.control_period());
    tokio::spawn(control_loop(core, period, rx));
    let busy = Arc::new(AtomicBool::new(false));
    loop {
        let (stream, addr) = listener.accept().await?;
        if busy.swap(true, Ordering::SeqCst) {
            log::warn!("refusing {addr}: a session is already active");
            tokio::spawn(refuse(stream));
            continue;
        }
        log::info!("operator connected from {addr}");
        let tx = tx.clone();
        let busy = busy.clone();
        tokio::spawn(async move {
            if let Err(e) = session(stream, tx).await {
                log::warn!("session ended: {e}");
            }
            busy.store(false, Ordering::SeqCst);
        });
    }
}

async fn control_loop(mut core: BridgeCore, period: Duration, mut rx: mpsc::UnboundedReceiver<Event>) {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let mut outbox: Option<Arc<Outbox>> = None;
    let send = |outbox: &Option<Arc<Outbox>>, msgs: Vec<ServerMessage>| {
        if let Some(o) = outbox {
            msgs.into_iter().for_each(|m| o.push(m));
        }
    };
    loop {
        tokio::select! {
            _ = interval.tick() => {
                let out = core.tick();
                send(&outbox, out);
            }
            ev = rx.recv() => match ev {
                Some(Event::Connected(o, client)) => {
                    outbox = Some(o);
                    let out = core.welcome(&client);
                    send(&outbox, out);
                }
                Some(Event::Message(m)) => {
                    let out = core.handle(m);
                    send(&outbox, out);
                }
                Some(Event::Disconnected) => {
                    core.disconnect();
                    outbox = None;
                }
                None => break,
            }
        }
    }
}

async fn refuse(stream: TcpStream) {
    if let Ok(mut ws) = tokio_tungstenite::accept_async(stream).await {
        let msg = encode(&ServerMessage::error("another operator session is active"));
        let _ = ws.send(Message::binary(msg)).await;
        let _ = ws.close(None).await;
    }
}

async fn session(
    stream: TcpStream,
    tx: mpsc::UnboundedSender<Event>,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();

    let client = match tokio::time::timeout(HELLO_TIMEOUT, source.next()).await {
        Ok(Some(Ok(Message::Binary(b)))) => match decode::<ClientMessage>(&b) {
            Ok(ClientMessage::Hello { schema_version, client }) if schema_version == SCHEMA_VERSION => client,
            Ok(ClientMessage::Hello { schema_version, .. }) => {
                let e = format!("schema version {schema_version} unsupported; server speaks {SCHEMA_VERSION}");
                sink.send(Message::binary(encode(&ServerMessage::error(&e)))).await?;
                sink.close().await?;
                return Err(e.into());
            }
            _ => {
                sink.send(Message::binary(encode(&ServerMessage::error("expected hello"))))
                    .await?;
                sink.close().await?;
                return Err("no hello".into());
            }
        },
        _ => return Err("no hello".into()),
    };

    let outbox = Arc::new(Outbox::new(SNAPSHOT_BACKLOG));
    tx.send(Event::Connected(outbox.clone(), client))?;
    let writer_box = outbox.clone();
    let writer = tokio::spawn(async move {
        loop {
            writer_box.wait().await;
            for m in writer_box.drain() {
                if sink.send(Message::binary(encode(&m))).await.is_err() {
                    return;
                }
            }
        }
    });

    while let Some(msg) = source.next().await {
        match msg {
            Ok(Message::Binary(b)) => match decode::<ClientMessage>(&b) {
                Ok(m) => tx.send(Event::Message(m))?,
                Err(e) => outbox.push(ServerMessage::error(format!("malformed message: {e}"))),
            },
            Ok(Message::Text(_)) => outbox.push(ServerMessage::error("binary frames only")),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    tx.send(Event::Disconnected)?;
    writer.abort();
    Ok(())
}
