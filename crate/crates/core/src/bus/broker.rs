//! Topic broker: fans every Publish out to the current subscribers of its
//! topic. No retention; a publish with no subscribers is acknowledged and
//! dropped.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use tokio::io::BufWriter;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tracing::{debug, info, warn};

use super::frame::{read_frame, validate_topic, write_frame, Frame, FrameKind};
use crate::error::{Error, Result};

type ConnId = u64;
type Outbound = mpsc::UnboundedSender<Frame>;

#[derive(Default)]
struct Routes {
    topics: HashMap<String, Vec<(ConnId, Outbound)>>,
}

impl Routes {
    fn subscribe(&mut self, topic: &str, conn: ConnId, tx: &Outbound) {
        let subs = self.topics.entry(topic.to_string()).or_default();
        if !subs.iter().any(|(id, _)| *id == conn) {
            subs.push((conn, tx.clone()));
        }
    }

    fn drop_connection(&mut self, conn: ConnId) {
        self.topics.retain(|_, subs| {
            subs.retain(|(id, _)| *id != conn);
            !subs.is_empty()
        });
    }
}

pub struct Broker {
    listener: TcpListener,
    routes: Arc<Mutex<Routes>>,
    next_conn: AtomicU64,
}

impl Broker {
    pub async fn bind(addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Self {
            listener,
            routes: Arc::default(),
            next_conn: AtomicU64::new(1),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub async fn serve(self) -> Result<()> {
        self.serve_until(std::future::pending()).await
    }

    pub async fn serve_until(self, shutdown: impl Future<Output = ()>) -> Result<()> {
        info!(addr = %self.local_addr()?, "broker listening");
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => {
                    info!("broker shutting down");
                    return Ok(());
                }
                accepted = self.listener.accept() => {
                    let (stream, peer) = match accepted {
                        Ok(a) => a,
                        Err(e) => {
                            warn!(error = %e, "accept failed");
                            continue;
                        }
                    };
                    let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
                    debug!(conn, %peer, "client connected");
                    tokio::spawn(handle_connection(conn, stream, self.routes.clone()));
                }
            }
        }
    }

    /// Binds and serves in a background task, returning the bound address.
    pub async fn spawn(addr: &str) -> Result<(SocketAddr, tokio::task::JoinHandle<Result<()>>)> {
        let broker = Self::bind(addr).await?;
        let local = broker.local_addr()?;
        Ok((local, tokio::spawn(broker.serve())))
    }
}

pub async fn broker_serve(bind: &str) -> Result<()> {
    Broker::bind(bind).await?.serve().await
}

async fn handle_connection(conn: ConnId, stream: TcpStream, routes: Arc<Mutex<Routes>>) {
    let _ = stream.set_nodelay(true);
    let (mut reader, writer) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Frame>();

    let writer_task = tokio::spawn(async move {
        let mut writer = BufWriter::new(writer);
        while let Some(frame) = rx.recv().await {
            if let Err(e) = write_frame(&mut writer, &frame).await {
                debug!(conn, error = %e, "write failed");
                break;
            }
        }
    });

    loop {
        let frame = match read_frame(&mut reader).await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(Error::Io(e)) => {
                debug!(conn, error = %e, "read failed");
                break;
            }
            Err(e) => {
                // The stream cannot be resynchronised after a bad header.
                warn!(conn, error = %e, "protocol error, closing connection");
                let _ = tx.send(Frame::error("", &e.to_string()));
                break;
            }
        };
        let reply = route(conn, frame, &routes, &tx);
        if tx.send(reply).is_err() {
            break;
        }
    }

    routes.lock().unwrap().drop_connection(conn);
    drop(tx);
    let _ = writer_task.await;
    debug!(conn, "client disconnected");
}

fn route(conn: ConnId, frame: Frame, routes: &Mutex<Routes>, own: &Outbound) -> Frame {
    if let Err(e) = validate_topic(&frame.topic) {
        return Frame::error(frame.topic, &e.to_string());
    }
    match frame.kind {
        FrameKind::Subscribe => {
            routes.lock().unwrap().subscribe(&frame.topic, conn, own);
            Frame::ack(frame.topic)
        }
        FrameKind::Publish => {
            let routes = routes.lock().unwrap();
            if let Some(subs) = routes.topics.get(&frame.topic) {
                for (_, tx) in subs {
                    // A closed receiver means the subscriber is going away.
                    let _ = tx.send(Frame::deliver(frame.topic.clone(), frame.payload.clone()));
                }
            }
            Frame::ack(frame.topic)
        }
        kind => Frame::error(frame.topic, &format!("clients may not send {kind:?} frames")),
    }
}
