//! Bus client. One background reader demultiplexes Deliver frames onto
//! subscription streams and Ack/Error frames onto pending requests.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tracing::debug;

use super::frame::{read_frame, validate_topic, write_frame, Frame, FrameKind};
use crate::error::{Error, Result};

type Reply = oneshot::Sender<Result<()>>;

#[derive(Default)]
struct Shared {
    pending: Mutex<VecDeque<Reply>>,
    subs: Mutex<HashMap<String, Vec<mpsc::UnboundedSender<Vec<u8>>>>>,
    connected: AtomicBool,
}

impl Shared {
    fn disconnect(&self) {
        self.connected.store(false, Ordering::SeqCst);
        for reply in self.pending.lock().unwrap().drain(..) {
            let _ = reply.send(Err(Error::NotConnected));
        }
        self.subs.lock().unwrap().clear();
    }
}

struct ReaderGuard(JoinHandle<()>);

impl Drop for ReaderGuard {
    fn drop(&mut self) {
        self.0.abort();
    }
}

/// Cheap to clone; clones share one connection.
#[derive(Clone)]
pub struct BusClient {
    shared: Arc<Shared>,
    writer: Arc<tokio::sync::Mutex<OwnedWriteHalf>>,
    _reader: Arc<ReaderGuard>,
}

impl std::fmt::Debug for BusClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BusClient")
            .field("connected", &self.is_connected())
            .finish()
    }
}

impl BusClient {
    pub async fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr).await.map_err(|e| {
            debug!(addr, error = %e, "connect failed");
            Error::NotConnected
        })?;
        let _ = stream.set_nodelay(true);
        let (mut reader, writer) = stream.into_split();
        let shared = Arc::new(Shared::default());
        shared.connected.store(true, Ordering::SeqCst);

        let rs = shared.clone();
        let reader_task = tokio::spawn(async move {
            loop {
                match read_frame(&mut reader).await {
                    Ok(Some(frame)) => dispatch(&rs, frame),
                    Ok(None) => break,
                    Err(e) => {
                        debug!(error = %e, "bus read failed");
                        break;
                    }
                }
            }
            rs.disconnect();
        });

        Ok(Self {
            shared,
            writer: Arc::new(tokio::sync::Mutex::new(writer)),
            _reader: Arc::new(ReaderGuard(reader_task)),
        })
    }

    pub fn is_connected(&self) -> bool {
        self.shared.connected.load(Ordering::SeqCst)
    }

    async fn request(&self, frame: Frame) -> Result<()> {
        if !self.is_connected() {
            return Err(Error::NotConnected);
        }
        let (tx, rx) = oneshot::channel();
        {
            // Pending replies must be queued in the same order frames hit the wire.
            let mut writer = self.writer.lock().await;
            self.shared.pending.lock().unwrap().push_back(tx);
            if write_frame(&mut *writer, &frame).await.is_err() {
                self.shared.disconnect();
                return Err(Error::NotConnected);
            }
        }
        rx.await.map_err(|_| Error::NotConnected)?
    }

    /// Resolves once the broker has acknowledged the message.
    pub async fn publish(&self, topic: &str, payload: Vec<u8>) -> Result<()> {
        validate_topic(topic)?;
        self.request(Frame::publish(topic, payload)).await
    }

    /// Every payload published on `topic` after the broker acknowledges the
    /// subscription, in delivery order.
    pub async fn subscribe(&self, topic: &str) -> Result<Subscription> {
        validate_topic(topic)?;
        if !self.is_connected() {
            return Err(Error::NotConnected);
        }
        let (tx, rx) = mpsc::unbounded_channel();
        self.shared
            .subs
            .lock()
            .unwrap()
            .entry(topic.to_string())
            .or_default()
            .push(tx);
        self.request(Frame::subscribe(topic)).await?;
        Ok(Subscription { topic: topic.to_string(), rx })
    }
}

fn dispatch(shared: &Shared, frame: Frame) {
    match frame.kind {
        FrameKind::Deliver => {
            let mut subs = shared.subs.lock().unwrap();
            if let Some(list) = subs.get_mut(&frame.topic) {
                list.retain(|tx| tx.send(frame.payload.clone()).is_ok());
            }
        }
        FrameKind::Ack | FrameKind::Error => {
            let Some(reply) = shared.pending.lock().unwrap().pop_front() else {
                debug!("unsolicited {:?} frame", frame.kind);
                return;
            };
            let result = if frame.kind == FrameKind::Ack {
                Ok(())
            } else {
                Err(Error::Broker(String::from_utf8_lossy(&frame.payload).into_owned()))
            };
            let _ = reply.send(result);
        }
        other => debug!("ignoring {other:?} frame from broker"),
    }
}

#[derive(Debug)]
pub struct Subscription {
    topic: String,
    rx: mpsc::UnboundedReceiver<Vec<u8>>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// `None` once the connection is gone.
    pub async fn recv(&mut self) -> Option<Vec<u8>> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Vec<u8>> {
        self.rx.try_recv().ok()
    }
}
