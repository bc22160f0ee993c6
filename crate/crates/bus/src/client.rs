use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot};

use crate::broker::{Broker, SessionId};
use crate::error::BusError;
use crate::message::{BusMessage, Frame};
use crate::topic::{TopicFilter, TopicName};

type AckQueue = Mutex<VecDeque<oneshot::Sender<Result<(), BusError>>>>;

#[derive(Default)]
struct LocalSubs {
    entries: Vec<(u64, TopicFilter, mpsc::UnboundedSender<BusMessage>)>,
    next_id: u64,
}

impl LocalSubs {
    fn dispatch(&mut self, msg: BusMessage) {
        let Ok(topic) = TopicName::parse(&msg.topic) else {
            return;
        };
        self.entries.retain(|(_, filter, tx)| {
            if filter.matches(&topic) {
                tx.send(msg.clone()).is_ok()
            } else {
                !tx.is_closed()
            }
        });
    }
}

enum Transport {
    Loopback {
        broker: Arc<Broker>,
        session: SessionId,
    },
    Tcp {
        tx: mpsc::UnboundedSender<String>,
        acks: Arc<AckQueue>,
        connected: Arc<AtomicBool>,
    },
}

struct ClientInner {
    transport: Transport,
    subs: Arc<Mutex<LocalSubs>>,
    next_seq: AtomicU64,
}

impl Drop for ClientInner {
    fn drop(&mut self) {
        if let Transport::Loopback { broker, session } = &self.transport {
            broker.close_session(*session);
        }
    }
}

/// A connection to the broker, either in-process or over TCP.
///
/// Cloning yields another handle to the same connection.
#[derive(Clone)]
pub struct BusClient {
    inner: Arc<ClientInner>,
}

impl BusClient {
    /// In-process connection to `broker`.
    pub fn loopback(broker: &Arc<Broker>) -> Self {
        let subs = Arc::new(Mutex::new(LocalSubs::default()));
        let sink_subs = subs.clone();
        let session = broker.open_session(Arc::new(move |msg| {
            sink_subs.lock().unwrap().dispatch(msg);
        }));
        BusClient {
            inner: Arc::new(ClientInner {
                transport: Transport::Loopback {
                    broker: broker.clone(),
                    session,
                },
                subs,
                next_seq: AtomicU64::new(0),
            }),
        }
    }

    /// Connects to a broker server speaking the line-delimited JSON protocol.
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<Self, BusError> {
        let stream = TcpStream::connect(addr)
            .await
            .map_err(|e| BusError::connection(e.to_string()))?;
        stream.set_nodelay(true).ok();
        let (read_half, mut write_half) = stream.into_split();
        let (tx, mut rx) = mpsc::unbounded_channel::<String>();
        let acks: Arc<AckQueue> = Arc::default();
        let connected = Arc::new(AtomicBool::new(true));
        let subs = Arc::new(Mutex::new(LocalSubs::default()));

        tokio::spawn(async move {
            while let Some(line) = rx.recv().await {
                if write_half.write_all(line.as_bytes()).await.is_err() {
                    break;
                }
            }
        });

        let (r_acks, r_connected, r_subs) = (acks.clone(), connected.clone(), subs.clone());
        tokio::spawn(async move {
            let mut lines = BufReader::new(read_half).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                match serde_json::from_str::<Frame>(&line) {
                    Ok(Frame::Msg {
                        topic,
                        payload,
                        seq,
                        published_at,
                    }) => r_subs.lock().unwrap().dispatch(BusMessage {
                        topic,
                        payload,
                        published_at,
                        seq,
                    }),
                    Ok(Frame::Suback { .. }) | Ok(Frame::Unsuback { .. }) => {
                        if let Some(ack) = r_acks.lock().unwrap().pop_front() {
                            let _ = ack.send(Ok(()));
                        }
                    }
                    Ok(Frame::Err { message }) => {
                        if let Some(ack) = r_acks.lock().unwrap().pop_front() {
                            let _ = ack.send(Err(BusError::Protocol(message)));
                        }
                    }
                    _ => {}
                }
            }
            r_connected.store(false, Ordering::SeqCst);
            r_subs.lock().unwrap().entries.clear();
            for ack in r_acks.lock().unwrap().drain(..) {
                let _ = ack.send(Err(BusError::connection("broker closed the connection")));
            }
        });

        Ok(BusClient {
            inner: Arc::new(ClientInner {
                transport: Transport::Tcp {
                    tx,
                    acks,
                    connected,
                },
                subs,
                next_seq: AtomicU64::new(0),
            }),
        })
    }

    pub fn is_connected(&self) -> bool {
        match &self.inner.transport {
            Transport::Loopback { .. } => true,
            Transport::Tcp { connected, .. } => connected.load(Ordering::SeqCst),
        }
    }

    /// Publishes `payload` on `topic`. Succeeds even when nobody listens.
    pub fn publish(&self, topic: &str, payload: Value) -> Result<(), BusError> {
        let topic = TopicName::parse(topic)?;
        match &self.inner.transport {
            Transport::Loopback { broker, .. } => {
                let seq = self.inner.next_seq.fetch_add(1, Ordering::SeqCst);
                broker.route(&topic, payload, seq);
                Ok(())
            }
            Transport::Tcp { tx, connected, .. } => {
                if !connected.load(Ordering::SeqCst) {
                    return Err(BusError::connection("not connected"));
                }
                let frame = Frame::Pub {
                    topic: topic.as_str().to_owned(),
                    payload,
                };
                tx.send(frame.to_line())
                    .map_err(|_| BusError::connection("not connected"))
            }
        }
    }

    /// Serializes `payload` and publishes it.
    pub fn publish_json<T: serde::Serialize>(&self, topic: &str, payload: &T) -> Result<(), BusError> {
        let value = serde_json::to_value(payload).map_err(|e| BusError::protocol(e.to_string()))?;
        self.publish(topic, value)
    }

    /// Subscribes to `pattern`. Returns once the broker has registered the
    /// subscription, so any publish accepted afterwards is delivered.
    pub async fn subscribe(&self, pattern: &str) -> Result<Subscription, BusError> {
        let filter = TopicFilter::parse(pattern)?;
        let (tx, rx) = mpsc::unbounded_channel();
        let id = {
            let mut subs = self.inner.subs.lock().unwrap();
            let id = subs.next_id;
            subs.next_id += 1;
            subs.entries.push((id, filter.clone(), tx));
            id
        };
        let registered = match &self.inner.transport {
            Transport::Loopback { broker, session } => {
                broker.add_pattern(*session, filter.clone());
                Ok(())
            }
            Transport::Tcp { .. } => {
                self.request(Frame::Sub {
                    pattern: filter.as_str().to_owned(),
                })
                .await
            }
        };
        if let Err(e) = registered {
            self.inner.subs.lock().unwrap().entries.retain(|(i, _, _)| *i != id);
            return Err(e);
        }
        Ok(Subscription {
            id,
            filter,
            rx,
            client: self.inner.clone(),
            active: true,
        })
    }

    async fn request(&self, frame: Frame) -> Result<(), BusError> {
        let Transport::Tcp { tx, acks, connected } = &self.inner.transport else {
            return Ok(());
        };
        if !connected.load(Ordering::SeqCst) {
            return Err(BusError::connection("not connected"));
        }
        let (ack_tx, ack_rx) = oneshot::channel();
        {
            let mut queue = acks.lock().unwrap();
            queue.push_back(ack_tx);
            tx.send(frame.to_line())
                .map_err(|_| BusError::connection("not connected"))?;
        }
        ack_rx
            .await
            .map_err(|_| BusError::connection("connection dropped"))?
    }
}

impl ClientInner {
    /// Drops the local route and returns the frame to send upstream, if any.
    fn detach(&self, id: u64, filter: &TopicFilter) -> Option<Frame> {
        self.subs.lock().unwrap().entries.retain(|(i, _, _)| *i != id);
        match &self.transport {
            Transport::Loopback { broker, session } => {
                broker.remove_pattern(*session, filter);
                None
            }
            Transport::Tcp { .. } => Some(Frame::Unsub {
                pattern: filter.as_str().to_owned(),
            }),
        }
    }
}

/// Stream of messages matching one pattern. Dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    filter: TopicFilter,
    rx: mpsc::UnboundedReceiver<BusMessage>,
    client: Arc<ClientInner>,
    active: bool,
}

impl Subscription {
    pub fn pattern(&self) -> &str {
        self.filter.as_str()
    }

    /// Next matching message; `None` once the connection is gone.
    pub async fn recv(&mut self) -> Option<BusMessage> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<BusMessage> {
        self.rx.try_recv().ok()
    }

    /// Stops delivery. No message is delivered to this subscription after
    /// the call, and the broker has dropped the pattern once it returns.
    pub async fn unsubscribe(mut self) -> Result<(), BusError> {
        self.active = false;
        let frame = self.client.detach(self.id, &self.filter);
        self.rx.close();
        if let Some(frame) = frame {
            let client = BusClient {
                inner: self.client.clone(),
            };
            client.request(frame).await?;
        }
        Ok(())
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if !self.active {
            return;
        }
        if let Some(frame) = self.client.detach(self.id, &self.filter) {
            if let Transport::Tcp { tx, acks, .. } = &self.client.transport {
                // Nobody waits for this acknowledgement; queue a dummy slot so
                // later acknowledgements stay aligned with their requests.
                let (ack_tx, _) = oneshot::channel();
                let mut queue = acks.lock().unwrap();
                queue.push_back(ack_tx);
                let _ = tx.send(frame.to_line());
            }
        }
    }
}
