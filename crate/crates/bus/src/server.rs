use std::net::SocketAddr;
use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::broker::Broker;
use crate::message::Frame;
use crate::topic::{TopicFilter, TopicName};

/// TCP front end of a [`Broker`].
pub struct BrokerServer {
    local_addr: SocketAddr,
    task: JoinHandle<()>,
}

impl BrokerServer {
    /// Binds `addr` and starts accepting connections.
    pub async fn bind(addr: SocketAddr, broker: Arc<Broker>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let local_addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            loop {
                match listener.accept().await {
                    Ok((stream, _)) => {
                        tokio::spawn(serve_connection(stream, broker.clone()));
                    }
                    Err(_) => continue,
                }
            }
        });
        Ok(BrokerServer { local_addr, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(&self) {
        self.task.abort();
    }
}

impl Drop for BrokerServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve_connection(stream: TcpStream, broker: Arc<Broker>) {
    stream.set_nodelay(true).ok();
    let (read_half, mut write_half) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();

    let writer = tokio::spawn(async move {
        while let Some(line) = rx.recv().await {
            if write_half.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
    });

    let sink_tx = tx.clone();
    let session = broker.open_session(Arc::new(move |msg| {
        let frame = Frame::Msg {
            topic: msg.topic,
            payload: msg.payload,
            seq: msg.seq,
            published_at: msg.published_at,
        };
        let _ = sink_tx.send(frame.to_line());
    }));

    let mut seq = 0u64;
    let mut lines = BufReader::new(read_half).lines();
    while let Ok(Some(line)) = lines.next_line().await {
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Frame>(&line) {
            Ok(Frame::Sub { pattern }) => match TopicFilter::parse(&pattern) {
                Ok(filter) => {
                    broker.add_pattern(session, filter);
                    Some(Frame::Suback { pattern })
                }
                Err(e) => Some(Frame::Err {
                    message: e.to_string(),
                }),
            },
            Ok(Frame::Unsub { pattern }) => match TopicFilter::parse(&pattern) {
                Ok(filter) => {
                    broker.remove_pattern(session, &filter);
                    Some(Frame::Unsuback { pattern })
                }
                Err(e) => Some(Frame::Err {
                    message: e.to_string(),
                }),
            },
            Ok(Frame::Pub { topic, payload }) => match TopicName::parse(&topic) {
                Ok(topic) => {
                    broker.route(&topic, payload, seq);
                    seq += 1;
                    None
                }
                Err(e) => Some(Frame::Err {
                    message: e.to_string(),
                }),
            },
            Ok(other) => Some(Frame::Err {
                message: format!("unexpected frame from client: {other:?}"),
            }),
            Err(e) => Some(Frame::Err {
                message: format!("malformed frame: {e}"),
            }),
        };
        if let Some(reply) = reply {
            if tx.send(reply.to_line()).is_err() {
                break;
            }
        }
    }

    broker.close_session(session);
    drop(tx);
    let _ = writer.await;
}
