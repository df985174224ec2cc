//! UDP forwarding gateway running the full defense stack.
//!
//! One task owns the [`Resolver`]. Client queries arrive on the listen socket;
//! upstream queries leave from sockets bound on demand to the source address the
//! resolver drew for them, and are closed again once nothing listens there.

mod config;
mod metrics;

pub use config::{GatewayConfig, CONFIG_HEADER};
pub use metrics::{Metrics, MetricsSnapshot};

use std::collections::HashMap;
use std::future::Future;
use std::net::{IpAddr, SocketAddr};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use tokio::net::{TcpListener, UdpSocket};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tracing::{debug, info, warn};

use crate::resolver::{recase_owners, Answer, Completion, Datagram, Lookup, Resolver};
use crate::time::Timestamp;
use crate::wire::{decode_message, encode_message, DnsMessage, Rcode};

const MAX_DATAGRAM: usize = 4096;

struct Client {
    addr: SocketAddr,
    query: DnsMessage,
}

struct Upstream {
    socket: Arc<UdpSocket>,
    task: JoinHandle<()>,
}

/// Bound sockets, ready to serve.
pub struct Gateway {
    cfg: GatewayConfig,
    client: UdpSocket,
    metrics: Arc<Metrics>,
    metrics_listener: Option<TcpListener>,
}

impl Gateway {
    pub async fn bind(mut cfg: GatewayConfig) -> Result<Self> {
        let client = UdpSocket::bind(cfg.listen)
            .await
            .with_context(|| format!("binding client socket {}", cfg.listen))?;
        let metrics_listener = match cfg.metrics_port {
            Some(port) => {
                let addr = SocketAddr::new(cfg.listen.ip(), port);
                Some(
                    TcpListener::bind(addr)
                        .await
                        .with_context(|| format!("binding metrics endpoint {addr}"))?,
                )
            }
            None => None,
        };
        check_source_pool(&mut cfg).await;
        Ok(Gateway {
            cfg,
            client,
            metrics: Arc::new(Metrics::default()),
            metrics_listener,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.client.local_addr()?)
    }

    pub fn metrics_addr(&self) -> Option<SocketAddr> {
        self.metrics_listener.as_ref().and_then(|l| l.local_addr().ok())
    }

    pub fn metrics(&self) -> Arc<Metrics> {
        self.metrics.clone()
    }

    /// Serves until `shutdown` resolves, then lets in-flight resolutions finish up
    /// to the sandwich deadline.
    pub async fn run(self, shutdown: impl Future<Output = ()>) -> Result<()> {
        let Gateway {
            cfg,
            client,
            metrics,
            metrics_listener,
        } = self;
        if let Some(listener) = metrics_listener {
            let m = metrics.clone();
            let app = axum::Router::new().route(
                "/metrics",
                axum::routing::get(move || {
                    let m = m.clone();
                    async move { m.snapshot().render() }
                }),
            );
            tokio::spawn(async move {
                if let Err(e) = axum::serve(listener, app).await {
                    warn!(error = %e, "metrics endpoint stopped");
                }
            });
        }

        let mut resolver = Resolver::new(cfg.resolver.clone()).context("resolver configuration")?;
        let start = Instant::now();
        let now = || Timestamp::from_micros(start.elapsed().as_micros() as u64);
        let (tx, mut rx) = mpsc::channel::<(SocketAddr, SocketAddr, Vec<u8>)>(1024);
        let mut upstreams: HashMap<SocketAddr, Upstream> = HashMap::new();
        let mut clients: HashMap<u64, Client> = HashMap::new();
        let mut next_waiter = 0u64;
        let mut next_tag = 0u64;
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut draining: Option<Instant> = None;
        let drain_limit = cfg.resolver.sandwich.deadline.max(cfg.resolver.upstream_timeout);
        tokio::pin!(shutdown);

        loop {
            if let Some(since) = draining {
                if resolver.in_flight() == 0 || since.elapsed() > drain_limit {
                    break;
                }
            }
            let wake = resolver
                .next_timeout()
                .map(|t| start + Duration::from_micros(t.as_micros()))
                .unwrap_or_else(|| Instant::now() + Duration::from_secs(3600));

            tokio::select! {
                r = client.recv_from(&mut buf), if draining.is_none() => {
                    let (len, from) = r.context("client socket")?;
                    let msg = match decode_message(&buf[..len]) {
                        Ok(m) if !m.header.qr && m.question.is_some() => m,
                        _ => {
                            metrics.malformed.fetch_add(1, Ordering::Relaxed);
                            debug!(from = %from, "dropping malformed client packet");
                            continue;
                        }
                    };
                    metrics.queries.fetch_add(1, Ordering::Relaxed);
                    let question = msg.question.clone().expect("checked");
                    let waiter = next_waiter;
                    next_waiter += 1;
                    match resolver.resolve(question, waiter, now()) {
                        Lookup::Cached(answer) => {
                            metrics.sync(&resolver.stats());
                            reply(&client, from, &msg, Ok(&answer), &metrics).await;
                        }
                        Lookup::Pending(_) => {
                            clients.insert(waiter, Client { addr: from, query: msg });
                        }
                    }
                }
                Some((local, remote, payload)) = rx.recv() => {
                    next_tag += 1;
                    resolver.handle_datagram(
                        Datagram { local, remote, payload, tag: next_tag },
                        now(),
                    );
                }
                _ = tokio::time::sleep_until(wake) => {
                    resolver.handle_timeout(now());
                }
                _ = &mut shutdown, if draining.is_none() => {
                    info!(event = "shutdown", in_flight = resolver.in_flight(), "draining");
                    draining = Some(Instant::now());
                }
            }

            while let Some(t) = resolver.poll_transmit() {
                let sock = match upstreams.get(&t.local) {
                    Some(u) => u.socket.clone(),
                    None => match bind_upstream(t.local, tx.clone()).await {
                        Ok(u) => {
                            let s = u.socket.clone();
                            upstreams.insert(t.local, u);
                            s
                        }
                        Err(e) => {
                            warn!(local = %t.local, error = %e, "cannot bind upstream source");
                            continue;
                        }
                    },
                };
                debug!(event = "send", local = %t.local, remote = %t.remote, len = t.payload.len());
                if let Err(e) = sock.send_to(&t.payload, t.remote).await {
                    warn!(remote = %t.remote, error = %e, "upstream send failed");
                }
            }
            // Counters must be current before a client can see the reply they describe.
            metrics.sync(&resolver.stats());
            while let Some(c) = resolver.poll_completion() {
                complete(&client, &mut clients, c, &metrics).await;
            }
            upstreams.retain(|local, u| {
                let keep = resolver.is_listening(*local);
                if !keep {
                    u.task.abort();
                }
                keep
            });
            metrics.sync(&resolver.stats());
        }
        for (_, u) in upstreams {
            u.task.abort();
        }
        Ok(())
    }
}

/// Binds, runs and shuts down a gateway; `shutdown` ends it.
pub async fn serve(cfg: GatewayConfig, shutdown: impl Future<Output = ()>) -> Result<()> {
    let gw = Gateway::bind(cfg).await?;
    info!(
        event = "listening",
        client = %gw.local_addr()?,
        metrics = %gw.metrics_addr().map(|a| a.to_string()).unwrap_or_else(|| "off".into()),
    );
    gw.run(shutdown).await
}

/// Drops pool addresses this host cannot bind, falling back to the unspecified address.
async fn check_source_pool(cfg: &mut GatewayConfig) {
    let pool = &mut cfg.resolver.entropy.ip_pool;
    let mut usable = Vec::with_capacity(pool.len());
    for ip in pool.iter() {
        match UdpSocket::bind(SocketAddr::new(*ip, 0)).await {
            Ok(_) => usable.push(*ip),
            Err(e) => warn!(ip = %ip, error = %e, "source address not bindable, removing from pool"),
        }
    }
    if usable.is_empty() {
        let fallback = match cfg.upstreams.first() {
            Some(SocketAddr::V6(_)) => IpAddr::from([0u16; 8]),
            _ => IpAddr::from([0u8; 4]),
        };
        warn!(ip = %fallback, "no usable source address, using single-address mode");
        usable.push(fallback);
    }
    *pool = usable;
}

async fn bind_upstream(
    local: SocketAddr,
    tx: mpsc::Sender<(SocketAddr, SocketAddr, Vec<u8>)>,
) -> std::io::Result<Upstream> {
    let socket = Arc::new(UdpSocket::bind(local).await?);
    let rx_sock = socket.clone();
    let task = tokio::spawn(async move {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while let Ok((len, from)) = rx_sock.recv_from(&mut buf).await {
            if tx.send((local, from, buf[..len].to_vec())).await.is_err() {
                break;
            }
        }
    });
    Ok(Upstream { socket, task })
}

async fn complete(
    client: &UdpSocket,
    clients: &mut HashMap<u64, Client>,
    c: Completion,
    metrics: &Metrics,
) {
    for w in c.waiters {
        if let Some(cl) = clients.remove(&w) {
            reply(client, cl.addr, &cl.query, c.result.as_ref().map_err(|_| ()), metrics).await;
        }
    }
}

/// Answers `query` with its own txid and question spelling.
async fn reply(
    sock: &UdpSocket,
    to: SocketAddr,
    query: &DnsMessage,
    result: Result<&Answer, ()>,
    metrics: &Metrics,
) {
    let mut resp = DnsMessage::response_to(query, Rcode::NOERROR);
    match result {
        Ok(a) => {
            let name = &query.question.as_ref().expect("queries carry a question").name;
            resp.header.rcode = a.rcode;
            resp.answers = recase_owners(&a.answers, name);
            resp.authority = a.authority.clone();
        }
        Err(()) => {
            metrics.servfail.fetch_add(1, Ordering::Relaxed);
            resp.header.rcode = Rcode::SERVFAIL;
        }
    }
    match encode_message(&resp) {
        Ok(bytes) => {
            if let Err(e) = sock.send_to(&bytes, to).await {
                warn!(client = %to, error = %e, "reply failed");
            }
        }
        Err(e) => warn!(client = %to, error = %e, "unencodable reply"),
    }
}
