//! Helpers for driving the `antidote` binary over loopback.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpStream, UdpSocket};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use dns_antidote::gateway::MetricsSnapshot;
use dns_antidote::sim::AuthoritySim;
use dns_antidote::wire::{decode_message, encode_message, DnsMessage, Question, Record, RecordType};
use dns_antidote::DnsName;

pub const FORGED_ADDR: Ipv4Addr = Ipv4Addr::new(6, 6, 6, 6);

/// One query as seen by the upstream.
#[derive(Debug, Clone)]
pub struct Observed {
    pub from: SocketAddr,
    pub txid: u16,
    pub qname: DnsName,
}

/// How an injected forgery differs from the true reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forgery {
    /// Sent from the upstream address with the txid off by one.
    WrongTxid,
    /// Right txid, sent from a different port.
    WrongSource,
}

/// Authoritative upstream for one zone on a loopback UDP socket. The first query
/// for each name in `inject` gets its forgery just before the true reply.
pub struct Upstream {
    pub addr: SocketAddr,
    pub seen: Arc<Mutex<Vec<Observed>>>,
    pub forged_sent: Arc<Mutex<u32>>,
}

impl Upstream {
    pub fn start(zone: &str, inject: Vec<(DnsName, Forgery)>) -> Upstream {
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = sock.local_addr().unwrap();
        let injector = UdpSocket::bind("127.0.0.1:0").unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let forged_sent = Arc::new(Mutex::new(0));
        let authority = AuthoritySim::example(zone.parse().unwrap());
        let (seen2, forged2) = (seen.clone(), forged_sent.clone());
        thread::spawn(move || {
            let mut pending = inject;
            let mut buf = [0u8; 4096];
            while let Ok((len, from)) = sock.recv_from(&mut buf) {
                let Ok(query) = decode_message(&buf[..len]) else { continue };
                let Some(q) = query.question.clone() else { continue };
                seen2.lock().unwrap().push(Observed {
                    from,
                    txid: query.header.id,
                    qname: q.name.clone(),
                });
                if let Some(i) = pending.iter().position(|(n, _)| n.eq_ignore_case(&q.name)) {
                    let _ = match pending.remove(i).1 {
                        Forgery::WrongTxid => sock.send_to(&forge(&query, query.header.id.wrapping_add(1)), from),
                        Forgery::WrongSource => injector.send_to(&forge(&query, query.header.id), from),
                    };
                    *forged2.lock().unwrap() += 1;
                }
                if let Some(resp) = authority.respond(&query) {
                    let _ = sock.send_to(&encode_message(&resp).unwrap(), from);
                }
            }
        });
        Upstream {
            addr,
            seen,
            forged_sent,
        }
    }

    pub fn observed(&self) -> Vec<Observed> {
        self.seen.lock().unwrap().clone()
    }
}

fn forge(query: &DnsMessage, txid: u16) -> Vec<u8> {
    let mut resp = DnsMessage::response_to(query, dns_antidote::wire::Rcode::NOERROR);
    resp.header.id = txid;
    resp.header.aa = true;
    let q = query.question.as_ref().unwrap();
    resp.answers.push(Record::a(q.name.clone(), 86_400, FORGED_ADDR));
    encode_message(&resp).unwrap()
}

/// A running `antidote serve` process.
pub struct Gateway {
    child: Child,
    pub client: SocketAddr,
    pub metrics: SocketAddr,
    pub logs: Arc<Mutex<Vec<String>>>,
}

impl Gateway {
    pub fn spawn(upstream: SocketAddr, seed: u64, extra: &[&str]) -> Gateway {
        let mut child = Command::new(env!("CARGO_BIN_EXE_antidote"))
            .args(["serve", "--listen", "127.0.0.1:0", "--metrics-port", "0"])
            .args(["--upstream", &upstream.to_string()])
            .args(["--seed", &seed.to_string(), "--log-level", "info"])
            .args(extra)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn antidote");
        let logs = Arc::new(Mutex::new(Vec::new()));
        let (tx, rx) = mpsc::channel();
        let stderr = child.stderr.take().unwrap();
        let logs2 = logs.clone();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                if line.contains("listening") {
                    let _ = tx.send(line.clone());
                }
                logs2.lock().unwrap().push(line);
            }
        });
        let (client, metrics) = wait_listening(&rx).unwrap_or_else(|| {
            let _ = child.kill();
            panic!("gateway did not report its addresses: {:?}", logs.lock().unwrap());
        });
        Gateway {
            child,
            client,
            metrics,
            logs,
        }
    }

    pub fn logs(&self) -> Vec<String> {
        self.logs.lock().unwrap().clone()
    }

    pub fn log_events(&self, event: &str) -> usize {
        let needle = format!("event=\"{event}\"");
        let bare = format!("event={event} ");
        self.logs()
            .iter()
            .filter(|l| l.contains(&needle) || l.contains(&bare))
            .count()
    }

    pub fn scrape(&self) -> MetricsSnapshot {
        let mut s = TcpStream::connect(self.metrics).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        write!(s, "GET /metrics HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut text = String::new();
        s.read_to_string(&mut text).unwrap();
        let (head, body) = text.split_once("\r\n\r\n").expect("http response");
        assert!(head.starts_with("HTTP/1.1 200"), "{head}");
        MetricsSnapshot::parse(body).expect("metrics body")
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn field(line: &str, key: &str) -> Option<SocketAddr> {
    let rest = &line[line.find(&format!("{key}="))? + key.len() + 1..];
    rest.split_whitespace().next()?.trim_matches('"').parse().ok()
}

fn wait_listening(rx: &Receiver<String>) -> Option<(SocketAddr, SocketAddr)> {
    let line = rx.recv_timeout(Duration::from_secs(10)).ok()?;
    Some((field(&line, "client")?, field(&line, "metrics")?))
}

/// A stub client that sends one query and waits for the matching reply.
pub struct Client {
    sock: UdpSocket,
    to: SocketAddr,
}

impl Client {
    pub fn new(to: SocketAddr) -> Client {
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.set_read_timeout(Some(Duration::from_millis(200))).unwrap();
        Client { sock, to }
    }

    pub fn send_raw(&self, bytes: &[u8]) {
        self.sock.send_to(bytes, self.to).unwrap();
    }

    pub fn query(&self, txid: u16, name: &str, qtype: RecordType) -> DnsMessage {
        let mut q = DnsMessage::query(txid, Question::new(name.parse().unwrap(), qtype));
        q.header.rd = true;
        self.send_raw(&encode_message(&q).unwrap());
        let deadline = Instant::now() + Duration::from_secs(10);
        let mut buf = [0u8; 4096];
        while Instant::now() < deadline {
            if let Ok((len, _)) = self.sock.recv_from(&mut buf) {
                if let Ok(m) = decode_message(&buf[..len]) {
                    if m.header.id == txid {
                        return m;
                    }
                }
            }
        }
        panic!("no reply for {name}");
    }
}

/// A-record addresses in `m`'s answer section.
pub fn addrs(m: &DnsMessage) -> Vec<Ipv4Addr> {
    m.answers
        .iter()
        .filter_map(|r| match r.rdata {
            dns_antidote::wire::RData::A(a) => Some(a),
            _ => None,
        })
        .collect()
}
