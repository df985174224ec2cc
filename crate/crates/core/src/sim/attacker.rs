use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::str::FromStr;

use bitflags::bitflags;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::entropy::{apply_0x20, PortRange};
use crate::wire::{DnsMessage, DnsName, Question, Rcode, Record, RecordType};

/// Address every forged record points at.
pub const POISON_ADDR: Ipv4Addr = Ipv4Addr::new(6, 6, 6, 6);
pub const POISON_TTL: u32 = 86_400;

bitflags! {
    /// Validation fields the attacker is granted outright.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct KnownFields: u8 {
        const TXID = 1 << 0;
        const PORT = 1 << 1;
        const SRC_IP = 1 << 2;
        const DST_IP = 1 << 3;
        const CASE = 1 << 4;
    }
}

impl FromStr for KnownFields {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut k = KnownFields::empty();
        for f in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            k |= match f {
                "txid" => KnownFields::TXID,
                "port" => KnownFields::PORT,
                "src_ip" | "ip" => KnownFields::SRC_IP,
                "dst_ip" | "dst" => KnownFields::DST_IP,
                "case" => KnownFields::CASE,
                "all" => KnownFields::all(),
                _ => return Err(format!("unknown field `{f}`")),
            };
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Independent uniform guesses, with replacement.
    BlindFlood,
    /// Distinct consecutive transaction IDs from a random start.
    BruteForceTxid,
    /// A fresh `<8 digits>.<zone>` query per window with forged delegation and glue.
    Kaminsky,
}

impl Strategy {
    fn as_str(self) -> &'static str {
        match self {
            Strategy::BlindFlood => "blind-flood",
            Strategy::BruteForceTxid => "brute-force-txid",
            Strategy::Kaminsky => "kaminsky",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackerConfig {
    pub strategy: Strategy,
    pub packets_per_window: u32,
    pub known_fields: KnownFields,
}

impl AttackerConfig {
    pub fn new(strategy: Strategy, packets_per_window: u32) -> Self {
        AttackerConfig {
            strategy,
            packets_per_window,
            known_fields: KnownFields::empty(),
        }
    }

    pub fn with_known(mut self, known: KnownFields) -> Self {
        self.known_fields = known;
        self
    }
}

/// `strategy:packets[:field,field,...]`, e.g. `blind-flood:16:txid,port`.
impl FromStr for AttackerConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.trim().splitn(3, ':');
        let strategy = match parts.next().unwrap_or_default() {
            "blind-flood" | "blind" => Strategy::BlindFlood,
            "brute-force-txid" | "brute-force" => Strategy::BruteForceTxid,
            "kaminsky" => Strategy::Kaminsky,
            other => return Err(format!("unknown attacker strategy `{other}`")),
        };
        let packets = match parts.next() {
            Some(n) => n
                .parse()
                .map_err(|_| format!("invalid packet count `{n}`"))?,
            None => 16,
        };
        let known = match parts.next() {
            Some(k) => k.parse()?,
            None => KnownFields::empty(),
        };
        Ok(AttackerConfig::new(strategy, packets).with_known(known))
    }
}

impl fmt::Display for AttackerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.strategy.as_str(), self.packets_per_window)?;
        if !self.known_fields.is_empty() {
            let names: Vec<&str> = self
                .known_fields
                .iter_names()
                .map(|(n, _)| match n {
                    "TXID" => "txid",
                    "PORT" => "port",
                    "SRC_IP" => "src_ip",
                    "DST_IP" => "dst_ip",
                    _ => "case",
                })
                .collect();
            write!(f, ":{}", names.join(","))?;
        }
        Ok(())
    }
}

/// `<8 random digits>.<zone>`.
pub fn kaminsky_query_name<R: Rng + ?Sized>(zone: &DnsName, rng: &mut R) -> DnsName {
    let digits: Vec<u8> = (0..8).map(|_| rng.random_range(b'0'..=b'9')).collect();
    zone.prepend(digits).expect("eight-byte label under a valid zone")
}

/// Per-field value or search space for the current window.
#[derive(Debug, Clone)]
pub enum Field<T> {
    Known(T),
    Unknown(Vec<T>),
}

/// Everything the attacker may use to build spoofs for one window. Built by the
/// harness from public facts about the defense plus the granted fields; it never
/// carries a secret the attacker has not been granted.
#[derive(Debug, Clone)]
pub struct Knowledge {
    pub txid: Option<u16>,
    pub txid_bits: u8,
    pub port: Option<u16>,
    pub port_range: PortRange,
    pub src_ip: Field<IpAddr>,
    pub dst: Field<SocketAddr>,
    /// The exact cased name, when known.
    pub cased_name: Option<DnsName>,
    pub name: DnsName,
    pub qtype: RecordType,
}

/// Generates the forged responses of one window.
pub struct Attacker {
    pub cfg: AttackerConfig,
    pub zone: DnsName,
}

impl Attacker {
    pub fn new(cfg: AttackerConfig, zone: DnsName) -> Self {
        Attacker { cfg, zone }
    }

    /// `(our claimed source, victim address, forged message)` per spoof.
    pub fn window<R: Rng + ?Sized>(
        &self,
        k: &Knowledge,
        rng: &mut R,
    ) -> Vec<(SocketAddr, SocketAddr, DnsMessage)> {
        let n = self.cfg.packets_per_window as usize;
        let space = 1u32 << k.txid_bits.clamp(1, 16);
        let start = rng.random_range(0..space);
        (0..n)
            .map(|i| {
                let txid = match (k.txid, self.cfg.strategy) {
                    (Some(t), _) => t,
                    (None, Strategy::BruteForceTxid) => ((start + i as u32) % space) as u16,
                    (None, _) => rng.random_range(0..space) as u16,
                };
                let port = k
                    .port
                    .unwrap_or_else(|| rng.random_range(k.port_range.lo..=k.port_range.hi));
                let ip = pick(&k.src_ip, rng);
                let claimed = pick(&k.dst, rng);
                let qname = match &k.cased_name {
                    Some(n) => n.clone(),
                    None => apply_0x20(&k.name, rng).0,
                };
                let msg = self.forge(txid, Question::new(qname, k.qtype));
                (claimed, SocketAddr::new(ip, port), msg)
            })
            .collect()
    }

    fn forge(&self, txid: u16, q: Question) -> DnsMessage {
        let query = DnsMessage::query(txid, q.clone());
        let mut resp = DnsMessage::response_to(&query, Rcode::NOERROR);
        resp.header.aa = true;
        let ns = self.zone.prepend("ns").unwrap_or_else(|_| self.zone.clone());
        match self.cfg.strategy {
            Strategy::Kaminsky => {
                resp.answers.push(Record::a(q.name.to_lowercase(), POISON_TTL, POISON_ADDR));
                resp.authority.push(Record::ns(self.zone.clone(), POISON_TTL, ns.clone()));
                resp.additional.push(Record::a(ns, POISON_TTL, POISON_ADDR));
            }
            _ => resp.answers.push(Record::a(q.name.to_lowercase(), POISON_TTL, POISON_ADDR)),
        }
        resp
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(f: &Field<T>, rng: &mut R) -> T {
    match f {
        Field::Known(v) => *v,
        Field::Unknown(vs) => *vs.choose(rng).expect("nonempty search space"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::count_letters;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zone() -> DnsName {
        "google.com".parse().unwrap()
    }

    #[test]
    fn kaminsky_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = kaminsky_query_name(&zone(), &mut rng);
        let b = kaminsky_query_name(&zone(), &mut rng);
        assert_ne!(a, b);
        let first = a.labels().next().unwrap();
        assert_eq!(first.len(), 8);
        assert!(first.iter().all(u8::is_ascii_digit));
        assert!(a.is_within(&zone()) && a.label_count() == 3);
        assert_eq!(count_letters(&a), 9);
    }

    #[test]
    fn parse_and_display() {
        let a: AttackerConfig = "blind-flood:16:txid,port".parse().unwrap();
        assert_eq!(a.strategy, Strategy::BlindFlood);
        assert_eq!(a.packets_per_window, 16);
        assert_eq!(a.known_fields, KnownFields::TXID | KnownFields::PORT);
        assert_eq!(a.to_string(), "blind-flood:16:txid,port");
        assert_eq!("kaminsky".parse::<AttackerConfig>().unwrap().packets_per_window, 16);
        assert!("teleport:3".parse::<AttackerConfig>().is_err());
        assert!("blind:x".parse::<AttackerConfig>().is_err());
    }

    #[test]
    fn brute_force_txids_are_distinct() {
        let att = Attacker::new(AttackerConfig::new(Strategy::BruteForceTxid, 256), zone());
        let k = Knowledge {
            txid: None,
            txid_bits: 8,
            port: Some(53),
            port_range: PortRange::default(),
            src_ip: Field::Known(IpAddr::from([10, 0, 0, 1])),
            dst: Field::Known("192.0.2.1:53".parse().unwrap()),
            cased_name: None,
            name: "www.google.com".parse().unwrap(),
            qtype: RecordType::A,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ids: Vec<u16> = att.window(&k, &mut rng).iter().map(|s| s.2.header.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 256);
    }
}
