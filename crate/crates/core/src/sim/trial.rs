use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attacker::{kaminsky_query_name, Attacker, AttackerConfig, Field, Knowledge, KnownFields, Strategy};
use super::authority::AuthoritySim;
use super::nat::{Nat, NatMode};
use super::network::{EventQueue, NetConfig};
use crate::entropy::EntropyConfig;
use crate::resolver::{Answer, Datagram, Resolver, ResolverConfig, ValidationPolicy};
use crate::sandwich::SandwichConfig;
use crate::time::Timestamp;
use crate::wire::{decode_message, encode_message, DnsName, QueryKey, Question, RecordType};

/// Set on the provenance tag of every attacker datagram.
pub const FORGED_TAG: u64 = 1 << 63;
pub const PUBLIC_IP: Ipv4Addr = Ipv4Addr::new(203, 0, 113, 1);
/// Simulated time after which a trial is abandoned.
const HORIZON: Duration = Duration::from_secs(120);

/// Which defenses the simulated resolver runs with.
#[derive(Debug, Clone, PartialEq)]
pub struct Defense {
    pub label: String,
    pub randomize_txid: bool,
    pub spr: bool,
    pub case_0x20: bool,
    pub pool: usize,
    pub dst: usize,
    pub sandwich: bool,
    pub nat: Option<NatMode>,
    pub policy: ValidationPolicy,
}

impl Defense {
    fn empty(label: &str) -> Self {
        Defense {
            label: label.to_string(),
            randomize_txid: false,
            spr: false,
            case_0x20: false,
            pool: 1,
            dst: 1,
            sandwich: false,
            nat: None,
            policy: ValidationPolicy::Full,
        }
    }

    /// Internal source addresses of the resolver.
    pub fn pool_addrs(&self) -> Vec<IpAddr> {
        (0..self.pool)
            .map(|i| IpAddr::V4(Ipv4Addr::new(10, 0, (i / 250) as u8, (i % 250) as u8 + 1)))
            .collect()
    }

    pub fn authority_addrs(&self) -> Vec<SocketAddr> {
        (0..self.dst)
            .map(|i| SocketAddr::new(IpAddr::V4(Ipv4Addr::new(192, 0, 2, i as u8 + 1)), 53))
            .collect()
    }

    pub fn resolver_config(&self, txid_bits: u8, seed: u64) -> ResolverConfig {
        ResolverConfig {
            entropy: EntropyConfig {
                randomize_txid: self.randomize_txid,
                txid_bits,
                spr_enabled: self.spr,
                encode_0x20: self.case_0x20,
                ip_pool: self.pool_addrs(),
                dst_candidates: self.authority_addrs(),
                rng_seed: seed,
                ..EntropyConfig::default()
            },
            sandwich: SandwichConfig {
                enabled: self.sandwich,
                ..SandwichConfig::default()
            },
            policy: self.policy,
            record_provenance: true,
            ..ResolverConfig::default()
        }
    }
}

/// Parses `+`-joined mechanisms (`txid`, `spr`, `0x20`, `pool=N`, `dst=N`,
/// `sandwich`, `nat=MODE`, `accept-first`) or a preset name: `txid-only`, `spr`,
/// `spr+0x20`, `full`, `full+sandwich`.
impl FromStr for Defense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let mut d = Defense::empty(s);
        for tok in s.split('+').map(str::trim) {
            match tok {
                "txid" | "txid-only" => d.randomize_txid = true,
                "spr" => {
                    d.randomize_txid = true;
                    d.spr = true;
                }
                "0x20" => d.case_0x20 = true,
                "full" => {
                    d.randomize_txid = true;
                    d.spr = true;
                    d.case_0x20 = true;
                    d.pool = 2048;
                }
                "sandwich" => d.sandwich = true,
                "accept-first" => d.policy = ValidationPolicy::AcceptFirst,
                "short" => {
                    return Err(
                        "the short-query extension needs a delegation upstream, which the simulator does not model"
                            .to_string(),
                    )
                }
                _ => {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| format!("unknown defense mechanism `{tok}`"))?;
                    match k {
                        "pool" | "dst" => {
                            let n: usize = v.parse().map_err(|_| format!("invalid count `{v}`"))?;
                            let max = if k == "pool" { 62_500 } else { 250 };
                            if n == 0 || n > max {
                                return Err(format!("`{k}` must be within 1..={max}"));
                            }
                            if k == "pool" {
                                d.pool = n;
                            } else {
                                d.dst = n;
                            }
                        }
                        "nat" => d.nat = Some(v.parse()?),
                        _ => return Err(format!("unknown defense mechanism `{tok}`")),
                    }
                }
            }
        }
        Ok(d)
    }
}

impl fmt::Display for Defense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Everything about one simulated attack except the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub defense: Defense,
    pub attacker: Option<AttackerConfig>,
    /// Transaction-ID width; 16 is deployment scale.
    pub txid_bits: u8,
    pub net: NetConfig,
    /// NAT used when the defense does not name one.
    pub nat: NatMode,
    /// Name the victim client resolves (blind attacks).
    pub target: DnsName,
    pub target_zone: DnsName,
    /// Attack windows of one RTT each, starting with the victim's query.
    pub windows: u32,
    pub wildcard: bool,
    pub case_preserving: bool,
}

impl Scenario {
    pub fn new(defense: Defense, attacker: Option<AttackerConfig>) -> Self {
        let zone: DnsName = "google.com".parse().expect("valid");
        Scenario {
            defense,
            attacker,
            txid_bits: 8,
            net: NetConfig::default(),
            nat: NatMode::Passthrough,
            target: zone.prepend("www").expect("valid"),
            target_zone: zone,
            windows: 1,
            wildcard: false,
            case_preserving: true,
        }
    }

    fn nat_mode(&self) -> NatMode {
        self.defense.nat.unwrap_or(self.nat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub poisoned: bool,
    /// First cache key written from a forged datagram.
    pub poisoned_key: Option<QueryKey>,
    pub spoofed_packets_sent: u64,
    pub wall_events: u64,
    /// Every client query completed with the authority's true answer.
    pub resolved_correctly: bool,
    /// Some client query ended in failure rather than an answer.
    pub failed_closed: bool,
    pub sandwich_activations: u64,
}

enum Ev {
    Client(Question),
    Window(u32),
    ToAuthority {
        from: SocketAddr,
        to: SocketAddr,
        payload: Vec<u8>,
    },
    ToResolver {
        local: SocketAddr,
        remote: SocketAddr,
        payload: Vec<u8>,
        tag: u64,
    },
}

/// What went over the wire for the attacker's current target name.
struct Seen {
    txid: u16,
    src: SocketAddr,
    dst: SocketAddr,
    qname: DnsName,
}

/// Independent sub-seed `k` of `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one victim resolution (or Kaminsky query stream) under attack. Fully
/// determined by `(scenario, seed)`.
pub fn run_trial(sc: &Scenario, seed: u64) -> AttackOutcome {
    let cfg = sc.defense.resolver_config(sc.txid_bits, derive_seed(seed, 1));
    let mut resolver = Resolver::new(cfg).expect("simulator builds valid resolver configs");
    let mut net_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut att_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));

    let mut authority = AuthoritySim::example(sc.target_zone.clone());
    authority.wildcard = sc.wildcard;
    authority.case_preserving = sc.case_preserving;
    let authorities = sc.defense.authority_addrs();
    let pool = sc.defense.pool_addrs();
    let nat_mode = sc.nat_mode();
    let mut nat = Nat::new(nat_mode, PUBLIC_IP.into(), net_rng.random_range(1024..60_000));
    let attacker = sc
        .attacker
        .clone()
        .map(|a| Attacker::new(a, sc.target_zone.clone()));
    let rtt_us = sc.net.rtt.as_micros().max(2) as u64;

    let mut queue = EventQueue::new();
    let mut attack_name = sc.target.clone();
    let kaminsky = matches!(&attacker, Some(a) if a.cfg.strategy == Strategy::Kaminsky);
    if !kaminsky {
        queue.push(Timestamp::ZERO, Ev::Client(Question::new(sc.target.clone(), RecordType::A)));
    }
    if attacker.is_some() {
        for k in 0..sc.windows {
            queue.push(Timestamp::from_micros(k as u64 * rtt_us), Ev::Window(k));
        }
    }

    let mut seen: Option<Seen> = None;
    let mut next_tag = 0u64;
    let mut spoofed = 0u64;
    let mut events = 0u64;
    let mut asked = 0u32;
    let mut correct = 0u32;
    let mut failed = false;
    let horizon = Timestamp::ZERO + HORIZON;

    loop {
        let timer = resolver.next_timeout();
        let now = match (timer, queue.peek_time()) {
            (Some(t), Some(e)) if t <= e => {
                resolver.handle_timeout(t);
                t
            }
            (Some(t), None) => {
                resolver.handle_timeout(t);
                t
            }
            (_, Some(_)) => {
                let (now, ev) = queue.pop().expect("peeked");
                events += 1;
                match ev {
                    Ev::Client(q) => {
                        asked += 1;
                        if let crate::resolver::Lookup::Cached(a) = resolver.resolve(q.clone(), 0, now) {
                            if is_truth(&authority, &q, &a) {
                                correct += 1;
                            }
                        }
                    }
                    Ev::Window(k) => {
                        let att = attacker.as_ref().expect("windows only with an attacker");
                        if kaminsky {
                            attack_name = kaminsky_query_name(&sc.target_zone, &mut att_rng);
                            seen = None;
                            asked += 1;
                            let q = Question::new(attack_name.clone(), RecordType::A);
                            if let crate::resolver::Lookup::Cached(a) = resolver.resolve(q.clone(), u64::from(k), now) {
                                if is_truth(&authority, &q, &a) {
                                    correct += 1;
                                }
                            }
                            flush(&mut resolver, &mut nat, &mut queue, &sc.net, &mut net_rng, now, &attack_name, &mut seen);
                        }
                        let knowledge = knowledge_for(sc, nat_mode, &pool, &authorities, &attack_name, seen.as_ref(), &att.cfg);
                        for (claimed, victim, msg) in att.window(&knowledge, &mut att_rng) {
                            let Ok(payload) = encode_message(&msg) else { continue };
                            spoofed += 1;
                            let at = now + Duration::from_micros(att_rng.random_range(1..rtt_us));
                            queue.push(
                                at,
                                Ev::ToResolver {
                                    local: victim,
                                    remote: claimed,
                                    payload,
                                    tag: FORGED_TAG | spoofed,
                                },
                            );
                        }
                    }
                    Ev::ToAuthority { from, to, payload } => {
                        if authorities.contains(&to) {
                            let resp = decode_message(&payload)
                                .ok()
                                .and_then(|q| authority.respond(&q))
                                .and_then(|r| encode_message(&r).ok());
                            if let (Some(payload), Some(d)) = (resp, sc.net.one_way(&mut net_rng)) {
                                next_tag += 1;
                                queue.push(
                                    now + d,
                                    Ev::ToResolver {
                                        local: from,
                                        remote: to,
                                        payload,
                                        tag: next_tag,
                                    },
                                );
                            }
                        }
                    }
                    Ev::ToResolver {
                        local,
                        remote,
                        payload,
                        tag,
                    } => {
                        if let Some(internal) = nat.inbound(local) {
                            if resolver.is_listening(internal) {
                                resolver.handle_datagram(
                                    Datagram {
                                        local: internal,
                                        remote,
                                        payload,
                                        tag,
                                    },
                                    now,
                                );
                            }
                        }
                    }
                }
                now
            }
            (None, None) => break,
        };
        if now >= horizon {
            break;
        }
        flush(&mut resolver, &mut nat, &mut queue, &sc.net, &mut net_rng, now, &attack_name, &mut seen);
        while let Some(c) = resolver.poll_completion() {
            match &c.result {
                Ok(a) if is_truth(&authority, &c.question, a) => correct += 1,
                Ok(_) => {}
                Err(_) => failed = true,
            }
        }
    }

    let forged = resolver
        .cache()
        .write_log()
        .iter()
        .find(|w| w.provenance.packet_tag & FORGED_TAG != 0);
    AttackOutcome {
        poisoned: forged.is_some(),
        poisoned_key: forged.map(|w| w.key.clone()),
        spoofed_packets_sent: spoofed,
        wall_events: events,
        resolved_correctly: asked > 0 && correct == asked,
        failed_closed: failed,
        sandwich_activations: resolver.stats().sandwich_activations,
    }
}

#[allow(clippy::too_many_arguments)]
fn flush(
    resolver: &mut Resolver,
    nat: &mut Nat,
    queue: &mut EventQueue<Ev>,
    net: &NetConfig,
    rng: &mut ChaCha8Rng,
    now: Timestamp,
    attack_name: &DnsName,
    seen: &mut Option<Seen>,
) {
    while let Some(t) = resolver.poll_transmit() {
        let src = nat.outbound(t.local);
        if let Some(q) = decode_message(&t.payload).ok().and_then(|m| m.question.map(|q| (m.header.id, q))) {
            // Only the original name counts: the attacker cannot know guard names.
            if q.1.name.eq_ignore_case(attack_name) {
                *seen = Some(Seen {
                    txid: q.0,
                    src,
                    dst: t.remote,
                    qname: q.1.name,
                });
            }
        }
        if let Some(d) = net.one_way(rng) {
            queue.push(
                now + d,
                Ev::ToAuthority {
                    from: src,
                    to: t.remote,
                    payload: t.payload,
                },
            );
        }
    }
}

/// Builds the attacker's view: public facts about the defense, fields leaked by
/// the NAT, and fields granted outright. Ungranted secrets stay unknown.
fn knowledge_for(
    sc: &Scenario,
    nat: NatMode,
    pool: &[IpAddr],
    authorities: &[SocketAddr],
    name: &DnsName,
    seen: Option<&Seen>,
    att: &AttackerConfig,
) -> Knowledge {
    let d = &sc.defense;
    let grant = att.known_fields;
    let cfg = EntropyConfig::default();
    let txid_known = grant.contains(KnownFields::TXID) || !d.randomize_txid;
    let port_known =
        grant.contains(KnownFields::PORT) || !d.spr || nat == NatMode::SequentialPorts;
    let ip_known =
        grant.contains(KnownFields::SRC_IP) || pool.len() == 1 || nat == NatMode::SingleIpMasquerade;
    let dst_known = grant.contains(KnownFields::DST_IP) || authorities.len() == 1;
    let case_known = grant.contains(KnownFields::CASE) || !d.case_0x20;

    Knowledge {
        txid: seen.filter(|_| txid_known).map(|s| s.txid),
        txid_bits: sc.txid_bits,
        port: if port_known {
            Some(seen.map_or(cfg.fixed_port, |s| s.src.port()))
        } else {
            None
        },
        port_range: cfg.port_range,
        src_ip: match seen {
            Some(s) if ip_known => Field::Known(s.src.ip()),
            _ if nat == NatMode::SingleIpMasquerade => Field::Known(PUBLIC_IP.into()),
            _ => Field::Unknown(pool.to_vec()),
        },
        dst: match seen {
            Some(s) if dst_known => Field::Known(s.dst),
            _ => Field::Unknown(authorities.to_vec()),
        },
        cased_name: if case_known {
            Some(seen.map_or_else(|| name.clone(), |s| s.qname.clone()))
        } else {
            None
        },
        name: name.clone(),
        qtype: RecordType::A,
    }
}

fn is_truth(authority: &AuthoritySim, q: &Question, a: &Answer) -> bool {
    let (rcode, truth) = authority.truth(q);
    a.rcode == rcode
        && a.answers.len() == truth.len()
        && truth.iter().all(|t| a.answers.iter().any(|r| r.same_data(t)))
}
