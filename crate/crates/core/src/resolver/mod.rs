//! Sans-IO forwarding resolver.
//!
//! [`Resolver`] owns the cache and every in-flight resolution but performs no I/O.
//! Callers feed it client questions, received datagrams and the passage of time, and
//! drain the datagrams it wants sent and the resolutions it has finished:
//!
//! ```text
//! resolve() / handle_datagram() / handle_timeout()
//!         -> poll_transmit()*  poll_completion()*  next_timeout()
//! ```
//!
//! The simulator and the UDP gateway both drive this same state machine, so the
//! validation path exercised in simulation is the one deployed.

mod cache;

pub use cache::{
    Cache, CacheEntry, CacheWrite, CachedAnswer, Provenance, DEFAULT_CAPACITY, DEFAULT_MAX_TTL,
};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::entropy::{draw_tuple, extend_short_query, query_rng, EntropyConfig, EntropyError};
use crate::sandwich::{
    build_sandwich, classify_response, detect_forgery, zone_of, Classification, MismatchSet,
    Mode, PendingQuery, ResponseMeta, RestartReason, Role, SandwichConfig, SandwichError,
    SandwichSession, SandwichStep,
};
use crate::time::Timestamp;
use crate::wire::{
    decode_message, encode_message, DnsMessage, DnsName, QueryKey, Question, RData, Rcode, Record,
    RecordType,
};

pub const DEFAULT_NEGATIVE_TTL_CAP: u32 = 300;

/// How strictly responses are checked in Normal mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationPolicy {
    /// Every field of the validation tuple must match.
    #[default]
    Full,
    /// Accept the first response for the right question, ignoring txid and source.
    /// Only useful as a weak baseline in experiments.
    AcceptFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverConfig {
    pub entropy: EntropyConfig,
    pub sandwich: SandwichConfig,
    pub policy: ValidationPolicy,
    pub upstream_timeout: Duration,
    pub cache_capacity: usize,
    pub max_ttl: u32,
    pub negative_ttl_cap: u32,
    /// Upstreams that answer delegation queries, for which the short-query
    /// extension is safe to apply.
    pub delegation_upstreams: Vec<SocketAddr>,
    /// Keep a provenance log of every cache write.
    pub record_provenance: bool,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            entropy: EntropyConfig::default(),
            sandwich: SandwichConfig::default(),
            policy: ValidationPolicy::Full,
            upstream_timeout: Duration::from_secs(2),
            cache_capacity: DEFAULT_CAPACITY,
            max_ttl: DEFAULT_MAX_TTL,
            negative_ttl_cap: DEFAULT_NEGATIVE_TTL_CAP,
            delegation_upstreams: Vec::new(),
            record_provenance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolveError {
    #[error("upstream did not answer in time")]
    UpstreamTimeout,
    #[error("sandwich retries exhausted")]
    RetriesExhausted,
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

impl From<SandwichError> for ResolveError {
    fn from(e: SandwichError) -> Self {
        match e {
            SandwichError::RetriesExhausted => ResolveError::RetriesExhausted,
            SandwichError::Entropy(e) => ResolveError::Entropy(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerSource {
    Cache,
    Upstream(Mode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub rcode: Rcode,
    pub answers: Vec<Record>,
    pub authority: Vec<Record>,
    pub source: AnswerSource,
}

impl Answer {
    fn from_cached(c: CachedAnswer) -> Self {
        Answer {
            rcode: c.rcode,
            answers: c.answers,
            authority: c.authority,
            source: AnswerSource::Cache,
        }
    }
}

pub type ResolutionId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Cached(Answer),
    /// Joined or started an upstream resolution; its [`Completion`] will list the waiter.
    Pending(ResolutionId),
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub id: ResolutionId,
    pub question: Question,
    /// Waiter tokens passed to [`Resolver::resolve`], in arrival order.
    pub waiters: Vec<u64>,
    pub result: Result<Answer, ResolveError>,
}

/// A datagram the resolver wants sent from `local` to `remote`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmit {
    pub local: SocketAddr,
    pub remote: SocketAddr,
    pub payload: Vec<u8>,
}

/// A datagram received on one of our upstream sockets.
#[derive(Debug, Clone)]
pub struct Datagram {
    /// Our address it arrived on.
    pub local: SocketAddr,
    /// Its (claimed) source.
    pub remote: SocketAddr,
    pub payload: Vec<u8>,
    /// Opaque tag propagated into cache provenance.
    pub tag: u64,
}

/// Monotone counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResolverStats {
    pub lookups: u64,
    pub cache_hits: u64,
    pub coalesced: u64,
    pub upstream_queries: u64,
    pub responses: u64,
    pub malformed_responses: u64,
    pub stray_responses: u64,
    pub mismatched_responses: u64,
    pub sandwich_activations: u64,
    pub sandwich_restarts: u64,
    pub anomalies: u64,
    pub accepted: u64,
    pub failures: u64,
}

struct Held {
    response: DnsMessage,
    tag: u64,
    until: Timestamp,
}

// One live resolution per key, so the variant size gap costs little.
#[allow(clippy::large_enum_variant)]
enum State {
    Normal {
        pending: PendingQuery,
        held: Option<Held>,
        /// The query went out under the short-query extension prefix.
        extended: bool,
    },
    Sandwich(SandwichState),
}

struct SandwichState {
    session: SandwichSession,
    /// Datagram tag of each validated sub-query response, indexed like `SEND_ORDER`.
    tags: [Option<u64>; 3],
    /// Accepted mid answer waiting out the settle period.
    held: Option<Held>,
}

impl SandwichState {
    fn new(session: SandwichSession) -> Self {
        SandwichState {
            session,
            tags: [None; 3],
            held: None,
        }
    }
}

struct Resolution {
    question: Question,
    key: QueryKey,
    waiters: Vec<u64>,
    rng: ChaCha8Rng,
    state: State,
}

#[derive(Clone, Copy)]
enum Target {
    Normal,
    Sub(Role),
}

pub struct Resolver {
    cfg: ResolverConfig,
    cache: Cache,
    resolutions: BTreeMap<ResolutionId, Resolution>,
    in_flight: HashMap<QueryKey, ResolutionId>,
    transmits: VecDeque<Transmit>,
    completions: VecDeque<Completion>,
    next_id: ResolutionId,
    next_session: u64,
    next_txid: u16,
    stats: ResolverStats,
}

impl Resolver {
    pub fn new(cfg: ResolverConfig) -> Result<Self, EntropyError> {
        cfg.entropy.validate()?;
        let mut cache = Cache::new(cfg.cache_capacity, cfg.max_ttl);
        if cfg.record_provenance {
            cache = cache.with_write_log();
        }
        Ok(Resolver {
            cfg,
            cache,
            resolutions: BTreeMap::new(),
            in_flight: HashMap::new(),
            transmits: VecDeque::new(),
            completions: VecDeque::new(),
            next_id: 0,
            next_session: 0,
            next_txid: 0,
            stats: ResolverStats::default(),
        })
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Cache {
        &mut self.cache
    }

    pub fn stats(&self) -> ResolverStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.resolutions.len()
    }

    /// Answers from cache, joins an in-flight resolution for the same question, or
    /// starts a new one.
    pub fn resolve(&mut self, question: Question, waiter: u64, now: Timestamp) -> Lookup {
        self.stats.lookups += 1;
        let key = question.key();
        if let Some(hit) = self.cache.get(&key, now) {
            self.stats.cache_hits += 1;
            return Lookup::Cached(Answer::from_cached(hit));
        }
        if let Some(&id) = self.in_flight.get(&key) {
            self.stats.coalesced += 1;
            self.resolutions
                .get_mut(&id)
                .expect("in-flight index is consistent")
                .waiters
                .push(waiter);
            return Lookup::Pending(id);
        }

        let id = self.next_id;
        self.next_id += 1;
        let mut rng = query_rng(self.cfg.entropy.rng_seed, id);
        match self.start_normal(&question, &key, &mut rng, now) {
            Ok(state) => {
                self.in_flight.insert(key.clone(), id);
                self.resolutions.insert(
                    id,
                    Resolution {
                        question,
                        key,
                        waiters: vec![waiter],
                        rng,
                        state,
                    },
                );
            }
            Err(e) => {
                self.stats.failures += 1;
                self.completions.push_back(Completion {
                    id,
                    question,
                    waiters: vec![waiter],
                    result: Err(e),
                });
            }
        }
        Lookup::Pending(id)
    }

    fn start_normal(
        &mut self,
        question: &Question,
        key: &QueryKey,
        rng: &mut ChaCha8Rng,
        now: Timestamp,
    ) -> Result<State, ResolveError> {
        let txid = self.next_txid;
        self.next_txid = self.next_txid.wrapping_add(1);
        let (mut tuple, _) = draw_tuple(
            &self.cfg.entropy,
            &question.name,
            question.qtype,
            question.qclass,
            txid,
            rng,
        )?;
        let mut extended = false;
        if self.extension_applies(question, tuple.dst) {
            let name = extend_short_query(&question.name, &self.cfg.entropy)?;
            if name.label_count() != question.name.label_count() {
                let (redrawn, _) = draw_tuple(
                    &self.cfg.entropy,
                    &name,
                    question.qtype,
                    question.qclass,
                    tuple.txid,
                    rng,
                )?;
                tuple = redrawn;
                extended = true;
            }
        }
        let pending = PendingQuery::new(key.clone(), tuple, now + self.cfg.upstream_timeout);
        self.send(&pending.tuple.src, &pending.tuple.dst, &query_for(&pending.tuple));
        Ok(State::Normal {
            pending,
            held: None,
            extended,
        })
    }

    fn extension_applies(&self, question: &Question, upstream: SocketAddr) -> bool {
        self.cfg.entropy.short_query_extension
            && matches!(question.qtype, RecordType::A | RecordType::NS)
            && self.cfg.delegation_upstreams.contains(&upstream)
    }

    fn send(&mut self, local: &SocketAddr, remote: &SocketAddr, msg: &DnsMessage) {
        match encode_message(msg) {
            Ok(payload) => {
                self.stats.upstream_queries += 1;
                self.transmits.push_back(Transmit {
                    local: *local,
                    remote: *remote,
                    payload,
                });
            }
            // Names were validated on construction, so this is unreachable in practice.
            Err(e) => warn!(error = %e, "dropping unencodable query"),
        }
    }

    pub fn handle_datagram(&mut self, dgram: Datagram, now: Timestamp) {
        self.stats.responses += 1;
        let msg = match decode_message(&dgram.payload) {
            Ok(m) => m,
            Err(e) => {
                self.stats.malformed_responses += 1;
                debug!(error = %e, from = %dgram.remote, "undecodable upstream datagram");
                return;
            }
        };
        let meta = ResponseMeta {
            src: dgram.remote,
            dst: dgram.local,
        };

        let Some((id, target, class)) = self.best_candidate(&msg, &meta) else {
            self.stats.stray_responses += 1;
            return;
        };
        match target {
            Target::Normal => self.on_normal_response(id, class, msg, dgram.tag, now),
            Target::Sub(role) => self.on_sandwich_response(id, role, class, msg, dgram.tag, now),
        }
    }

    fn best_candidate(
        &self,
        msg: &DnsMessage,
        meta: &ResponseMeta,
    ) -> Option<(ResolutionId, Target, Classification)> {
        let misses = |c: &Classification| match c {
            Classification::Match => 0,
            Classification::Mismatch(m) => m.bits().count_ones(),
        };
        let mut best: Option<(ResolutionId, Target, Classification)> = None;
        for (&id, res) in &self.resolutions {
            let candidate = match &res.state {
                State::Normal { pending, .. } if pending.tuple.src == meta.dst => {
                    let case_exact = self.cfg.entropy.encode_0x20;
                    let mut class = classify_response(&pending.tuple, msg, meta, case_exact);
                    if self.cfg.policy == ValidationPolicy::AcceptFirst {
                        if let Classification::Mismatch(m) = class {
                            let lax = MismatchSet::TXID | MismatchSet::SOURCE | MismatchSet::CASE;
                            if lax.contains(m) {
                                class = Classification::Match;
                            }
                        }
                    }
                    Some((Target::Normal, class))
                }
                State::Normal { .. } => None,
                State::Sandwich(s) => s
                    .session
                    .best_match(msg, meta)
                    .map(|(role, class)| (Target::Sub(role), class)),
            };
            if let Some((target, class)) = candidate {
                if best.as_ref().is_none_or(|(_, _, b)| misses(&class) < misses(b)) {
                    best = Some((id, target, class));
                }
            }
        }
        best
    }

    fn on_normal_response(
        &mut self,
        id: ResolutionId,
        class: Classification,
        msg: DnsMessage,
        tag: u64,
        now: Timestamp,
    ) {
        let sandwich_on =
            self.cfg.sandwich.enabled && self.cfg.policy == ValidationPolicy::Full;
        let settle = self.cfg.sandwich.settle;
        let threshold = self.cfg.sandwich.detection_threshold;
        let res = self.resolutions.get_mut(&id).expect("candidate exists");
        let State::Normal { pending, held, .. } = &mut res.state else {
            unreachable!("normal target");
        };

        match class {
            Classification::Match => {
                if !sandwich_on || settle.is_zero() {
                    self.accept(id, msg, tag, Mode::Normal, now);
                    return;
                }
                match held {
                    None => {
                        *held = Some(Held {
                            response: msg,
                            tag,
                            until: now + settle,
                        });
                    }
                    Some(h) if h.response.same_content(&msg) => {}
                    Some(_) => {
                        // Two tuple-valid answers that disagree: one of them is forged.
                        self.stats.mismatched_responses += 1;
                        pending.mismatch_count += 1;
                        info!(event = "detect", resolution = id, key = %res.key, reason = "conflicting answers");
                        self.escalate(id, now);
                    }
                }
            }
            Classification::Mismatch(miss) => {
                self.stats.mismatched_responses += 1;
                if sandwich_on && detect_forgery(pending, miss, threshold) {
                    info!(
                        event = "detect",
                        resolution = id,
                        key = %res.key,
                        mismatches = pending.mismatch_count,
                        fields = ?miss,
                    );
                    self.escalate(id, now);
                }
            }
        }
    }

    fn escalate(&mut self, id: ResolutionId, now: Timestamp) {
        self.stats.sandwich_activations += 1;
        let session_id = self.next_session;
        self.next_session += 1;
        let res = self.resolutions.get_mut(&id).expect("escalating live resolution");
        if let State::Normal { pending, .. } = &mut res.state {
            pending.escalate();
        }
        match build_sandwich(
            &res.question,
            &self.cfg.entropy,
            &self.cfg.sandwich,
            &mut res.rng,
            now,
            session_id,
        ) {
            Ok(session) => {
                info!(event = "build", resolution = id, session = session_id, key = %res.key, zone = %session.zone);
                res.state = State::Sandwich(SandwichState::new(session));
                self.send_session(id);
            }
            Err(e) => self.fail(id, e.into()),
        }
    }

    fn send_session(&mut self, id: ResolutionId) {
        let res = &self.resolutions[&id];
        let State::Sandwich(s) = &res.state else {
            return;
        };
        let out: Vec<_> = s
            .session
            .subs()
            .iter()
            .map(|sub| (sub.tuple.src, sub.tuple.dst, sub.message()))
            .collect();
        for (local, remote, msg) in out {
            self.send(&local, &remote, &msg);
        }
    }

    fn on_sandwich_response(
        &mut self,
        id: ResolutionId,
        role: Role,
        class: Classification,
        msg: DnsMessage,
        tag: u64,
        now: Timestamp,
    ) {
        if !class.is_match() {
            self.stats.mismatched_responses += 1;
        }
        let settle = self.cfg.sandwich.settle;
        let res = self.resolutions.get_mut(&id).expect("candidate exists");
        let State::Sandwich(s) = &mut res.state else {
            unreachable!("sandwich target");
        };
        let step = s.session.apply(role, class, &msg);
        if class.is_match() && !matches!(step, SandwichStep::Restart(_)) {
            s.tags[role as usize].get_or_insert(tag);
        }
        match step {
            SandwichStep::Continue => {}
            SandwichStep::Accept(mid) => {
                let mid_tag = s.tags[Role::Mid as usize].unwrap_or(tag);
                info!(event = "accept", resolution = id, session = s.session.id, key = %res.key);
                if settle.is_zero() {
                    self.accept(id, mid, mid_tag, Mode::Sandwich, now);
                } else {
                    // Late duplicates of any sub-query can still expose a forgery.
                    s.held = Some(Held {
                        response: mid,
                        tag: mid_tag,
                        until: now + settle,
                    });
                }
            }
            SandwichStep::Restart(reason) => self.restart(id, reason, now),
        }
    }

    fn restart(&mut self, id: ResolutionId, reason: RestartReason, now: Timestamp) {
        self.stats.sandwich_restarts += 1;
        let session_id = self.next_session;
        self.next_session += 1;
        let res = self.resolutions.get_mut(&id).expect("restarting live resolution");
        let State::Sandwich(st) = &res.state else {
            return;
        };
        let s = &st.session;
        if matches!(reason, RestartReason::GuardResolved(_)) {
            self.stats.anomalies += 1;
            warn!(event = "anomaly", resolution = id, session = s.id, key = %res.key, ?reason, "guard name resolved");
        }
        info!(event = "restart", resolution = id, session = s.id, next_session = session_id, ?reason, retries_left = s.retries_left);
        match s.restart(&self.cfg.entropy, &self.cfg.sandwich, &mut res.rng, now, session_id) {
            Ok(next) => {
                res.state = State::Sandwich(SandwichState::new(next));
                self.send_session(id);
            }
            Err(e) => self.fail(id, e.into()),
        }
    }

    /// Caches what `response` legitimately carries and completes the resolution.
    fn accept(
        &mut self,
        id: ResolutionId,
        response: DnsMessage,
        tag: u64,
        mode: Mode,
        now: Timestamp,
    ) {
        let res = self.resolutions.remove(&id).expect("accepting live resolution");
        self.in_flight.remove(&res.key);
        self.stats.accepted += 1;
        let extended = matches!(res.state, State::Normal { extended: true, .. });
        let zone = zone_of(&res.question.name, &self.cfg.sandwich.zone_cuts);
        let provenance = Provenance {
            mode,
            packet_tag: tag,
            resolution: id,
        };

        let in_zone = |rr: &&Record| rr.name.is_within(&zone);
        let answers: Vec<Record> = if extended {
            response
                .answers
                .iter()
                .chain(&response.authority)
                .chain(&response.additional)
                .filter(|rr| rr.name.eq_ignore_case(&res.question.name) && rr.rtype == res.question.qtype)
                .cloned()
                .collect()
        } else {
            response.answers.iter().filter(in_zone).cloned().collect()
        };
        let authority: Vec<Record> = response.authority.iter().filter(in_zone).cloned().collect();
        let rcode = if extended && !answers.is_empty() {
            Rcode::NOERROR
        } else {
            response.header.rcode
        };
        let answer = CachedAnswer {
            rcode,
            answers,
            authority,
        };

        if let Some(ttl) = self.answer_ttl(&answer) {
            self.cache.put(res.key.clone(), answer.clone(), ttl, now, provenance);
        }
        // Delegation data: in-zone NS sets from authority and their address glue.
        let mut rrsets: BTreeMap<(String, u16), (QueryKey, Vec<Record>)> = BTreeMap::new();
        let extra = response
            .authority
            .iter()
            .filter(|rr| rr.rtype == RecordType::NS)
            .chain(response.additional.iter().filter(|rr| rr.rtype == RecordType::A))
            .filter(in_zone);
        for rr in extra {
            let q = Question {
                name: rr.name.clone(),
                qtype: rr.rtype,
                qclass: rr.class,
            };
            let key = q.key();
            rrsets
                .entry((key.name.to_string(), rr.rtype.to_u16()))
                .or_insert_with(|| (key, Vec::new()))
                .1
                .push(rr.clone());
        }
        for (_, (key, records)) in rrsets {
            if key == res.key {
                continue;
            }
            let ttl = records.iter().map(|r| r.ttl).min().unwrap_or(0);
            let entry = CachedAnswer {
                rcode: Rcode::NOERROR,
                answers: records,
                authority: Vec::new(),
            };
            self.cache.put(key, entry, ttl, now, provenance);
        }

        self.completions.push_back(Completion {
            id,
            question: res.question,
            waiters: res.waiters,
            result: Ok(Answer {
                rcode: answer.rcode,
                answers: answer.answers,
                authority: answer.authority,
                source: AnswerSource::Upstream(mode),
            }),
        });
    }

    /// Cache lifetime for an answer, or `None` when it must not be cached.
    fn answer_ttl(&self, a: &CachedAnswer) -> Option<u32> {
        let soa_min = || {
            a.authority.iter().find_map(|rr| match rr.rdata {
                RData::Soa { minimum, .. } => Some(minimum.min(rr.ttl)),
                _ => None,
            })
        };
        match a.rcode {
            Rcode::NOERROR if !a.answers.is_empty() => a.answers.iter().map(|r| r.ttl).min(),
            Rcode::NOERROR | Rcode::NXDOMAIN => {
                soa_min().map(|m| m.min(self.cfg.negative_ttl_cap))
            }
            _ => None,
        }
    }

    fn fail(&mut self, id: ResolutionId, err: ResolveError) {
        let Some(res) = self.resolutions.remove(&id) else {
            return;
        };
        self.in_flight.remove(&res.key);
        self.stats.failures += 1;
        warn!(event = "fail", resolution = id, key = %res.key, error = %err);
        self.completions.push_back(Completion {
            id,
            question: res.question,
            waiters: res.waiters,
            result: Err(err),
        });
    }

    pub fn handle_timeout(&mut self, now: Timestamp) {
        let mut settled = Vec::new();
        let mut expired = Vec::new();
        let mut deadlines = Vec::new();
        for (&id, res) in &self.resolutions {
            match &res.state {
                State::Normal {
                    held: Some(h), ..
                } if h.until <= now => settled.push(id),
                State::Normal {
                    pending,
                    held: None,
                    ..
                } if pending.deadline <= now => expired.push(id),
                State::Sandwich(s) => match &s.held {
                    Some(h) if h.until <= now => settled.push(id),
                    None if s.session.deadline <= now => deadlines.push(id),
                    _ => {}
                },
                _ => {}
            }
        }
        for id in settled {
            let res = self.resolutions.get_mut(&id).expect("live");
            let (held, mode) = match &mut res.state {
                State::Normal { held, .. } => (held.take(), Mode::Normal),
                State::Sandwich(s) => (s.held.take(), Mode::Sandwich),
            };
            let h = held.expect("settled resolutions hold an answer");
            self.accept(id, h.response, h.tag, mode, now);
        }
        for id in expired {
            self.fail(id, ResolveError::UpstreamTimeout);
        }
        for id in deadlines {
            self.restart(id, RestartReason::Deadline, now);
        }
    }

    /// Earliest time at which [`Resolver::handle_timeout`] has work to do.
    pub fn next_timeout(&self) -> Option<Timestamp> {
        self.resolutions
            .values()
            .map(|res| match &res.state {
                State::Normal { pending, held, .. } => {
                    held.as_ref().map_or(pending.deadline, |h| h.until)
                }
                State::Sandwich(s) => s.held.as_ref().map_or(s.session.deadline, |h| h.until),
            })
            .min()
    }

    pub fn poll_transmit(&mut self) -> Option<Transmit> {
        self.transmits.pop_front()
    }

    pub fn poll_completion(&mut self) -> Option<Completion> {
        self.completions.pop_front()
    }

    /// Whether any in-flight query expects responses on `local`.
    pub fn is_listening(&self, local: SocketAddr) -> bool {
        self.resolutions.values().any(|res| match &res.state {
            State::Normal { pending, .. } => pending.tuple.src == local,
            State::Sandwich(s) => s.session.is_listening_on(local),
        })
    }

    /// Mode of an in-flight resolution.
    pub fn mode_of(&self, id: ResolutionId) -> Option<Mode> {
        self.resolutions.get(&id).map(|r| match r.state {
            State::Normal { .. } => Mode::Normal,
            State::Sandwich(_) => Mode::Sandwich,
        })
    }
}

fn query_for(tuple: &crate::entropy::ValidationTuple) -> DnsMessage {
    DnsMessage::query(
        tuple.txid,
        Question {
            name: tuple.qname.clone(),
            qtype: tuple.qtype,
            qclass: tuple.qclass,
        },
    )
}

/// The records of `answer` with owners equal to `name` ignoring case rewritten to
/// `name`'s exact bytes. Used to hand clients back their own spelling.
pub fn recase_owners(records: &[Record], name: &DnsName) -> Vec<Record> {
    records
        .iter()
        .map(|rr| {
            let mut rr = rr.clone();
            if rr.name.eq_ignore_case(name) {
                rr.name = name.clone();
            }
            rr
        })
        .collect()
}
