//! Forgery detection and the sandwich retry.
//!
//! A query starts in Normal mode. Every response that reaches one of our sockets but
//! fails tuple validation is evidence of an off-path spoofer. Once that evidence
//! reaches the detection threshold the resolution escalates: the original query is
//! re-sent between two guard queries for `<random>.<zone>` names that cannot exist.
//! The answer is accepted only when all three responses validate and arrive in the
//! order the queries were sent. An attacker who cannot see the random guard names
//! cannot forge the guards, and a forged middle answer arriving ahead of the genuine
//! first guard breaks the order.

use std::net::SocketAddr;
use std::time::Duration;

use bitflags::bitflags;
use rand::Rng;
use thiserror::Error;

use crate::entropy::{draw_tuple, EntropyConfig, EntropyError, ValidationTuple};
use crate::time::Timestamp;
use crate::wire::{DnsMessage, DnsName, QueryKey, Question, Rcode};

bitflags! {
    /// Validation fields a response got wrong.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct MismatchSet: u8 {
        const TXID = 1 << 0;
        /// Arrived on a port other than the query's source port.
        const PORT = 1 << 1;
        /// Claimed source differs from the authority the query went to.
        const SOURCE = 1 << 2;
        /// Name matches ignoring case, but not byte for byte.
        const CASE = 1 << 3;
        /// Wrong name, type or class, or not a response at all.
        const QUESTION = 1 << 4;
    }
}

impl MismatchSet {
    /// The transport-level secret (txid, port, address) was guessed correctly.
    pub fn transport_matched(self) -> bool {
        !self.intersects(MismatchSet::TXID | MismatchSet::PORT | MismatchSet::SOURCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Match,
    Mismatch(MismatchSet),
}

impl Classification {
    pub fn is_match(self) -> bool {
        self == Classification::Match
    }

    fn misses(self) -> u32 {
        match self {
            Classification::Match => 0,
            Classification::Mismatch(m) => m.bits().count_ones(),
        }
    }
}

/// Addressing of a received datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseMeta {
    /// Claimed source of the response.
    pub src: SocketAddr,
    /// Our address it arrived on.
    pub dst: SocketAddr,
}

/// Checks a response against the tuple of the query it claims to answer.
///
/// With `case_exact` off (0x20 disabled) the name is compared ignoring case.
pub fn classify_response(
    tuple: &ValidationTuple,
    response: &DnsMessage,
    meta: &ResponseMeta,
    case_exact: bool,
) -> Classification {
    let mut miss = MismatchSet::empty();
    if response.header.id != tuple.txid {
        miss |= MismatchSet::TXID;
    }
    if meta.dst.port() != tuple.src_port() {
        miss |= MismatchSet::PORT;
    }
    if meta.src != tuple.dst {
        miss |= MismatchSet::SOURCE;
    }
    match &response.question {
        Some(q)
            if response.header.qr
                && q.qtype == tuple.qtype
                && q.qclass == tuple.qclass
                && q.name.eq_ignore_case(&tuple.qname) =>
        {
            if case_exact && q.name != tuple.qname {
                miss |= MismatchSet::CASE;
            }
        }
        _ => miss |= MismatchSet::QUESTION,
    }
    if miss.is_empty() {
        Classification::Match
    } else {
        Classification::Mismatch(miss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Sandwich,
}

/// Resolver-side record of one outstanding query.
#[derive(Debug, Clone)]
pub struct PendingQuery {
    pub key: QueryKey,
    pub tuple: ValidationTuple,
    pub mode: Mode,
    pub deadline: Timestamp,
    pub mismatch_count: u32,
}

impl PendingQuery {
    pub fn new(key: QueryKey, tuple: ValidationTuple, deadline: Timestamp) -> Self {
        PendingQuery {
            key,
            tuple,
            mode: Mode::Normal,
            deadline,
            mismatch_count: 0,
        }
    }

    /// Moves to Sandwich mode. There is no way back within one resolution.
    pub fn escalate(&mut self) {
        self.mode = Mode::Sandwich;
    }
}

/// Records a mismatched response and reports whether the sandwich should start.
pub fn detect_forgery(pending: &mut PendingQuery, _event: MismatchSet, threshold: u32) -> bool {
    pending.mismatch_count = pending.mismatch_count.saturating_add(1);
    pending.mismatch_count >= threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichConfig {
    pub enabled: bool,
    pub detection_threshold: u32,
    /// Lowercase letters in each guard prefix.
    pub prefix_len: usize,
    pub retries: u32,
    pub deadline: Duration,
    /// How long an answer is held before acceptance, so that a lucky forgery
    /// arriving ahead of the genuine answer can still be contradicted by it.
    pub settle: Duration,
    /// Explicit zone cuts; a name under one of these uses it as its guard zone.
    pub zone_cuts: Vec<DnsName>,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        SandwichConfig {
            enabled: true,
            detection_threshold: 1,
            prefix_len: 12,
            retries: 3,
            deadline: Duration::from_secs(2),
            settle: Duration::from_millis(200),
            zone_cuts: Vec::new(),
        }
    }
}

impl SandwichConfig {
    pub fn disabled() -> Self {
        SandwichConfig {
            enabled: false,
            ..SandwichConfig::default()
        }
    }
}

/// Zone under which guard names are built: the longest configured cut containing
/// `name`, otherwise `name` minus its leftmost label.
pub fn zone_of(name: &DnsName, zone_cuts: &[DnsName]) -> DnsName {
    zone_cuts
        .iter()
        .filter(|cut| name.is_within(cut) && cut.label_count() < name.label_count())
        .max_by_key(|cut| cut.label_count())
        .cloned()
        .unwrap_or_else(|| name.parent())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Pre,
    Mid,
    Post,
}

impl Role {
    pub const SEND_ORDER: [Role; 3] = [Role::Pre, Role::Mid, Role::Post];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    NxDomain,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStatus {
    Outstanding,
    Validated,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SubQuery {
    pub role: Role,
    pub tuple: ValidationTuple,
    pub expected: Expected,
    pub status: SubStatus,
    response: Option<DnsMessage>,
}

impl SubQuery {
    /// The query datagram payload for this sub-query.
    pub fn message(&self) -> DnsMessage {
        DnsMessage::query(
            self.tuple.txid,
            Question {
                name: self.tuple.qname.clone(),
                qtype: self.tuple.qtype,
                qclass: self.tuple.qclass,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartReason {
    /// A validated response arrived ahead of one sent before it.
    OutOfOrder(Role),
    /// A response carried our transport secret but the wrong name or case.
    NearMiss(Role, MismatchSet),
    /// A second, different validated response for the same sub-query.
    Conflict(Role),
    /// A guard name resolved; wildcard zone or forgery.
    GuardResolved(Role),
    /// Validated transport, but the rcode or answer is not what the role requires.
    Invalid(Role, Rcode),
    Deadline,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SandwichStep {
    Continue,
    Accept(DnsMessage),
    Restart(RestartReason),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SandwichError {
    #[error("sandwich retries exhausted")]
    RetriesExhausted,
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

#[derive(Debug, Clone)]
pub struct SandwichSession {
    pub id: u64,
    pub original: Question,
    pub zone: DnsName,
    subs: [SubQuery; 3],
    arrivals: Vec<Role>,
    pub retries_left: u32,
    pub deadline: Timestamp,
    case_exact: bool,
}

fn random_prefix<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(b'a'..=b'z')).collect()
}

/// Builds the three sub-queries for `original`, each with a freshly drawn tuple.
pub fn build_sandwich<R: Rng + ?Sized>(
    original: &Question,
    entropy: &EntropyConfig,
    cfg: &SandwichConfig,
    rng: &mut R,
    now: Timestamp,
    id: u64,
) -> Result<SandwichSession, SandwichError> {
    build_with_retries(original, entropy, cfg, rng, now, id, cfg.retries)
}

fn build_with_retries<R: Rng + ?Sized>(
    original: &Question,
    entropy: &EntropyConfig,
    cfg: &SandwichConfig,
    rng: &mut R,
    now: Timestamp,
    id: u64,
    retries_left: u32,
) -> Result<SandwichSession, SandwichError> {
    let zone = zone_of(&original.name, &cfg.zone_cuts);
    let pre_prefix = random_prefix(cfg.prefix_len.max(1), rng);
    let mut post_prefix = random_prefix(cfg.prefix_len.max(1), rng);
    while post_prefix == pre_prefix {
        post_prefix = random_prefix(cfg.prefix_len.max(1), rng);
    }
    let guard = |prefix: Vec<u8>| {
        zone.prepend(prefix)
            .map_err(|e| SandwichError::Entropy(EntropyError::ExtendedNameTooLong(e)))
    };
    let names = [guard(pre_prefix)?, original.name.clone(), guard(post_prefix)?];

    let mut subs = Vec::with_capacity(3);
    for (role, name) in Role::SEND_ORDER.into_iter().zip(names) {
        let (tuple, _) = draw_tuple(entropy, &name, original.qtype, original.qclass, 0, rng)?;
        let expected = if role == Role::Mid {
            Expected::Answer
        } else {
            Expected::NxDomain
        };
        subs.push(SubQuery {
            role,
            tuple,
            expected,
            status: SubStatus::Outstanding,
            response: None,
        });
    }
    let subs: [SubQuery; 3] = subs.try_into().expect("three roles");

    Ok(SandwichSession {
        id,
        original: original.clone(),
        zone,
        subs,
        arrivals: Vec::with_capacity(3),
        retries_left,
        deadline: now + cfg.deadline,
        case_exact: entropy.encode_0x20,
    })
}

impl SandwichSession {
    pub fn sub(&self, role: Role) -> &SubQuery {
        &self.subs[role.index()]
    }

    /// Sub-queries in the order they must be sent.
    pub fn subs(&self) -> &[SubQuery; 3] {
        &self.subs
    }

    pub fn arrivals(&self) -> &[Role] {
        &self.arrivals
    }

    pub fn is_listening_on(&self, local: SocketAddr) -> bool {
        self.subs.iter().any(|s| s.tuple.src == local)
    }

    /// The outstanding sub-query bound to `meta.dst` that `response` fits best.
    pub fn best_match(
        &self,
        response: &DnsMessage,
        meta: &ResponseMeta,
    ) -> Option<(Role, Classification)> {
        self.subs
            .iter()
            .filter(|s| s.tuple.src == meta.dst)
            .map(|s| (s.role, classify_response(&s.tuple, response, meta, self.case_exact)))
            .min_by_key(|(_, c)| c.misses())
    }

    pub fn on_response(&mut self, response: &DnsMessage, meta: &ResponseMeta) -> SandwichStep {
        let Some((role, class)) = self.best_match(response, meta) else {
            return SandwichStep::Continue;
        };
        self.apply(role, class, response)
    }

    /// Applies an already classified response to sub-query `role`.
    pub fn apply(
        &mut self,
        role: Role,
        class: Classification,
        response: &DnsMessage,
    ) -> SandwichStep {
        let zone = self.zone.clone();
        let sub = &mut self.subs[role.index()];
        match class {
            // Blind guesses that missed the transport secret are noise here; the
            // session's protection does not depend on counting them.
            Classification::Mismatch(miss) if !miss.transport_matched() => {
                SandwichStep::Continue
            }
            Classification::Mismatch(miss) => {
                sub.status = SubStatus::Failed;
                SandwichStep::Restart(RestartReason::NearMiss(role, miss))
            }
            Classification::Match => {
                if sub.status == SubStatus::Validated {
                    let same = sub.response.as_ref().is_some_and(|r| r.same_content(response));
                    return if same {
                        SandwichStep::Continue
                    } else {
                        SandwichStep::Restart(RestartReason::Conflict(role))
                    };
                }
                if let Err(reason) = check_expected(sub.expected, role, response, &zone) {
                    sub.status = SubStatus::Failed;
                    return SandwichStep::Restart(reason);
                }
                sub.status = SubStatus::Validated;
                sub.response = Some(response.clone());
                self.arrivals.push(role);
                if self.arrivals[..] != Role::SEND_ORDER[..self.arrivals.len()] {
                    return SandwichStep::Restart(RestartReason::OutOfOrder(role));
                }
                if self.arrivals.len() == 3 {
                    let mid = self.subs[Role::Mid.index()].response.clone();
                    return SandwichStep::Accept(mid.expect("validated mid has a response"));
                }
                SandwichStep::Continue
            }
        }
    }

    pub fn on_timeout(&mut self, now: Timestamp) -> SandwichStep {
        if now >= self.deadline {
            SandwichStep::Restart(RestartReason::Deadline)
        } else {
            SandwichStep::Continue
        }
    }

    /// A fresh session for the same question with every field re-drawn.
    pub fn restart<R: Rng + ?Sized>(
        &self,
        entropy: &EntropyConfig,
        cfg: &SandwichConfig,
        rng: &mut R,
        now: Timestamp,
        id: u64,
    ) -> Result<SandwichSession, SandwichError> {
        if self.retries_left == 0 {
            return Err(SandwichError::RetriesExhausted);
        }
        build_with_retries(&self.original, entropy, cfg, rng, now, id, self.retries_left - 1)
    }
}

fn check_expected(
    expected: Expected,
    role: Role,
    response: &DnsMessage,
    zone: &DnsName,
) -> Result<(), RestartReason> {
    let rcode = response.header.rcode;
    match expected {
        Expected::NxDomain if rcode == Rcode::NXDOMAIN => Ok(()),
        Expected::NxDomain if rcode == Rcode::NOERROR => Err(RestartReason::GuardResolved(role)),
        Expected::NxDomain => Err(RestartReason::Invalid(role, rcode)),
        Expected::Answer => {
            let positive = rcode == Rcode::NOERROR
                && response.answers.iter().any(|rr| rr.name.is_within(zone));
            let negative = rcode == Rcode::NXDOMAIN
                || (rcode == Rcode::NOERROR && response.answers.is_empty());
            if positive || negative {
                Ok(())
            } else {
                Err(RestartReason::Invalid(role, rcode))
            }
        }
    }
}
