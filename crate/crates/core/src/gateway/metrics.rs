use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::resolver::ResolverStats;

/// Monotone gateway counters.
#[derive(Debug, Default)]
pub struct Metrics {
    pub queries: AtomicU64,
    pub cache_hits: AtomicU64,
    pub mismatched_responses: AtomicU64,
    pub sandwich_activations: AtomicU64,
    pub sandwich_restarts: AtomicU64,
    pub accepted: AtomicU64,
    pub servfail: AtomicU64,
    pub malformed: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricsSnapshot {
    pub queries: u64,
    pub cache_hits: u64,
    pub mismatched_responses: u64,
    pub sandwich_activations: u64,
    pub sandwich_restarts: u64,
    pub accepted: u64,
    pub servfail: u64,
    pub malformed: u64,
}

impl Metrics {
    /// Copies the resolver-owned counters. They only grow, so neither do these.
    pub fn sync(&self, s: &ResolverStats) {
        self.cache_hits.store(s.cache_hits, Ordering::Relaxed);
        self.mismatched_responses.store(s.mismatched_responses, Ordering::Relaxed);
        self.sandwich_activations.store(s.sandwich_activations, Ordering::Relaxed);
        self.sandwich_restarts.store(s.sandwich_restarts, Ordering::Relaxed);
        self.accepted.store(s.accepted, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        MetricsSnapshot {
            queries: get(&self.queries),
            cache_hits: get(&self.cache_hits),
            mismatched_responses: get(&self.mismatched_responses),
            sandwich_activations: get(&self.sandwich_activations),
            sandwich_restarts: get(&self.sandwich_restarts),
            accepted: get(&self.accepted),
            servfail: get(&self.servfail),
            malformed: get(&self.malformed),
        }
    }
}

impl MetricsSnapshot {
    pub fn fields(&self) -> [(&'static str, u64); 8] {
        [
            ("queries", self.queries),
            ("cache_hits", self.cache_hits),
            ("mismatched_responses", self.mismatched_responses),
            ("sandwich_activations", self.sandwich_activations),
            ("sandwich_restarts", self.sandwich_restarts),
            ("accepted", self.accepted),
            ("servfail", self.servfail),
            ("malformed", self.malformed),
        ]
    }

    /// One `name value` line per counter.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} {v}");
        }
        out
    }

    /// Inverse of [`MetricsSnapshot::render`]; unknown lines are ignored.
    pub fn parse(text: &str) -> Option<Self> {
        let mut s = MetricsSnapshot::default();
        for line in text.lines() {
            let (k, v) = line.split_once(' ')?;
            let v: u64 = v.trim().parse().ok()?;
            match k {
                "queries" => s.queries = v,
                "cache_hits" => s.cache_hits = v,
                "mismatched_responses" => s.mismatched_responses = v,
                "sandwich_activations" => s.sandwich_activations = v,
                "sandwich_restarts" => s.sandwich_restarts = v,
                "accepted" => s.accepted = v,
                "servfail" => s.servfail = v,
                "malformed" => s.malformed = v,
                _ => {}
            }
        }
        Some(s)
    }

    /// Every counter is at least its value in `earlier`.
    pub fn dominates(&self, earlier: &MetricsSnapshot) -> bool {
        self.fields()
            .iter()
            .zip(earlier.fields())
            .all(|((_, a), (_, b))| *a >= b)
    }
}
