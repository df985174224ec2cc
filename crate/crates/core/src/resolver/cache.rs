use std::num::NonZeroUsize;
use std::time::Duration;

use lru::LruCache;

use crate::sandwich::Mode;
use crate::time::Timestamp;
use crate::wire::{QueryKey, Rcode, Record};

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_MAX_TTL: u32 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedAnswer {
    pub rcode: Rcode,
    pub answers: Vec<Record>,
    pub authority: Vec<Record>,
}

/// Where a cached entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    /// Mode the accepting resolution was in.
    pub mode: Mode,
    /// Opaque tag of the datagram that carried the records.
    pub packet_tag: u64,
    pub resolution: u64,
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub key: QueryKey,
    pub answer: CachedAnswer,
    pub inserted_at: Timestamp,
    /// Seconds, after clamping.
    pub ttl: u32,
    pub provenance: Provenance,
}

impl CacheEntry {
    fn expires_at(&self) -> Timestamp {
        self.inserted_at + Duration::from_secs(self.ttl as u64)
    }
}

#[derive(Debug, Clone)]
pub struct CacheWrite {
    pub key: QueryKey,
    pub at: Timestamp,
    pub provenance: Provenance,
}

/// Bounded LRU keyed by case-folded question. Entries are never served at or past
/// `inserted_at + ttl`.
pub struct Cache {
    entries: LruCache<QueryKey, CacheEntry>,
    max_ttl: u32,
    log: Option<Vec<CacheWrite>>,
    writes: u64,
}

impl Cache {
    pub fn new(capacity: usize, max_ttl: u32) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        Cache {
            entries: LruCache::new(cap),
            max_ttl,
            log: None,
            writes: 0,
        }
    }

    /// Keep a log of every write with its provenance.
    pub fn with_write_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    /// Stores `answer` for `ttl` seconds, clamped to the configured maximum.
    /// A zero TTL stores nothing. Returns whether an entry was written.
    pub fn put(
        &mut self,
        key: QueryKey,
        answer: CachedAnswer,
        ttl: u32,
        now: Timestamp,
        provenance: Provenance,
    ) -> bool {
        let ttl = ttl.min(self.max_ttl);
        if ttl == 0 {
            return false;
        }
        self.writes += 1;
        if let Some(log) = &mut self.log {
            log.push(CacheWrite {
                key: key.clone(),
                at: now,
                provenance,
            });
        }
        self.entries.put(
            key.clone(),
            CacheEntry {
                key,
                answer,
                inserted_at: now,
                ttl,
                provenance,
            },
        );
        true
    }

    /// The live entry for `key`, with record TTLs reduced to the time remaining.
    pub fn get(&mut self, key: &QueryKey, now: Timestamp) -> Option<CachedAnswer> {
        let entry = self.entries.get(key)?;
        if now >= entry.expires_at() {
            self.entries.pop(key);
            return None;
        }
        let remaining = (entry.expires_at() - now).as_secs().max(1) as u32;
        let mut answer = entry.answer.clone();
        for rr in answer.answers.iter_mut().chain(answer.authority.iter_mut()) {
            rr.ttl = rr.ttl.min(remaining);
        }
        Some(answer)
    }

    /// Entry lookup without touching recency or expiry.
    pub fn peek(&self, key: &QueryKey) -> Option<&CacheEntry> {
        self.entries.peek(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter().map(|(_, e)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_count(&self) -> u64 {
        self.writes
    }

    pub fn write_log(&self) -> &[CacheWrite] {
        self.log.as_deref().unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{DnsName, Question, RecordType};
    use std::net::Ipv4Addr;

    fn key(name: &str) -> QueryKey {
        Question::new(name.parse().unwrap(), RecordType::A).key()
    }

    fn answer(ttl: u32) -> CachedAnswer {
        let name: DnsName = "www.example.com".parse().unwrap();
        CachedAnswer {
            rcode: Rcode::NOERROR,
            answers: vec![Record::a(name, ttl, Ipv4Addr::new(192, 0, 2, 1))],
            authority: vec![],
        }
    }

    const PROV: Provenance = Provenance {
        mode: Mode::Normal,
        packet_tag: 0,
        resolution: 0,
    };

    #[test]
    fn expiry_is_exclusive() {
        let mut c = Cache::new(10, DEFAULT_MAX_TTL);
        let t0 = Timestamp::from_secs(100);
        assert!(c.put(key("www.example.com"), answer(60), 60, t0, PROV));
        assert!(c.get(&key("www.example.com"), Timestamp::from_secs(159)).is_some());
        assert!(c.get(&key("www.example.com"), Timestamp::from_secs(160)).is_none());
    }

    #[test]
    fn zero_ttl_not_cached() {
        let mut c = Cache::new(10, DEFAULT_MAX_TTL);
        assert!(!c.put(key("a.example"), answer(0), 0, Timestamp::ZERO, PROV));
        assert!(c.is_empty());
    }

    #[test]
    fn ttl_clamped_to_max() {
        let mut c = Cache::new(10, DEFAULT_MAX_TTL);
        c.put(key("a.example"), answer(1_000_000), 1_000_000, Timestamp::ZERO, PROV);
        assert_eq!(c.peek(&key("a.example")).unwrap().ttl, 86_400);
        assert!(c.get(&key("a.example"), Timestamp::from_secs(86_399)).is_some());
        assert!(c.get(&key("a.example"), Timestamp::from_secs(86_400)).is_none());
    }

    #[test]
    fn keys_fold_case_and_put_overwrites() {
        let mut c = Cache::new(10, DEFAULT_MAX_TTL);
        c.put(key("WwW.Example.COM"), answer(60), 60, Timestamp::ZERO, PROV);
        let got = c.get(&key("www.example.com"), Timestamp::from_secs(10)).unwrap();
        assert_eq!(got.answers[0].ttl, 50);
        c.put(key("www.example.com"), answer(30), 30, Timestamp::from_secs(10), PROV);
        assert_eq!(c.len(), 1);
        assert_eq!(c.peek(&key("www.example.com")).unwrap().ttl, 30);
    }

    #[test]
    fn bounded() {
        let mut c = Cache::new(2, DEFAULT_MAX_TTL).with_write_log();
        for name in ["a.x", "b.x", "c.x"] {
            c.put(key(name), answer(60), 60, Timestamp::ZERO, PROV);
        }
        assert_eq!(c.len(), 2);
        assert!(c.peek(&key("a.x")).is_none());
        assert_eq!(c.write_log().len(), 3);
    }
}
