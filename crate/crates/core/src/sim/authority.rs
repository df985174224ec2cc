use std::net::Ipv4Addr;

use crate::wire::{DnsMessage, DnsName, NameKey, Question, Rcode, Record, RecordType, CLASS_IN};

pub const DEFAULT_TTL: u32 = 3600;
pub const SOA_MINIMUM: u32 = 300;
/// Address synthesised for every name under a wildcard zone.
pub const WILDCARD_ADDR: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 200);

/// A delegated child zone: NS set in the authority section plus address glue.
#[derive(Debug, Clone)]
pub struct Delegation {
    pub child: DnsName,
    pub ns: Vec<Record>,
    pub glue: Vec<Record>,
}

/// Authoritative server for one zone.
#[derive(Debug, Clone)]
pub struct AuthoritySim {
    pub zone: DnsName,
    pub records: Vec<Record>,
    pub delegations: Vec<Delegation>,
    pub wildcard: bool,
    /// Echo the question name byte for byte. When off, the echoed name is lowercased.
    pub case_preserving: bool,
}

impl AuthoritySim {
    pub fn new(zone: DnsName) -> Self {
        AuthoritySim {
            zone,
            records: Vec::new(),
            delegations: Vec::new(),
            wildcard: false,
            case_preserving: true,
        }
    }

    /// `zone` with an SOA, an NS at `ns.<zone>`, and `www.<zone>` / `ns.<zone>` A records.
    pub fn example(zone: DnsName) -> Self {
        let ns = zone.prepend("ns").expect("short zone");
        let www = zone.prepend("www").expect("short zone");
        let mut a = AuthoritySim::new(zone.clone());
        a.records = vec![
            Record::soa(zone.clone(), DEFAULT_TTL, SOA_MINIMUM),
            Record::ns(zone, DEFAULT_TTL, ns.clone()),
            Record::a(ns, DEFAULT_TTL, Ipv4Addr::new(192, 0, 2, 53)),
            Record::a(www, DEFAULT_TTL, Ipv4Addr::new(192, 0, 2, 80)),
        ];
        a
    }

    fn soa(&self) -> Vec<Record> {
        self.records
            .iter()
            .filter(|r| r.rtype == RecordType::SOA)
            .cloned()
            .collect()
    }

    /// The authoritative rcode and answer records for `q`, ignoring delegations.
    pub fn truth(&self, q: &Question) -> (Rcode, Vec<Record>) {
        if !q.name.is_within(&self.zone) {
            return (Rcode::REFUSED, Vec::new());
        }
        let key = NameKey::new(&q.name);
        let owned: Vec<&Record> = self
            .records
            .iter()
            .filter(|r| NameKey::new(&r.name) == key)
            .collect();
        if owned.is_empty() {
            if self.wildcard {
                let rr = Record::a(q.name.clone(), DEFAULT_TTL, WILDCARD_ADDR);
                let answers = if q.qtype == RecordType::A { vec![rr] } else { Vec::new() };
                return (Rcode::NOERROR, answers);
            }
            return (Rcode::NXDOMAIN, Vec::new());
        }
        let answers = owned
            .into_iter()
            .filter(|r| r.rtype == q.qtype && r.class == q.qclass)
            .cloned()
            .collect();
        (Rcode::NOERROR, answers)
    }

    /// The response to `query`, or `None` for something that is not a query.
    pub fn respond(&self, query: &DnsMessage) -> Option<DnsMessage> {
        if query.header.qr {
            return None;
        }
        let q = query.question.as_ref()?;
        let mut resp = DnsMessage::response_to(query, Rcode::NOERROR);
        resp.header.ra = false;
        if !self.case_preserving {
            if let Some(rq) = resp.question.as_mut() {
                rq.name = rq.name.to_lowercase();
            }
        }
        if q.qclass != CLASS_IN || !q.name.is_within(&self.zone) {
            resp.header.rcode = Rcode::REFUSED;
            return Some(resp);
        }
        if let Some(d) = self
            .delegations
            .iter()
            .find(|d| q.name.is_within(&d.child))
        {
            resp.authority = d.ns.clone();
            resp.additional = d.glue.clone();
            return Some(resp);
        }
        resp.header.aa = true;
        let (rcode, answers) = self.truth(q);
        resp.header.rcode = rcode;
        if answers.is_empty() {
            resp.authority = self.soa();
        }
        resp.answers = answers;
        Some(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(s: &str) -> DnsName {
        s.parse().unwrap()
    }

    fn ask(a: &AuthoritySim, n: &str, t: RecordType) -> DnsMessage {
        a.respond(&DnsMessage::query(7, Question::new(name(n), t))).unwrap()
    }

    #[test]
    fn answers_and_echoes_case() {
        let a = AuthoritySim::example(name("google.com"));
        let r = ask(&a, "WwW.gOOgle.com", RecordType::A);
        assert_eq!(r.header.id, 7);
        assert_eq!(r.header.rcode, Rcode::NOERROR);
        assert_eq!(r.question.unwrap().name.to_string(), "WwW.gOOgle.com");
        assert_eq!(r.answers.len(), 1);
    }

    #[test]
    fn lowercases_when_not_case_preserving() {
        let mut a = AuthoritySim::example(name("google.com"));
        a.case_preserving = false;
        let r = ask(&a, "WwW.gOOgle.com", RecordType::A);
        assert_eq!(r.question.unwrap().name.to_string(), "www.google.com");
    }

    #[test]
    fn nxdomain_and_nodata_carry_soa() {
        let a = AuthoritySim::example(name("google.com"));
        let r = ask(&a, "12345678.google.com", RecordType::A);
        assert_eq!(r.header.rcode, Rcode::NXDOMAIN);
        assert_eq!(r.authority[0].rtype, RecordType::SOA);
        let r = ask(&a, "www.google.com", RecordType::NS);
        assert_eq!(r.header.rcode, Rcode::NOERROR);
        assert!(r.answers.is_empty());
        assert_eq!(r.authority[0].rtype, RecordType::SOA);
    }

    #[test]
    fn wildcard_resolves_everything() {
        let mut a = AuthoritySim::example(name("google.com"));
        a.wildcard = true;
        let r = ask(&a, "qwertyuiopas.google.com", RecordType::A);
        assert_eq!(r.header.rcode, Rcode::NOERROR);
        assert_eq!(r.answers.len(), 1);
    }

    #[test]
    fn out_of_zone_refused_and_referrals() {
        let mut a = AuthoritySim::example(name("com"));
        a.delegations.push(Delegation {
            child: name("google.com"),
            ns: vec![Record::ns(name("google.com"), 60, name("ns.google.com"))],
            glue: vec![Record::a(name("ns.google.com"), 60, Ipv4Addr::new(192, 0, 2, 53))],
        });
        assert_eq!(ask(&a, "example.org", RecordType::A).header.rcode, Rcode::REFUSED);
        let r = ask(&a, "x.google.com", RecordType::A);
        assert!(r.answers.is_empty());
        assert_eq!(r.authority.len(), 1);
        assert_eq!(r.additional.len(), 1);
    }
}
