use std::fmt;
use std::net::Ipv4Addr;

use super::DnsName;

pub const CLASS_IN: u16 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordType {
    A,
    NS,
    CNAME,
    SOA,
    Other(u16),
}

impl RecordType {
    pub fn to_u16(self) -> u16 {
        match self {
            RecordType::A => 1,
            RecordType::NS => 2,
            RecordType::CNAME => 5,
            RecordType::SOA => 6,
            RecordType::Other(v) => v,
        }
    }
}

impl From<u16> for RecordType {
    fn from(v: u16) -> Self {
        match v {
            1 => RecordType::A,
            2 => RecordType::NS,
            5 => RecordType::CNAME,
            6 => RecordType::SOA,
            v => RecordType::Other(v),
        }
    }
}

impl fmt::Debug for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordType::A => f.write_str("A"),
            RecordType::NS => f.write_str("NS"),
            RecordType::CNAME => f.write_str("CNAME"),
            RecordType::SOA => f.write_str("SOA"),
            RecordType::Other(v) => write!(f, "TYPE{v}"),
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// 4-bit response code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rcode(pub u8);

impl Rcode {
    pub const NOERROR: Rcode = Rcode(0);
    pub const FORMERR: Rcode = Rcode(1);
    pub const SERVFAIL: Rcode = Rcode(2);
    pub const NXDOMAIN: Rcode = Rcode(3);
    pub const NOTIMP: Rcode = Rcode(4);
    pub const REFUSED: Rcode = Rcode(5);
}

impl fmt::Debug for Rcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rcode::NOERROR => f.write_str("NOERROR"),
            Rcode::FORMERR => f.write_str("FORMERR"),
            Rcode::SERVFAIL => f.write_str("SERVFAIL"),
            Rcode::NXDOMAIN => f.write_str("NXDOMAIN"),
            Rcode::NOTIMP => f.write_str("NOTIMP"),
            Rcode::REFUSED => f.write_str("REFUSED"),
            Rcode(v) => write!(f, "RCODE{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DnsHeader {
    pub id: u16,
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    /// The three reserved/AD/CD bits, carried through untouched.
    pub z: u8,
    pub rcode: Rcode,
}

impl DnsHeader {
    pub(crate) fn flags(&self) -> u16 {
        (self.qr as u16) << 15
            | ((self.opcode & 0x0f) as u16) << 11
            | (self.aa as u16) << 10
            | (self.tc as u16) << 9
            | (self.rd as u16) << 8
            | (self.ra as u16) << 7
            | ((self.z & 0x07) as u16) << 4
            | (self.rcode.0 & 0x0f) as u16
    }

    pub(crate) fn from_flags(id: u16, flags: u16) -> Self {
        DnsHeader {
            id,
            qr: flags & 0x8000 != 0,
            opcode: ((flags >> 11) & 0x0f) as u8,
            aa: flags & 0x0400 != 0,
            tc: flags & 0x0200 != 0,
            rd: flags & 0x0100 != 0,
            ra: flags & 0x0080 != 0,
            z: ((flags >> 4) & 0x07) as u8,
            rcode: Rcode((flags & 0x0f) as u8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Question {
    pub name: DnsName,
    pub qtype: RecordType,
    pub qclass: u16,
}

impl Question {
    pub fn new(name: DnsName, qtype: RecordType) -> Self {
        Question {
            name,
            qtype,
            qclass: CLASS_IN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RData {
    A(Ipv4Addr),
    Ns(DnsName),
    Cname(DnsName),
    Soa {
        mname: DnsName,
        rname: DnsName,
        serial: u32,
        refresh: u32,
        retry: u32,
        expire: u32,
        minimum: u32,
    },
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Record {
    pub name: DnsName,
    pub rtype: RecordType,
    pub class: u16,
    /// Seconds.
    pub ttl: u32,
    pub rdata: RData,
}

impl Record {
    pub fn a(name: DnsName, ttl: u32, addr: Ipv4Addr) -> Self {
        Record {
            name,
            rtype: RecordType::A,
            class: CLASS_IN,
            ttl,
            rdata: RData::A(addr),
        }
    }

    pub fn ns(name: DnsName, ttl: u32, host: DnsName) -> Self {
        Record {
            name,
            rtype: RecordType::NS,
            class: CLASS_IN,
            ttl,
            rdata: RData::Ns(host),
        }
    }

    pub fn soa(zone: DnsName, ttl: u32, minimum: u32) -> Self {
        let mname = zone.prepend("ns").unwrap_or_else(|_| zone.clone());
        let rname = zone.prepend("hostmaster").unwrap_or_else(|_| zone.clone());
        Record {
            name: zone,
            rtype: RecordType::SOA,
            class: CLASS_IN,
            ttl,
            rdata: RData::Soa {
                mname,
                rname,
                serial: 1,
                refresh: 3600,
                retry: 600,
                expire: 86400,
                minimum,
            },
        }
    }

    /// Same owner (ignoring case), type, class and rdata. TTL is not compared.
    pub fn same_data(&self, other: &Record) -> bool {
        self.name.eq_ignore_case(&other.name)
            && self.rtype == other.rtype
            && self.class == other.class
            && self.rdata == other.rdata
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DnsMessage {
    pub header: DnsHeader,
    pub question: Option<Question>,
    pub answers: Vec<Record>,
    pub authority: Vec<Record>,
    pub additional: Vec<Record>,
}

impl DnsMessage {
    /// A recursion-desired query with a single question.
    pub fn query(id: u16, question: Question) -> Self {
        DnsMessage {
            header: DnsHeader {
                id,
                rd: true,
                ..DnsHeader::default()
            },
            question: Some(question),
            ..DnsMessage::default()
        }
    }

    /// An empty response echoing `query`'s id, RD bit and question verbatim.
    pub fn response_to(query: &DnsMessage, rcode: Rcode) -> Self {
        DnsMessage {
            header: DnsHeader {
                id: query.header.id,
                qr: true,
                opcode: query.header.opcode,
                rd: query.header.rd,
                ra: true,
                rcode,
                ..DnsHeader::default()
            },
            question: query.question.clone(),
            ..DnsMessage::default()
        }
    }

    /// Compares everything a cache would keep: rcode and the three record sections,
    /// ignoring owner-name case and TTLs.
    pub fn same_content(&self, other: &DnsMessage) -> bool {
        fn same(a: &[Record], b: &[Record]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_data(y))
        }
        self.header.rcode == other.header.rcode
            && same(&self.answers, &other.answers)
            && same(&self.authority, &other.authority)
            && same(&self.additional, &other.additional)
    }
}

/// Case-folded identity of a question, used for cache and in-flight lookups.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryKey {
    pub name: super::NameKey,
    pub qtype: RecordType,
    pub qclass: u16,
}

impl Question {
    pub fn key(&self) -> QueryKey {
        QueryKey {
            name: super::NameKey::new(&self.name),
            qtype: self.qtype,
            qclass: self.qclass,
        }
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.qtype)
    }
}
