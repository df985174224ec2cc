use std::net::Ipv4Addr;

use super::message::{DnsHeader, DnsMessage, Question, RData, Record, RecordType};
use super::name::{DnsName, MAX_NAME_LEN};
use super::WireError;

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeOptions {
    /// Reject bytes left over after the declared sections.
    pub strict_trailing: bool,
}

pub fn encode_message(msg: &DnsMessage) -> Result<Vec<u8>, WireError> {
    let count = |n: usize| u16::try_from(n).map_err(|_| WireError::TooManyRecords);
    let qd = msg.question.is_some() as u16;
    let an = count(msg.answers.len())?;
    let ns = count(msg.authority.len())?;
    let ar = count(msg.additional.len())?;

    let mut out = Vec::with_capacity(512);
    out.extend_from_slice(&msg.header.id.to_be_bytes());
    out.extend_from_slice(&msg.header.flags().to_be_bytes());
    for c in [qd, an, ns, ar] {
        out.extend_from_slice(&c.to_be_bytes());
    }
    if let Some(q) = &msg.question {
        put_name(&mut out, &q.name)?;
        out.extend_from_slice(&q.qtype.to_u16().to_be_bytes());
        out.extend_from_slice(&q.qclass.to_be_bytes());
    }
    for rr in msg.answers.iter().chain(&msg.authority).chain(&msg.additional) {
        put_record(&mut out, rr)?;
    }
    Ok(out)
}

fn put_name(out: &mut Vec<u8>, name: &DnsName) -> Result<(), WireError> {
    if name.wire_len() > MAX_NAME_LEN {
        return Err(WireError::NameTooLong(name.wire_len()));
    }
    for label in name.labels() {
        if label.len() > 63 {
            return Err(WireError::LabelTooLong(label.len()));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label);
    }
    out.push(0);
    Ok(())
}

fn put_record(out: &mut Vec<u8>, rr: &Record) -> Result<(), WireError> {
    put_name(out, &rr.name)?;
    out.extend_from_slice(&rr.rtype.to_u16().to_be_bytes());
    out.extend_from_slice(&rr.class.to_be_bytes());
    out.extend_from_slice(&rr.ttl.to_be_bytes());
    let len_at = out.len();
    out.extend_from_slice(&[0, 0]);
    let start = out.len();
    match (&rr.rdata, rr.rtype) {
        (RData::A(addr), RecordType::A) => out.extend_from_slice(&addr.octets()),
        (RData::Ns(host), RecordType::NS) | (RData::Cname(host), RecordType::CNAME) => {
            put_name(out, host)?
        }
        (
            RData::Soa {
                mname,
                rname,
                serial,
                refresh,
                retry,
                expire,
                minimum,
            },
            RecordType::SOA,
        ) => {
            put_name(out, mname)?;
            put_name(out, rname)?;
            for v in [serial, refresh, retry, expire, minimum] {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        (RData::Opaque(bytes), RecordType::Other(_)) => out.extend_from_slice(bytes),
        (rdata, rtype) => {
            let len = match rdata {
                RData::Opaque(b) => b.len(),
                _ => 0,
            };
            return Err(WireError::BadRdata {
                rtype: rtype.to_u16(),
                len,
            });
        }
    }
    let rdlen = u16::try_from(out.len() - start).map_err(|_| WireError::BadRdata {
        rtype: rr.rtype.to_u16(),
        len: out.len() - start,
    })?;
    out[len_at..len_at + 2].copy_from_slice(&rdlen.to_be_bytes());
    Ok(())
}

pub fn decode_message(buf: &[u8]) -> Result<DnsMessage, WireError> {
    decode_message_with(buf, DecodeOptions::default())
}

pub fn decode_message_with(buf: &[u8], opts: DecodeOptions) -> Result<DnsMessage, WireError> {
    if buf.len() < HEADER_LEN {
        return Err(WireError::TruncatedPacket);
    }
    let mut r = Reader { buf, pos: 0 };
    let id = r.u16()?;
    let flags = r.u16()?;
    let qd = r.u16()?;
    let an = r.u16()?;
    let ns = r.u16()?;
    let ar = r.u16()?;
    if qd > 1 {
        return Err(WireError::CountMismatch);
    }

    let question = if qd == 1 {
        let name = r.name()?;
        let qtype = RecordType::from(r.u16()?);
        let qclass = r.u16()?;
        Some(Question {
            name,
            qtype,
            qclass,
        })
    } else {
        None
    };

    let mut section = |n: u16| -> Result<Vec<Record>, WireError> {
        // Each record needs at least 11 bytes; refuse counts the buffer cannot hold
        // before allocating for them.
        if (n as usize) * 11 > buf.len() - r.pos {
            return Err(WireError::TruncatedPacket);
        }
        (0..n).map(|_| r.record()).collect()
    };
    let answers = section(an)?;
    let authority = section(ns)?;
    let additional = section(ar)?;

    if opts.strict_trailing && r.pos != buf.len() {
        return Err(WireError::TrailingBytes(buf.len() - r.pos));
    }

    Ok(DnsMessage {
        header: DnsHeader::from_flags(id, flags),
        question,
        answers,
        authority,
        additional,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::TruncatedPacket)?;
        let bytes = self.buf.get(self.pos..end).ok_or(WireError::TruncatedPacket)?;
        self.pos = end;
        Ok(bytes)
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads a possibly compressed name starting at `self.pos`. Pointers must point
    /// strictly backwards, which bounds the walk and rules out cycles.
    fn name(&mut self) -> Result<DnsName, WireError> {
        let mut labels: Vec<Vec<u8>> = Vec::new();
        let mut wire_len = 1;
        let mut cur = self.pos;
        let mut resume = None;
        loop {
            let len = *self.buf.get(cur).ok_or(WireError::TruncatedPacket)?;
            match len & 0xc0 {
                0x00 if len == 0 => {
                    cur += 1;
                    break;
                }
                0x00 => {
                    let len = len as usize;
                    let label = self
                        .buf
                        .get(cur + 1..cur + 1 + len)
                        .ok_or(WireError::TruncatedPacket)?;
                    wire_len += len + 1;
                    if wire_len > MAX_NAME_LEN {
                        return Err(WireError::NameTooLong(wire_len));
                    }
                    labels.push(label.to_vec());
                    cur += 1 + len;
                }
                0xc0 => {
                    let lo = *self.buf.get(cur + 1).ok_or(WireError::TruncatedPacket)?;
                    let target = (((len & 0x3f) as usize) << 8) | lo as usize;
                    if target >= cur {
                        return Err(WireError::PointerLoop);
                    }
                    resume.get_or_insert(cur + 2);
                    cur = target;
                }
                // 0x40 and 0x80 prefixes encode lengths above 63.
                _ => return Err(WireError::LabelTooLong(len as usize)),
            }
        }
        self.pos = resume.unwrap_or(cur);
        DnsName::from_labels(labels)
    }

    fn record(&mut self) -> Result<Record, WireError> {
        let name = self.name()?;
        let rtype = RecordType::from(self.u16()?);
        let class = self.u16()?;
        let ttl = self.u32()?;
        let rdlen = self.u16()? as usize;
        let start = self.pos;
        let end = start + rdlen;
        if end > self.buf.len() {
            return Err(WireError::TruncatedPacket);
        }
        let bad = || WireError::BadRdata {
            rtype: rtype.to_u16(),
            len: rdlen,
        };
        let rdata = match rtype {
            RecordType::A => {
                if rdlen != 4 {
                    return Err(bad());
                }
                let b = self.take(4)?;
                RData::A(Ipv4Addr::new(b[0], b[1], b[2], b[3]))
            }
            RecordType::NS | RecordType::CNAME => {
                let host = self.name()?;
                if self.pos != end {
                    return Err(bad());
                }
                if rtype == RecordType::NS {
                    RData::Ns(host)
                } else {
                    RData::Cname(host)
                }
            }
            RecordType::SOA => {
                let mname = self.name()?;
                let rname = self.name()?;
                if self.pos + 20 != end {
                    return Err(bad());
                }
                RData::Soa {
                    mname,
                    rname,
                    serial: self.u32()?,
                    refresh: self.u32()?,
                    retry: self.u32()?,
                    expire: self.u32()?,
                    minimum: self.u32()?,
                }
            }
            RecordType::Other(_) => RData::Opaque(self.take(rdlen)?.to_vec()),
        };
        Ok(Record {
            name,
            rtype,
            class,
            ttl,
            rdata,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{Rcode, CLASS_IN};

    fn n(s: &str) -> DnsName {
        s.parse().unwrap()
    }

    /// Hand-assembled bytes for a recursion-desired A query for a9.com.
    const A9_QUERY: [u8; 24] = [
        0x12, 0x34, // id
        0x01, 0x00, // flags: RD
        0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // counts
        0x02, b'a', b'9', 0x03, b'c', b'o', b'm', 0x00, // qname
        0x00, 0x01, // qtype A
        0x00, 0x01, // qclass IN
    ];

    #[test]
    fn encodes_a9_query_bit_exact() {
        let m = DnsMessage::query(0x1234, Question::new(n("a9.com"), RecordType::A));
        let wire = encode_message(&m).unwrap();
        assert_eq!(wire.len(), 24);
        assert_eq!(wire, A9_QUERY);
        assert_eq!(decode_message(&A9_QUERY).unwrap(), m);
    }

    #[test]
    fn preserves_label_case() {
        let m = DnsMessage::query(7, Question::new(n("WwW.gOOgle.CoM"), RecordType::A));
        let wire = encode_message(&m).unwrap();
        assert!(wire.windows(6).any(|w| w == b"gOOgle"));
        assert_eq!(decode_message(&wire).unwrap().question.unwrap().name, n("WwW.gOOgle.CoM"));
    }

    #[test]
    fn short_buffer_is_truncated() {
        assert_eq!(decode_message(&[0u8; 11]), Err(WireError::TruncatedPacket));
    }

    #[test]
    fn self_pointer_is_a_loop() {
        let mut buf = A9_QUERY[..12].to_vec();
        buf.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert_eq!(decode_message(&buf), Err(WireError::PointerLoop));
    }

    #[test]
    fn sixty_four_byte_label_rejected_by_encoder_input() {
        let err = DnsName::from_labels([vec![b'a'; 64]]).unwrap_err();
        assert_eq!(err, WireError::LabelTooLong(64));
    }

    #[test]
    fn follows_backward_pointers() {
        // Response for a9.com with the answer owner compressed to offset 12.
        let mut buf = A9_QUERY.to_vec();
        buf[2] = 0x81;
        buf[3] = 0x80;
        buf[7] = 1; // ancount
        buf.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 192, 0, 2, 1]);
        let m = decode_message(&buf).unwrap();
        assert_eq!(m.answers.len(), 1);
        assert_eq!(m.answers[0].name, n("a9.com"));
        assert_eq!(m.answers[0].rdata, RData::A(Ipv4Addr::new(192, 0, 2, 1)));
        assert_eq!(m.answers[0].class, CLASS_IN);
        assert_eq!(m.header.rcode, Rcode::NOERROR);
        assert!(m.header.qr);
    }

    #[test]
    fn trailing_bytes_only_rejected_when_strict() {
        let mut buf = A9_QUERY.to_vec();
        buf.extend_from_slice(&[0, 0, 0]);
        assert!(decode_message(&buf).is_ok());
        let strict = DecodeOptions {
            strict_trailing: true,
        };
        assert_eq!(decode_message_with(&buf, strict), Err(WireError::TrailingBytes(3)));
    }

    #[test]
    fn more_than_one_question_is_count_mismatch() {
        let mut buf = A9_QUERY.to_vec();
        buf[5] = 2;
        assert_eq!(decode_message(&buf), Err(WireError::CountMismatch));
    }

    #[test]
    fn declared_records_missing_is_truncated() {
        let mut buf = A9_QUERY.to_vec();
        buf[7] = 3;
        assert_eq!(decode_message(&buf), Err(WireError::TruncatedPacket));
    }

    #[test]
    fn too_many_records() {
        let rr = Record::a(n("x"), 1, Ipv4Addr::LOCALHOST);
        let m = DnsMessage {
            answers: vec![rr; 65536],
            ..DnsMessage::default()
        };
        assert_eq!(encode_message(&m), Err(WireError::TooManyRecords));
    }

    #[test]
    fn mismatched_rdata_variant_rejected() {
        let mut rr = Record::a(n("x"), 1, Ipv4Addr::LOCALHOST);
        rr.rtype = RecordType::NS;
        let mut m = DnsMessage::default();
        m.answers.push(rr);
        assert!(matches!(encode_message(&m), Err(WireError::BadRdata { rtype: 2, .. })));
    }

    #[test]
    fn soa_round_trip() {
        let mut m = DnsMessage::response_to(
            &DnsMessage::query(9, Question::new(n("x.Example.org"), RecordType::A)),
            Rcode::NXDOMAIN,
        );
        m.authority.push(Record::soa(n("example.org"), 300, 60));
        let back = decode_message(&encode_message(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
