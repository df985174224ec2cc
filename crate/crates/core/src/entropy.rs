//! Unilateral entropy mechanisms and the arithmetic of what they buy.
//!
//! A spoofed response is only accepted if it echoes every field the resolver chose
//! for the query: transaction ID, source port, source address, the authority address
//! it was sent to, and (with 0x20 encoding) the exact letter case of the query name.
//! Each mechanism here randomises one of those fields; [`entropy_budget`] adds up the
//! bits, and [`spoof_success_probability`] turns bits into an attacker's odds.

use std::net::{IpAddr, SocketAddr};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::wire::{DnsName, RecordType, WireError};

pub const DEFAULT_FIXED_PREFIX: &str = "FixedRandomisationString";
pub const DEFAULT_MIN_LETTERS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("extended name would be too long: {0}")]
    ExtendedNameTooLong(WireError),
    #[error("invalid entropy configuration: {0}")]
    InvalidConfig(String),
    #[error("negative or non-finite input: {0}")]
    NegativeInput(f64),
}

/// Inclusive range of UDP source ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortRange {
    pub lo: u16,
    pub hi: u16,
}

impl PortRange {
    pub const fn new(lo: u16, hi: u16) -> Self {
        PortRange { lo, hi }
    }

    /// Number of ports in the range; zero when `lo > hi`.
    pub fn len(&self) -> u32 {
        if self.lo > self.hi {
            0
        } else {
            self.hi as u32 - self.lo as u32 + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, port: u16) -> bool {
        (self.lo..=self.hi).contains(&port)
    }
}

impl Default for PortRange {
    fn default() -> Self {
        PortRange::new(1024, 65535)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyConfig {
    pub randomize_txid: bool,
    /// Width of the transaction-ID space. 16 in deployment; the simulator shrinks
    /// it so rare events show up in thousands of trials.
    pub txid_bits: u8,
    pub spr_enabled: bool,
    pub port_range: PortRange,
    /// Source port used for every query when SPR is off.
    pub fixed_port: u16,
    /// Source addresses owned by the resolver; more than one enables the NAT antidote.
    pub ip_pool: Vec<IpAddr>,
    /// Authority (or upstream) addresses a query may be sent to.
    pub dst_candidates: Vec<SocketAddr>,
    pub encode_0x20: bool,
    pub short_query_extension: bool,
    pub fixed_prefix: String,
    pub min_letters: usize,
    pub rng_seed: u64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            randomize_txid: true,
            txid_bits: 16,
            spr_enabled: true,
            port_range: PortRange::default(),
            fixed_port: 10053,
            ip_pool: vec![IpAddr::from([0, 0, 0, 0])],
            dst_candidates: Vec::new(),
            encode_0x20: true,
            short_query_extension: false,
            fixed_prefix: DEFAULT_FIXED_PREFIX.to_string(),
            min_letters: DEFAULT_MIN_LETTERS,
            rng_seed: 0,
        }
    }
}

impl EntropyConfig {
    /// Transaction ID only: no SPR, one source address, no 0x20.
    pub fn txid_only() -> Self {
        EntropyConfig {
            spr_enabled: false,
            encode_0x20: false,
            ..EntropyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EntropyError> {
        let invalid = |m: &str| Err(EntropyError::InvalidConfig(m.to_string()));
        if !(1..=16).contains(&self.txid_bits) {
            return invalid("txid_bits must be within 1..=16");
        }
        if self.spr_enabled {
            if self.port_range.is_empty() {
                return invalid("port range is empty");
            }
            if self.port_range.lo < 1024 {
                return invalid("port range must lie within 1024..=65535");
            }
        }
        if self.ip_pool.is_empty() {
            return Err(EntropyError::EmptyPool("source address"));
        }
        for (i, a) in self.ip_pool.iter().enumerate() {
            if self.ip_pool[..i].contains(a) {
                return invalid("source address pool has duplicates");
            }
        }
        if self.dst_candidates.is_empty() {
            return Err(EntropyError::EmptyPool("destination address"));
        }
        if DnsName::root().prepend(self.fixed_prefix.as_bytes()).is_err() {
            return invalid("fixed prefix is not a valid label");
        }
        Ok(())
    }
}

/// Independent RNG stream for one logical query, derived from `(seed, serial)`.
pub fn query_rng(seed: u64, serial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(serial);
    rng
}

/// Which letters of a name were upper-cased, in byte order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaseMask(pub Vec<bool>);

impl CaseMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The mask as an integer, first letter in the least significant bit.
    /// Only meaningful for masks of at most 64 letters.
    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &up)| acc | ((up as u64) << i))
    }
}

/// `l(d)`: the number of ASCII letters in `name`.
pub fn count_letters(name: &DnsName) -> usize {
    name.letter_count()
}

/// Randomly upper- or lower-cases every letter of `name`.
pub fn apply_0x20<R: Rng + ?Sized>(name: &DnsName, rng: &mut R) -> (DnsName, CaseMask) {
    let mut mask = Vec::with_capacity(name.letter_count());
    let cased = name.map_bytes(|b| {
        if b.is_ascii_alphabetic() {
            let upper = rng.random::<bool>();
            mask.push(upper);
            if upper {
                b.to_ascii_uppercase()
            } else {
                b.to_ascii_lowercase()
            }
        } else {
            b
        }
    });
    (cased, CaseMask(mask))
}

/// A response passes 0x20 validation only if it echoes the sent name byte for byte.
pub fn validate_0x20(sent: &DnsName, received: &DnsName) -> bool {
    sent == received
}

pub fn pick_txid<R: Rng + ?Sized>(cfg: &EntropyConfig, rng: &mut R) -> u16 {
    let bits = cfg.txid_bits.clamp(1, 16) as u32;
    (rng.random::<u32>() & ((1u32 << bits) - 1)) as u16
}

pub fn pick_source_port<R: Rng + ?Sized>(
    cfg: &EntropyConfig,
    rng: &mut R,
) -> Result<u16, EntropyError> {
    if !cfg.spr_enabled {
        return Ok(cfg.fixed_port);
    }
    if cfg.port_range.is_empty() {
        return Err(EntropyError::EmptyPool("source port"));
    }
    Ok(rng.random_range(cfg.port_range.lo..=cfg.port_range.hi))
}

pub fn pick_source_ip<R: Rng + ?Sized>(
    cfg: &EntropyConfig,
    rng: &mut R,
) -> Result<IpAddr, EntropyError> {
    match cfg.ip_pool.as_slice() {
        [] => Err(EntropyError::EmptyPool("source address")),
        [only] => Ok(*only),
        pool => Ok(*pool.choose(rng).expect("nonempty")),
    }
}

pub fn pick_dst<R: Rng + ?Sized>(
    cfg: &EntropyConfig,
    rng: &mut R,
) -> Result<SocketAddr, EntropyError> {
    match cfg.dst_candidates.as_slice() {
        [] => Err(EntropyError::EmptyPool("destination address")),
        [only] => Ok(*only),
        pool => Ok(*pool.choose(rng).expect("nonempty")),
    }
}

/// Prepends the fixed prefix label when `name` has fewer than `min_letters` letters.
pub fn extend_short_query(name: &DnsName, cfg: &EntropyConfig) -> Result<DnsName, EntropyError> {
    if count_letters(name) >= cfg.min_letters {
        return Ok(name.clone());
    }
    name.prepend(cfg.fixed_prefix.as_bytes())
        .map_err(EntropyError::ExtendedNameTooLong)
}

/// The secret per-query state an off-path attacker must reproduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationTuple {
    pub txid: u16,
    /// Our address: source IP and source port of the query.
    pub src: SocketAddr,
    /// The authority the query went to.
    pub dst: SocketAddr,
    /// The query name exactly as sent, including its 0x20 case pattern.
    pub qname: DnsName,
    pub qtype: RecordType,
    pub qclass: u16,
}

impl ValidationTuple {
    pub fn src_ip(&self) -> IpAddr {
        self.src.ip()
    }

    pub fn src_port(&self) -> u16 {
        self.src.port()
    }

    pub fn dst_ip(&self) -> IpAddr {
        self.dst.ip()
    }
}

/// Draws a complete tuple for a query for `name`. `sequential_txid` is used when
/// transaction-ID randomisation is off.
pub fn draw_tuple<R: Rng + ?Sized>(
    cfg: &EntropyConfig,
    name: &DnsName,
    qtype: RecordType,
    qclass: u16,
    sequential_txid: u16,
    rng: &mut R,
) -> Result<(ValidationTuple, CaseMask), EntropyError> {
    let txid = if cfg.randomize_txid {
        pick_txid(cfg, rng)
    } else {
        sequential_txid
    };
    let port = pick_source_port(cfg, rng)?;
    let ip = pick_source_ip(cfg, rng)?;
    let dst = pick_dst(cfg, rng)?;
    let (qname, mask) = if cfg.encode_0x20 {
        apply_0x20(name, rng)
    } else {
        (name.clone(), CaseMask::default())
    };
    Ok((
        ValidationTuple {
            txid,
            src: SocketAddr::new(ip, port),
            dst,
            qname,
            qtype,
            qclass,
        },
        mask,
    ))
}

/// Bits of unpredictability per field, as `log2` of each field's search space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntropyBudget {
    pub txid_bits: f64,
    pub port_bits: f64,
    pub src_ip_bits: f64,
    pub dst_ip_bits: f64,
    pub case_bits: f64,
    pub total_bits: f64,
}

impl EntropyBudget {
    pub fn from_parts(txid: f64, port: f64, src_ip: f64, dst_ip: f64, case: f64) -> Self {
        EntropyBudget {
            txid_bits: txid,
            port_bits: port,
            src_ip_bits: src_ip,
            dst_ip_bits: dst_ip,
            case_bits: case,
            total_bits: txid + port + src_ip + dst_ip + case,
        }
    }
}

fn log2_count(n: usize) -> f64 {
    (n.max(1) as f64).log2()
}

pub fn entropy_budget(cfg: &EntropyConfig, name: &DnsName) -> EntropyBudget {
    let txid = if cfg.randomize_txid {
        cfg.txid_bits as f64
    } else {
        0.0
    };
    let port = if cfg.spr_enabled {
        log2_count(cfg.port_range.len() as usize)
    } else {
        0.0
    };
    let case = if cfg.encode_0x20 {
        let effective = if cfg.short_query_extension {
            extend_short_query(name, cfg).unwrap_or_else(|_| name.clone())
        } else {
            name.clone()
        };
        count_letters(&effective) as f64
    } else {
        0.0
    };
    EntropyBudget::from_parts(
        txid,
        port,
        log2_count(cfg.ip_pool.len()),
        log2_count(cfg.dst_candidates.len()),
        case,
    )
}

/// Probability that at least one of `n_spoofed` independent uniform guesses hits a
/// secret carrying `bits` bits of entropy: `1 - (1 - 2^-bits)^n`.
pub fn spoof_success_probability(bits: f64, n_spoofed: u64) -> Result<f64, EntropyError> {
    if !bits.is_finite() || bits < 0.0 {
        return Err(EntropyError::NegativeInput(bits));
    }
    if n_spoofed == 0 {
        return Ok(0.0);
    }
    let per_packet = (-bits).exp2();
    if per_packet >= 1.0 {
        return Ok(1.0);
    }
    let p = -(n_spoofed as f64 * (-per_packet).ln_1p()).exp_m1();
    Ok(p.clamp(0.0, 1.0))
}
