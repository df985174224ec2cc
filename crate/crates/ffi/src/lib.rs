//! C ABI over `dns-antidote`.
//!
//! Every fallible function returns an [`AdtStatus`] and writes its result through
//! an out-pointer. On failure, [`adt_last_error_message`] describes the error for
//! the calling thread. Strings returned to the caller are freed with
//! [`adt_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::{IpAddr, SocketAddr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;

use dns_antidote::entropy::{
    apply_0x20, count_letters, entropy_budget, spoof_success_probability, validate_0x20,
    EntropyConfig, PortRange,
};
use dns_antidote::sim::{run_experiment, to_csv, ExperimentConfig};
use dns_antidote::wire::{decode_message, encode_message, DnsMessage, DnsName};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdtStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidUtf8 = -2,
    InvalidName = -3,
    InvalidArgument = -4,
    DecodeError = -5,
    EncodeError = -6,
    ConfigError = -7,
    BufferTooSmall = -8,
    Panic = -99,
}

/// Bits of entropy per validation field.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdtEntropyBudget {
    pub txid_bits: f64,
    pub port_bits: f64,
    pub src_ip_bits: f64,
    pub dst_ip_bits: f64,
    pub case_bits: f64,
    pub total_bits: f64,
}

/// Opaque entropy configuration.
pub struct AdtEntropyConfig {
    inner: EntropyConfig,
}

/// Opaque decoded DNS message.
pub struct AdtMessage {
    inner: DnsMessage,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: AdtStatus, msg: impl Into<String>) -> AdtStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AdtStatus) -> AdtStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AdtStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdtStatus> {
    if p.is_null() {
        return Err(fail(AdtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AdtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn name_arg(p: *const c_char, what: &str) -> Result<DnsName, AdtStatus> {
    str_arg(p, what)?
        .parse()
        .map_err(|e| fail(AdtStatus::InvalidName, format!("{what}: {e}")))
}

fn out_string(s: String, out: *mut *mut c_char) -> AdtStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: caller checked `out` is non-null.
            unsafe { *out = c.into_raw() };
            AdtStatus::Ok
        }
        Err(_) => fail(AdtStatus::EncodeError, "string contains a NUL byte"),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(AdtStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn adt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of ASCII letters in `name`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_count_letters(name: *const c_char, out: *mut usize) -> AdtStatus {
    guard(|| {
        non_null!(out);
        let n = try_ffi!(name_arg(name, "name"));
        *out = count_letters(&n);
        AdtStatus::Ok
    })
}

/// Randomises the letter case of `name` with an RNG seeded by `seed`. The result
/// is written to `*out` and must be freed with [`adt_string_free`].
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_encode_0x20(
    name: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> AdtStatus {
    guard(|| {
        non_null!(out);
        let n = try_ffi!(name_arg(name, "name"));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        out_string(apply_0x20(&n, &mut rng).0.to_string(), out)
    })
}

/// Whether `received` echoes `sent` byte for byte.
///
/// # Safety
/// Both names must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_validate_0x20(
    sent: *const c_char,
    received: *const c_char,
    out: *mut bool,
) -> AdtStatus {
    guard(|| {
        non_null!(out);
        let s = try_ffi!(name_arg(sent, "sent"));
        let r = try_ffi!(name_arg(received, "received"));
        *out = validate_0x20(&s, &r);
        AdtStatus::Ok
    })
}

/// `1 - (1 - 2^-bits)^packets`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_spoof_success_probability(
    bits: f64,
    packets: u64,
    out: *mut f64,
) -> AdtStatus {
    guard(|| {
        non_null!(out);
        match spoof_success_probability(bits, packets) {
            Ok(p) => {
                *out = p;
                AdtStatus::Ok
            }
            Err(e) => fail(AdtStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// A configuration with every mechanism at its default. Free with
/// [`adt_entropy_config_free`].
#[no_mangle]
pub extern "C" fn adt_entropy_config_new() -> *mut AdtEntropyConfig {
    let inner = EntropyConfig {
        dst_candidates: synthetic_addrs(1)
            .into_iter()
            .map(|ip| SocketAddr::new(ip, 53))
            .collect(),
        ..EntropyConfig::default()
    };
    Box::into_raw(Box::new(AdtEntropyConfig { inner }))
}

/// # Safety
/// `cfg` must be NULL or a handle from [`adt_entropy_config_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_free(cfg: *mut AdtEntropyConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn synthetic_addrs(n: usize) -> Vec<IpAddr> {
    (0..n as u32).map(|i| IpAddr::from((i + 1).to_be_bytes())).collect()
}

unsafe fn with_cfg(
    cfg: *mut AdtEntropyConfig,
    f: impl FnOnce(&mut EntropyConfig) -> AdtStatus,
) -> AdtStatus {
    guard(|| {
        non_null!(cfg);
        f(&mut (*cfg).inner)
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_txid(
    cfg: *mut AdtEntropyConfig,
    randomize: bool,
    bits: u8,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        if !(1..=16).contains(&bits) {
            return fail(AdtStatus::InvalidArgument, "txid bits must be within 1..=16");
        }
        c.randomize_txid = randomize;
        c.txid_bits = bits;
        AdtStatus::Ok
    })
}

/// Enables or disables source port randomisation over `[lo, hi]`. The range is
/// not restricted here so that budgets for any range can be computed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_spr(
    cfg: *mut AdtEntropyConfig,
    enabled: bool,
    lo: u16,
    hi: u16,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        if lo > hi {
            return fail(AdtStatus::InvalidArgument, "empty port range");
        }
        c.spr_enabled = enabled;
        c.port_range = PortRange::new(lo, hi);
        AdtStatus::Ok
    })
}

/// Size of the source address pool.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_pool_size(
    cfg: *mut AdtEntropyConfig,
    n: usize,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        if n == 0 || n > u32::MAX as usize - 1 {
            return fail(AdtStatus::InvalidArgument, "pool size must be at least 1");
        }
        c.ip_pool = synthetic_addrs(n);
        AdtStatus::Ok
    })
}

/// Number of authority addresses a query may go to.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_dst_count(
    cfg: *mut AdtEntropyConfig,
    n: usize,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        if n == 0 || n > u32::MAX as usize - 1 {
            return fail(AdtStatus::InvalidArgument, "destination count must be at least 1");
        }
        c.dst_candidates = synthetic_addrs(n)
            .into_iter()
            .map(|ip| SocketAddr::new(ip, 53))
            .collect();
        AdtStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_0x20(
    cfg: *mut AdtEntropyConfig,
    enabled: bool,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        c.encode_0x20 = enabled;
        AdtStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_config_set_short_query(
    cfg: *mut AdtEntropyConfig,
    enabled: bool,
) -> AdtStatus {
    with_cfg(cfg, |c| {
        c.short_query_extension = enabled;
        AdtStatus::Ok
    })
}

/// Entropy budget of a query for `name` under `cfg`.
///
/// # Safety
/// `cfg` must be a live handle, `name` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adt_entropy_budget(
    cfg: *const AdtEntropyConfig,
    name: *const c_char,
    out: *mut AdtEntropyBudget,
) -> AdtStatus {
    guard(|| {
        non_null!(cfg, out);
        let n = try_ffi!(name_arg(name, "name"));
        let b = entropy_budget(&(*cfg).inner, &n);
        *out = AdtEntropyBudget {
            txid_bits: b.txid_bits,
            port_bits: b.port_bits,
            src_ip_bits: b.src_ip_bits,
            dst_ip_bits: b.dst_ip_bits,
            case_bits: b.case_bits,
            total_bits: b.total_bits,
        };
        AdtStatus::Ok
    })
}

/// Decodes a DNS message. Free the handle with [`adt_message_free`].
///
/// # Safety
/// `buf` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_message_decode(
    buf: *const u8,
    len: usize,
    out: *mut *mut AdtMessage,
) -> AdtStatus {
    guard(|| {
        non_null!(buf, out);
        let bytes = std::slice::from_raw_parts(buf, len);
        match decode_message(bytes) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(AdtMessage { inner: m }));
                AdtStatus::Ok
            }
            Err(e) => fail(AdtStatus::DecodeError, e.to_string()),
        }
    })
}

/// # Safety
/// `msg` must be NULL or a handle from [`adt_message_decode`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adt_message_free(msg: *mut AdtMessage) {
    if !msg.is_null() {
        drop(Box::from_raw(msg));
    }
}

/// # Safety
/// `msg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_message_txid(msg: *const AdtMessage, out: *mut u16) -> AdtStatus {
    guard(|| {
        non_null!(msg, out);
        *out = (*msg).inner.header.id;
        AdtStatus::Ok
    })
}

/// Question name exactly as carried, letter case included. Free with
/// [`adt_string_free`].
///
/// # Safety
/// `msg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_message_qname(
    msg: *const AdtMessage,
    out: *mut *mut c_char,
) -> AdtStatus {
    guard(|| {
        non_null!(msg, out);
        match &(*msg).inner.question {
            Some(q) => out_string(q.name.to_string(), out),
            None => fail(AdtStatus::InvalidArgument, "message has no question"),
        }
    })
}

/// # Safety
/// `msg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_message_answer_count(
    msg: *const AdtMessage,
    out: *mut usize,
) -> AdtStatus {
    guard(|| {
        non_null!(msg, out);
        *out = (*msg).inner.answers.len();
        AdtStatus::Ok
    })
}

/// Encodes `msg` into `buf`. `*written` receives the encoded length; when it
/// exceeds `cap` nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `msg` must be a live handle, `buf` must point to `cap` writable bytes (may be
/// NULL when `cap` is 0), and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_message_encode(
    msg: *const AdtMessage,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> AdtStatus {
    guard(|| {
        non_null!(msg, written);
        let bytes = match encode_message(&(*msg).inner) {
            Ok(b) => b,
            Err(e) => return fail(AdtStatus::EncodeError, e.to_string()),
        };
        *written = bytes.len();
        if bytes.len() > cap {
            return fail(AdtStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
        }
        non_null!(buf);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        AdtStatus::Ok
    })
}

/// Runs an experiment described by key-value `config_text` and writes the CSV
/// table to `*out_csv`. Free it with [`adt_string_free`].
///
/// # Safety
/// `config_text` must be a NUL-terminated string; `out_csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adt_experiment_run(
    config_text: *const c_char,
    out_csv: *mut *mut c_char,
) -> AdtStatus {
    guard(|| {
        non_null!(out_csv);
        let text = try_ffi!(str_arg(config_text, "config_text"));
        match ExperimentConfig::parse(text) {
            Ok(cfg) => out_string(to_csv(&run_experiment(&cfg)), out_csv),
            Err(e) => fail(AdtStatus::ConfigError, e.to_string()),
        }
    })
}
