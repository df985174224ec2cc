//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod support;

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dns_antidote::entropy::{
    apply_0x20, count_letters, entropy_budget, spoof_success_probability, validate_0x20,
    EntropyConfig, PortRange,
};
use dns_antidote::sim::{
    derive_seed, kaminsky_query_name, run_trial, wilson_interval, AttackOutcome,
    Scenario,
};
use dns_antidote::sim::experiment::run_cell;
use dns_antidote::wire::{
    decode_message, encode_message, DnsHeader, DnsMessage, Question, RData, Rcode, Record,
    RecordType,
};
use dns_antidote::DnsName;

use support::{addrs, Client, Forgery, Gateway, Upstream, FORGED_ADDR};

const SEED: u64 = 0x5eed_acce;
const TRIALS: u64 = 2000;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, id: &str, what: &str, limit: Duration, f: impl FnOnce() -> Result<String, String>) {
        let start = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(panic_message(p)));
        let took = start.elapsed();
        let res = match res {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match res {
            Ok(detail) => println!("PASS {id} {what} ({took:.2?}): {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {id} {what} ({took:.2?}): {detail}");
            }
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn name(s: &str) -> DnsName {
    s.parse().unwrap()
}

fn scenario(defense: &str, attacker: Option<&str>) -> Scenario {
    Scenario::new(
        defense.parse().expect("defense"),
        attacker.map(|a| a.parse().expect("attacker")),
    )
}

fn count(outcomes: &[AttackOutcome], f: impl Fn(&AttackOutcome) -> bool) -> u64 {
    outcomes.iter().filter(|o| f(o)).count() as u64
}

fn entropy_arithmetic() -> Result<String, String> {
    let letters = [("www.google.com", 12), ("a9.com", 4)];
    for (n, want) in letters {
        let got = count_letters(&name(n));
        ensure(got == want, || format!("letters({n}) = {got}, want {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let k = kaminsky_query_name(&name("google.com"), &mut rng);
    ensure(count_letters(&k) == 9, || format!("letters({k}) = {}", count_letters(&k)))?;

    let base = EntropyConfig {
        dst_candidates: vec!["192.0.2.1:53".parse().unwrap()],
        ..EntropyConfig::txid_only()
    };
    let pool = EntropyConfig {
        ip_pool: (0..2048u32).map(|i| IpAddr::from((0x0a00_0000 + i).to_be_bytes())).collect(),
        ..base.clone()
    };
    let b = entropy_budget(&pool, &name("www.google.com"));
    ensure(b.src_ip_bits == 11.0, || format!("pool 2048 gives {} bits", b.src_ip_bits))?;

    let dst = EntropyConfig {
        dst_candidates: (1..=3u8).map(|i| SocketAddr::new(Ipv4Addr::new(192, 0, 2, i).into(), 53)).collect(),
        ..base.clone()
    };
    let b = entropy_budget(&dst, &name("www.google.com"));
    ensure(b.dst_ip_bits == 3f64.log2(), || format!("3 destinations give {} bits", b.dst_ip_bits))?;

    let spr = EntropyConfig {
        spr_enabled: true,
        port_range: PortRange::new(0, 65535),
        ..base
    };
    let b = entropy_budget(&spr, &name("www.google.com"));
    ensure(b.txid_bits == 16.0 && b.port_bits == 16.0 && b.total_bits == 32.0, || {
        format!("txid + SPR = {} bits", b.total_bits)
    })?;
    Ok("all values exact".into())
}

fn monte_carlo(bits: u32, n: u64, samples: u64, seed: u64) -> f64 {
    let space = 1u32 << bits;
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s));
            (0..n).any(|_| rng.random_range(0..space) == 0) as u64
        })
        .sum();
    hits as f64 / samples as f64
}

fn oracle_equivalence() -> Result<String, String> {
    let cells: Vec<(u8, u64)> = [4u8, 8, 12]
        .iter()
        .flat_map(|&b| [1u64, 16, 256].map(|n| (b, n)))
        .collect();
    let mut worst_mc: f64 = 0.0;
    for &(b, n) in &cells {
        let p = spoof_success_probability(b as f64, n).map_err(|e| e.to_string())?;
        let mc = monte_carlo(b as u32, n, 1_000_000, SEED ^ (b as u64) << 32 ^ n);
        worst_mc = worst_mc.max((mc - p).abs());
        ensure((mc - p).abs() <= 0.01, || format!("b={b} n={n}: formula {p:.5}, Monte Carlo {mc:.5}"))?;
    }
    let mut lines = Vec::new();
    for &(b, n) in &cells {
        let p = spoof_success_probability(b as f64, n).unwrap();
        let mut sc = scenario("txid-only", Some(&format!("blind-flood:{n}")));
        sc.txid_bits = b;
        let cfg = sc.defense.resolver_config(b, 0);
        let bits = entropy_budget(&cfg.entropy, &sc.target).total_bits;
        ensure(bits == b as f64, || format!("scenario carries {bits} bits, want {b}"))?;
        let out = run_cell(&sc, TRIALS, SEED);
        let s = count(&out, |o| o.poisoned);
        let (lo, hi) = wilson_interval(s, TRIALS, 3.0);
        ensure((lo..=hi).contains(&p), || {
            format!("b={b} n={n}: {s}/{TRIALS} poisoned, 3-sigma [{lo:.4}, {hi:.4}] excludes {p:.4}")
        })?;
        lines.push(format!("b{b}n{n}={s}"));
    }
    // Granted fields drop out of the budget; three authorities add log2(3) bits.
    let mut sc = scenario("spr+0x20+dst=3", Some("blind-flood:64:port,case"));
    sc.txid_bits = 6;
    let bits = 6.0 + 3f64.log2();
    let p = spoof_success_probability(bits, 64).unwrap();
    let s = count(&run_cell(&sc, TRIALS, SEED), |o| o.poisoned);
    let (lo, hi) = wilson_interval(s, TRIALS, 3.0);
    ensure((lo..=hi).contains(&p), || {
        format!("granted port+case: {s}/{TRIALS}, 3-sigma [{lo:.4}, {hi:.4}] excludes {p:.4}")
    })?;
    lines.push(format!("granted={s}"));

    // Full scale: 16-bit txid plus SPR.
    let mut sc = scenario("spr", Some("blind-flood:16"));
    sc.txid_bits = 16;
    let full_trials = 10_000;
    let s = count(&run_cell(&sc, full_trials, SEED), |o| o.poisoned);
    let rate = s as f64 / full_trials as f64;
    ensure(s == 0 && rate < 1e-4, || format!("full scale poisoned {s}/{full_trials}"))?;
    lines.push(format!("full-scale=0/{full_trials}"));

    Ok(format!(
        "Monte Carlo max |err| {worst_mc:.4}; simulated poisonings {}",
        lines.join(" ")
    ))
}

fn sandwich_soundness() -> Result<String, String> {
    let mut detail = Vec::new();
    for defense in ["txid+sandwich", "full+sandwich"] {
        for attacker in dns_antidote::sim::experiment::DEFAULT_ATTACKERS {
            let mut sc = scenario(defense, Some(attacker));
            sc.txid_bits = 8;
            sc.windows = 4;
            let out = run_cell(&sc, TRIALS, SEED);
            let forged = count(&out, |o| o.poisoned);
            ensure(forged == 0, || format!("{defense} vs {attacker}: {forged} forged cache writes"))?;
            if defense == "txid+sandwich" {
                let act = count(&out, |o| o.sandwich_activations > 0);
                detail.push(format!("{attacker}: 0/{TRIALS} poisoned, {act} sandwiched"));
            }
        }
    }
    for defense in ["txid+sandwich", "full+sandwich"] {
        for attacker in [None, Some("blind-flood:16")] {
            let mut sc = scenario(defense, attacker);
            sc.txid_bits = 8;
            sc.net.reorder_prob = 0.1;
            let out = run_cell(&sc, TRIALS, SEED);
            let ok = count(&out, |o| o.resolved_correctly);
            let rate = ok as f64 / TRIALS as f64;
            let label = attacker.unwrap_or("no attacker");
            ensure(rate >= 0.95, || format!("{defense} with {label}, 10% reordering: legitimate success {rate:.4}"))?;
            ensure(count(&out, |o| o.poisoned) == 0, || format!("{defense} with {label}: poisoned under reordering"))?;
            detail.push(format!("{defense}/{label} legit {rate:.4}"));
        }
    }
    Ok(detail.join("; "))
}

/// Pooled two-proportion z statistic for `a/n` versus `b/n`.
fn two_proportion_z(a: u64, b: u64, n: u64) -> f64 {
    let n = n as f64;
    let (pa, pb) = (a as f64 / n, b as f64 / n);
    let pool = (a + b) as f64 / (2.0 * n);
    let se = (pool * (1.0 - pool) * 2.0 / n).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (pa - pb) / se
}

fn nat_equivalence() -> Result<String, String> {
    let rate = |d: &str| {
        let mut sc = scenario(d, Some("blind-flood:16"));
        sc.txid_bits = 8;
        count(&run_cell(&sc, TRIALS, SEED), |o| o.poisoned)
    };
    let seq = rate("spr+nat=sequential");
    let txid = rate("txid-only");
    let pass = rate("spr+nat=passthrough");
    // Two-sided and one-sided normal quantiles at alpha = 0.01.
    let z_eq = two_proportion_z(seq, txid, TRIALS);
    ensure(z_eq.abs() < 2.5758, || {
        format!("sequential NAT {seq}/{TRIALS} differs from txid-only {txid}/{TRIALS} (z = {z_eq:.3})")
    })?;
    let z_gt = two_proportion_z(seq, pass, TRIALS);
    ensure(z_gt > 2.3263, || {
        format!("sequential NAT {seq}/{TRIALS} not above passthrough {pass}/{TRIALS} (z = {z_gt:.3})")
    })?;
    Ok(format!(
        "sequential {seq}, txid-only {txid}, passthrough {pass} of {TRIALS}; z(eq) = {z_eq:.3}, z(gt) = {z_gt:.3}"
    ))
}

fn random_name(rng: &mut impl Rng) -> DnsName {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
    let labels: Vec<Vec<u8>> = (0..rng.random_range(1..=4))
        .map(|_| {
            (0..rng.random_range(1..=20))
                .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
                .collect()
        })
        .collect();
    DnsName::from_labels(labels).unwrap()
}

fn flip_one_letter(n: &DnsName, which: usize) -> DnsName {
    let mut seen = 0;
    let labels: Vec<Vec<u8>> = n
        .labels()
        .map(|l| {
            l.iter()
                .map(|&c| {
                    if c.is_ascii_alphabetic() {
                        seen += 1;
                        if seen - 1 == which {
                            return c ^ 0x20;
                        }
                    }
                    c
                })
                .collect()
        })
        .collect();
    DnsName::from_labels(labels).unwrap()
}

fn case_0x20() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut flips = 0;
    for _ in 0..10_000 {
        let n = random_name(&mut rng);
        let (sent, mask) = apply_0x20(&n, &mut rng);
        ensure(sent.eq_ignore_case(&n) && mask.len() == count_letters(&n), || format!("{n} -> {sent}"))?;
        ensure(validate_0x20(&sent, &sent.clone()), || format!("{sent} does not validate against itself"))?;
        let letters = count_letters(&n);
        if letters > 0 {
            let flipped = flip_one_letter(&sent, rng.random_range(0..letters));
            ensure(!validate_0x20(&sent, &flipped), || format!("{sent} accepted flipped {flipped}"))?;
            flips += 1;
        }
    }
    let mut runs = 0;
    for d in ["txid+0x20", "spr+0x20", "full", "full+sandwich"] {
        for seed in 0..25 {
            let mut sc = scenario(d, None);
            sc.case_preserving = false;
            let out = run_trial(&sc, derive_seed(SEED, seed));
            ensure(out.failed_closed && !out.resolved_correctly && !out.poisoned, || {
                format!("{d}: lowercasing authority gave {out:?}")
            })?;
            runs += 1;
        }
    }
    Ok(format!(
        "10000 round trips, {flips} single flips rejected, {runs} lowercasing-authority runs failed closed"
    ))
}

fn random_message(rng: &mut impl Rng) -> DnsMessage {
    let header = DnsHeader {
        id: rng.random(),
        qr: rng.random(),
        opcode: rng.random_range(0..16),
        aa: rng.random(),
        tc: rng.random(),
        rd: rng.random(),
        ra: rng.random(),
        z: rng.random_range(0..8),
        rcode: Rcode(rng.random_range(0..16)),
    };
    let question = rng
        .random_bool(0.9)
        .then(|| Question::new(random_name(rng), RecordType::from(rng.random_range(1..300u16))));
    let section = |rng: &mut ChaCha8Rng| -> Vec<Record> {
        (0..rng.random_range(0..4))
            .map(|_| {
                let owner = random_name(rng);
                let ttl = rng.random();
                match rng.random_range(0..5) {
                    0 => Record::a(owner, ttl, Ipv4Addr::from(rng.random::<u32>())),
                    1 => Record::ns(owner, ttl, random_name(rng)),
                    2 => Record::soa(owner, ttl, rng.random()),
                    3 => Record {
                        name: owner,
                        rtype: RecordType::CNAME,
                        class: 1,
                        ttl,
                        rdata: RData::Cname(random_name(rng)),
                    },
                    _ => {
                        let len = rng.random_range(0..40);
                        Record {
                            name: owner,
                            rtype: RecordType::Other(rng.random_range(7..250)),
                            class: rng.random_range(1..5),
                            ttl,
                            rdata: RData::Opaque((0..len).map(|_| rng.random()).collect()),
                        }
                    }
                }
            })
            .collect()
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    DnsMessage {
        header,
        question,
        answers: section(&mut r),
        authority: section(&mut r),
        additional: section(&mut r),
    }
}

fn codec() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut corpus = Vec::new();
    for _ in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode_message(&m).map_err(|e| format!("encode failed: {e} for {m:?}"))?;
        let back = decode_message(&bytes).map_err(|e| format!("decode failed: {e} for {m:?}"))?;
        ensure(back == m, || format!("round trip changed {m:?} into {back:?}"))?;
        corpus.push(bytes);
    }
    let mut errors = 0u32;
    for i in 0..100_000 {
        let buf: Vec<u8> = match i % 3 {
            0 => (0..rng.random_range(0..600)).map(|_| rng.random()).collect(),
            1 => {
                let mut b = corpus[rng.random_range(0..corpus.len())].clone();
                for _ in 0..rng.random_range(1..8) {
                    let at = rng.random_range(0..b.len());
                    b[at] = rng.random();
                }
                b
            }
            _ => {
                let b = &corpus[rng.random_range(0..corpus.len())];
                b[..rng.random_range(0..b.len())].to_vec()
            }
        };
        match panic::catch_unwind(|| decode_message(&buf)) {
            Ok(Ok(_)) => {}
            Ok(Err(_)) => errors += 1,
            Err(p) => return Err(format!("decoder panicked on {buf:02x?}: {}", panic_message(p))),
        }
    }
    Ok(format!("10000 round trips; 100000 fuzzed buffers, {errors} rejected with declared errors, no panics"))
}

fn gateway_loopback() -> Result<String, String> {
    let target = name("www.example.com");
    let upstream = Upstream::start(
        "example.com",
        vec![(target, Forgery::WrongTxid), (name("ns.example.com"), Forgery::WrongSource)],
    );
    let gw = Gateway::spawn(upstream.addr, SEED, &[]);
    let client = Client::new(gw.client);
    let mut snaps = vec![gw.scrape()];
    ensure(snaps[0] == Default::default(), || format!("fresh metrics not zero: {:?}", snaps[0]))?;

    let truth = Ipv4Addr::new(192, 0, 2, 80);
    let r = client.query(0x1111, "www.example.com", RecordType::A);
    ensure(r.header.rcode == Rcode::NOERROR && addrs(&r) == vec![truth], || format!("attacked lookup answered {r:?}"))?;
    ensure(r.header.id == 0x1111, || "client txid not preserved".into())?;
    snaps.push(gw.scrape());

    let again = client.query(0x2222, "WWW.example.COM", RecordType::A);
    ensure(addrs(&again) == vec![truth], || format!("cached lookup answered {again:?}"))?;
    ensure(again.question.as_ref().map(|q| &q.name) == Some(&name("WWW.example.COM")), || {
        format!("question spelling not preserved: {:?}", again.question)
    })?;
    snaps.push(gw.scrape());

    let ns = client.query(0x3333, "ns.example.com", RecordType::A);
    ensure(addrs(&ns) == vec![Ipv4Addr::new(192, 0, 2, 53)], || format!("ns lookup answered {ns:?}"))?;
    let mut names = Vec::new();
    for i in 0..24u16 {
        let n = format!("missing-host-{i}.example.com");
        let r = client.query(0x4000 + i, &n, RecordType::A);
        ensure(r.header.rcode == Rcode::NXDOMAIN && r.answers.is_empty(), || format!("{n} answered {r:?}"))?;
        names.push(name(&n));
        if i % 8 == 7 {
            snaps.push(gw.scrape());
        }
    }
    let bad = client.query(0x5555, "www.elsewhere.org", RecordType::A);
    ensure(bad.header.rcode != Rcode::NOERROR || bad.answers.is_empty(), || "refused name answered".into())?;
    snaps.push(gw.scrape());

    let seen = upstream.observed();
    let ours: Vec<_> = seen
        .iter()
        .filter(|o| names.iter().any(|n| n.eq_ignore_case(&o.qname)))
        .collect();
    ensure(ours.len() == names.len(), || format!("upstream saw {} of {} names", ours.len(), names.len()))?;
    let ports: HashSet<u16> = seen.iter().map(|o| o.from.port()).collect();
    let txids: HashSet<u16> = seen.iter().map(|o| o.txid).collect();
    let mixed = ours.iter().filter(|o| o.qname != o.qname.to_lowercase()).count();
    ensure(ports.len() * 10 >= seen.len() * 9, || format!("{} ports over {} queries", ports.len(), seen.len()))?;
    ensure(txids.len() * 10 >= seen.len() * 9, || format!("{} txids over {} queries", txids.len(), seen.len()))?;
    ensure(mixed * 10 >= ours.len() * 9, || format!("only {mixed} of {} names case-randomised", ours.len()))?;
    ensure(seen.iter().all(|o| o.from.port() >= 1024), || "source port below 1024".into())?;

    let last = *snaps.last().unwrap();
    ensure(snaps.windows(2).all(|w| w[1].dominates(&w[0])), || format!("metrics went backwards: {snaps:?}"))?;
    ensure(last.queries == 28 && last.cache_hits >= 1, || format!("final metrics {last:?}"))?;
    ensure(last.mismatched_responses >= 2 && last.sandwich_activations >= 2, || format!("attack not seen in metrics: {last:?}"))?;
    ensure(*upstream.forged_sent.lock().unwrap() == 2, || "injector did not fire".into())?;
    for ev in ["detect", "build", "accept"] {
        ensure(gw.log_events(ev) >= 1, || format!("no `{ev}` log event; logs: {:?}", gw.logs()))?;
    }
    for (n, txid) in [("www.example.com", 0x6001), ("ns.example.com", 0x6002)] {
        let r = client.query(txid, n, RecordType::A);
        ensure(!r.answers.is_empty() && !addrs(&r).contains(&FORGED_ADDR), || format!("cache polluted for {n}: {r:?}"))?;
    }
    Ok(format!(
        "{} upstream queries, {} ports, {} txids, {mixed}/{} cased; final {last:?}",
        seen.len(),
        ports.len(),
        txids.len(),
        ours.len()
    ))
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    r.run("C1", "entropy arithmetic", Duration::from_secs(1), entropy_arithmetic);
    r.run("C2", "analytic oracle equivalence", Duration::from_secs(300), oracle_equivalence);
    r.run("C3", "sandwich soundness", Duration::from_secs(600), sandwich_soundness);
    r.run("C4", "NAT port leak", Duration::from_secs(300), nat_equivalence);
    r.run("C5", "0x20 encoding", Duration::from_secs(120), case_0x20);
    r.run("C6", "codec round trip and fuzz", Duration::from_secs(120), codec);
    r.run("C7", "gateway loopback end to end", Duration::from_secs(30), gateway_loopback);
    if r.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", r.failed);
        ExitCode::FAILURE
    }
}
