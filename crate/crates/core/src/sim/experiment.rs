use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;

use super::attacker::AttackerConfig;
use super::nat::NatMode;
use super::network::NetConfig;
use super::trial::{derive_seed, run_trial, AttackOutcome, Defense, Scenario};
use crate::config::{parse_kv, ConfigError};
use crate::wire::DnsName;

pub const CONFIG_HEADER: &str = "antidote-sim v1";
pub const CSV_HEADER: &str = "defense,attacker,trials,poisoned,rate,ci_lo,ci_hi,mean_spoofed_packets";

pub const DEFAULT_DEFENSES: [&str; 5] = [
    "txid-only",
    "spr",
    "spr+0x20",
    "full+sandwich",
    "txid+accept-first",
];
pub const DEFAULT_ATTACKERS: [&str; 3] = ["blind-flood:16", "brute-force-txid:16", "kaminsky:16"];

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// A grid of defenses against attackers.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub seed: u64,
    pub defenses: Vec<Defense>,
    pub attackers: Vec<AttackerConfig>,
    /// Overrides every attacker's packets per window.
    pub packets: Option<u32>,
    pub txid_bits: u8,
    pub target: DnsName,
    pub target_zone: DnsName,
    pub net: NetConfig,
    pub nat: NatMode,
    pub windows: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = Scenario::new(Defense::from_str_unchecked("txid-only"), None);
        ExperimentConfig {
            trials: 500,
            seed: 1,
            defenses: DEFAULT_DEFENSES.iter().map(|d| Defense::from_str_unchecked(d)).collect(),
            attackers: DEFAULT_ATTACKERS
                .iter()
                .map(|a| a.parse().expect("valid default attacker"))
                .collect(),
            packets: None,
            txid_bits: base.txid_bits,
            target: base.target,
            target_zone: base.target_zone,
            net: NetConfig::default(),
            nat: NatMode::Passthrough,
            windows: 1,
        }
    }
}

impl Defense {
    fn from_str_unchecked(s: &str) -> Defense {
        s.parse().expect("valid built-in defense")
    }
}

impl ExperimentConfig {
    /// Parses a key-value experiment file. Keys: `trials`, `seed`, `defenses`,
    /// `attackers` (comma-separated lists), `packets`, `txid_bits`, `target`,
    /// `target_zone`, `rtt_ms`, `reorder_prob`, `jitter_ms`, `loss`, `nat`, `windows`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for e in parse_kv(text, Some(CONFIG_HEADER))? {
            match e.key.as_str() {
                "trials" => cfg.trials = e.parse()?,
                "seed" => cfg.seed = e.parse()?,
                "defenses" => {
                    cfg.defenses = e
                        .list()
                        .into_iter()
                        .map(|d| d.parse().map_err(|r: String| e.invalid(r)))
                        .collect::<Result<_, _>>()?
                }
                "attackers" => {
                    cfg.attackers = e
                        .list()
                        .into_iter()
                        .map(|a| a.parse().map_err(|r: String| e.invalid(r)))
                        .collect::<Result<_, _>>()?
                }
                "packets" => cfg.packets = Some(e.parse()?),
                "txid_bits" => cfg.txid_bits = e.parse()?,
                "target" => cfg.target = e.parse()?,
                "target_zone" => cfg.target_zone = e.parse()?,
                "rtt_ms" => cfg.net.rtt = Duration::from_millis(e.parse()?),
                "jitter_ms" => cfg.net.jitter = Duration::from_millis(e.parse()?),
                "reorder_prob" => cfg.net.reorder_prob = probability(&e)?,
                "loss" => cfg.net.loss = probability(&e)?,
                "nat" => cfg.nat = e.parse()?,
                "windows" => cfg.windows = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, r: &str| ConfigError::Value {
            line: 0,
            key: k.to_string(),
            reason: r.to_string(),
        };
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if !(1..=16).contains(&self.txid_bits) {
            return Err(bad("txid_bits", "must be within 1..=16"));
        }
        if self.defenses.is_empty() || self.attackers.is_empty() {
            return Err(bad("defenses", "grid must have at least one defense and attacker"));
        }
        if !self.target.is_within(&self.target_zone) || self.target == self.target_zone {
            return Err(bad("target", "must lie strictly below target_zone"));
        }
        if self.target_zone.wire_len() + 4 + 9 > crate::wire::MAX_NAME_LEN {
            return Err(bad("target_zone", "too long to hold guard and Kaminsky names"));
        }
        if self.windows == 0 {
            return Err(bad("windows", "must be at least 1"));
        }
        if self.net.rtt < Duration::from_millis(1) {
            return Err(bad("rtt_ms", "must be at least 1"));
        }
        Ok(())
    }

    pub fn scenario(&self, defense: &Defense, attacker: &AttackerConfig) -> Scenario {
        let mut attacker = attacker.clone();
        if let Some(p) = self.packets {
            attacker.packets_per_window = p;
        }
        Scenario {
            txid_bits: self.txid_bits,
            net: self.net.clone(),
            nat: self.nat,
            target: self.target.clone(),
            target_zone: self.target_zone.clone(),
            windows: self.windows,
            ..Scenario::new(defense.clone(), Some(attacker))
        }
    }
}

fn probability(e: &crate::config::Entry) -> Result<f64, ConfigError> {
    let p: f64 = e.parse()?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(e.invalid("must be within [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub defense: String,
    pub attacker: String,
    pub trials: u64,
    pub poisoned: u64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_spoofed_packets: f64,
}

impl CellResult {
    pub fn from_outcomes(defense: String, attacker: String, outcomes: &[AttackOutcome]) -> Self {
        let trials = outcomes.len() as u64;
        let poisoned = outcomes.iter().filter(|o| o.poisoned).count() as u64;
        let (ci_lo, ci_hi) = wilson_interval(poisoned, trials, 1.96);
        let spoofed: u64 = outcomes.iter().map(|o| o.spoofed_packets_sent).sum();
        CellResult {
            defense,
            attacker,
            trials,
            poisoned,
            rate: if trials == 0 { 0.0 } else { poisoned as f64 / trials as f64 },
            ci_lo,
            ci_hi,
            mean_spoofed_packets: if trials == 0 { 0.0 } else { spoofed as f64 / trials as f64 },
        }
    }
}

/// Trial `i` of a scenario uses the same seed in every cell, so cells are paired.
pub fn run_cell(sc: &Scenario, trials: u64, seed: u64) -> Vec<AttackOutcome> {
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(sc, derive_seed(seed, i)))
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<CellResult> {
    let mut rows = Vec::new();
    for d in &cfg.defenses {
        for a in &cfg.attackers {
            let sc = cfg.scenario(d, a);
            let outcomes = run_cell(&sc, cfg.trials, cfg.seed);
            let attacker = sc.attacker.as_ref().map(|a| a.to_string()).unwrap_or_default();
            rows.push(CellResult::from_outcomes(d.label.clone(), attacker, &outcomes));
        }
    }
    rows
}

pub fn to_csv(rows: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.2}",
            r.defense, r.attacker, r.trials, r.poisoned, r.rate, r.ci_lo, r.ci_hi, r.mean_spoofed_packets
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // Reference: 10 of 100 at z = 1.96 gives [0.0552, 0.1744].
        let (lo, hi) = wilson_interval(10, 100, 1.96);
        assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.0713).abs() < 1e-4);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn config_parse() {
        let text = "antidote-sim v1\ntrials = 3\nseed = 9\ndefenses = txid-only, spr+nat=sequential\n\
                    attackers = blind-flood:4\nrtt_ms = 20\nreorder_prob = 0.1\nwindows = 2\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.defenses.len(), 2);
        assert_eq!(cfg.net.rtt, Duration::from_millis(20));
        assert_eq!(cfg.windows, 2);
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("colour = blue").is_err());
        assert!(ExperimentConfig::parse("loss = 2").is_err());
        assert!(ExperimentConfig::parse("defenses = bogus").is_err());
        assert!(ExperimentConfig::parse("target = www.example.org").is_err());
    }

    #[test]
    fn one_trial_grid_has_one_outcome_per_cell() {
        let cfg = ExperimentConfig {
            trials: 1,
            ..ExperimentConfig::default()
        };
        let rows = run_experiment(&cfg);
        assert_eq!(rows.len(), DEFAULT_DEFENSES.len() * DEFAULT_ATTACKERS.len());
        assert!(rows.iter().all(|r| r.trials == 1));
        let csv = to_csv(&rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn deterministic_csv() {
        let cfg = ExperimentConfig {
            trials: 20,
            ..ExperimentConfig::default()
        };
        assert_eq!(to_csv(&run_experiment(&cfg)), to_csv(&run_experiment(&cfg)));
    }
}
