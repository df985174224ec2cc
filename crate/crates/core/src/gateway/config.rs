use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::time::Duration;

use crate::config::{parse_kv, ConfigError};
use crate::entropy::{EntropyConfig, PortRange};
use crate::resolver::ResolverConfig;
use crate::sandwich::SandwichConfig;
use crate::wire::DnsName;

pub const CONFIG_HEADER: &str = "antidote-gateway v1";

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen: SocketAddr,
    pub upstreams: Vec<SocketAddr>,
    pub resolver: ResolverConfig,
    pub log_level: String,
    /// Serve `GET /metrics` on this TCP port of the listen address.
    pub metrics_port: Option<u16>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: SocketAddr::from((Ipv4Addr::LOCALHOST, 5353)),
            upstreams: Vec::new(),
            resolver: ResolverConfig {
                entropy: EntropyConfig {
                    ip_pool: vec![IpAddr::V4(Ipv4Addr::UNSPECIFIED)],
                    rng_seed: rand::random(),
                    ..EntropyConfig::default()
                },
                sandwich: SandwichConfig::default(),
                ..ResolverConfig::default()
            },
            log_level: "info".to_string(),
            metrics_port: None,
        }
    }
}

impl GatewayConfig {
    /// Parses a gateway config file. `upstream` and `source_ip` may repeat and
    /// also accept comma-separated lists.
    ///
    /// Keys: `listen`, `upstream`, `seed`, `log_level`, `metrics_port`,
    /// `randomize_txid`, `spr`, `port_range` (`LO-HI`), `source_ip`, `encode_0x20`,
    /// `short_query_extension`, `fixed_prefix`, `min_letters`, `sandwich`,
    /// `detection_threshold`, `prefix_len`, `retries`, `sandwich_deadline_ms`,
    /// `settle_ms`, `zone_cut`, `upstream_timeout_ms`, `cache_capacity`, `max_ttl`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = GatewayConfig::default();
        let mut pool: Vec<IpAddr> = Vec::new();
        for e in parse_kv(text, Some(CONFIG_HEADER))? {
            let ent = &mut cfg.resolver.entropy;
            let sw = &mut cfg.resolver.sandwich;
            match e.key.as_str() {
                "listen" => cfg.listen = e.parse()?,
                "upstream" => {
                    for u in e.list() {
                        cfg.upstreams.push(u.parse().map_err(|err| e.invalid(err))?);
                    }
                }
                "seed" => ent.rng_seed = e.parse()?,
                "log_level" => cfg.log_level = e.value.clone(),
                "metrics_port" => cfg.metrics_port = Some(e.parse()?),
                "randomize_txid" => ent.randomize_txid = e.parse_bool()?,
                "spr" => ent.spr_enabled = e.parse_bool()?,
                "port_range" => {
                    let (lo, hi) = e
                        .value
                        .split_once('-')
                        .ok_or_else(|| e.invalid("expected LO-HI"))?;
                    let lo = lo.trim().parse().map_err(|err| e.invalid(err))?;
                    let hi = hi.trim().parse().map_err(|err| e.invalid(err))?;
                    ent.port_range = PortRange::new(lo, hi);
                }
                "source_ip" => {
                    for ip in e.list() {
                        pool.push(ip.parse().map_err(|err| e.invalid(err))?);
                    }
                }
                "encode_0x20" => ent.encode_0x20 = e.parse_bool()?,
                "short_query_extension" => ent.short_query_extension = e.parse_bool()?,
                "fixed_prefix" => ent.fixed_prefix = e.value.clone(),
                "min_letters" => ent.min_letters = e.parse()?,
                "sandwich" => sw.enabled = e.parse_bool()?,
                "detection_threshold" => sw.detection_threshold = e.parse()?,
                "prefix_len" => sw.prefix_len = e.parse()?,
                "retries" => sw.retries = e.parse()?,
                "sandwich_deadline_ms" => sw.deadline = Duration::from_millis(e.parse()?),
                "settle_ms" => sw.settle = Duration::from_millis(e.parse()?),
                "zone_cut" => {
                    for z in e.list() {
                        sw.zone_cuts.push(z.parse::<DnsName>().map_err(|err| e.invalid(err))?);
                    }
                }
                "upstream_timeout_ms" => {
                    cfg.resolver.upstream_timeout = Duration::from_millis(e.parse()?)
                }
                "cache_capacity" => cfg.resolver.cache_capacity = e.parse()?,
                "max_ttl" => cfg.resolver.max_ttl = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        if !pool.is_empty() {
            cfg.resolver.entropy.ip_pool = pool;
        }
        Ok(cfg)
    }

    /// Checks invariants and fills the resolver's upstream list.
    pub fn finalize(mut self) -> Result<Self, ConfigError> {
        let bad = |k: &str, r: String| ConfigError::Value {
            line: 0,
            key: k.to_string(),
            reason: r,
        };
        if self.upstreams.is_empty() {
            return Err(ConfigError::Missing("upstream".to_string()));
        }
        if self.upstreams.contains(&self.listen) {
            return Err(bad("listen", "must differ from every upstream".to_string()));
        }
        let sw = &self.resolver.sandwich;
        if sw.detection_threshold == 0 {
            return Err(bad("detection_threshold", "must be at least 1".to_string()));
        }
        if !(1..=63).contains(&sw.prefix_len) {
            return Err(bad("prefix_len", "must be within 1..=63".to_string()));
        }
        self.resolver.entropy.dst_candidates = self.upstreams.clone();
        self.resolver.delegation_upstreams.clear();
        if self.resolver.entropy.short_query_extension {
            // A forwarder's upstreams are the only servers it talks to.
            self.resolver.delegation_upstreams = self.upstreams.clone();
        }
        self.resolver
            .entropy
            .validate()
            .map_err(|err| bad("entropy", err.to_string()))?;
        Ok(self)
    }
}
