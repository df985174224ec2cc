use std::collections::HashMap;
use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::str::FromStr;

/// How a NAT between the resolver and the Internet rewrites query sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NatMode {
    #[default]
    Passthrough,
    /// External ports are assigned from a counter, so they are predictable.
    SequentialPorts,
    /// Every source address is rewritten to one public address; ports are kept.
    SingleIpMasquerade,
}

impl FromStr for NatMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "passthrough" | "none" => Ok(NatMode::Passthrough),
            "sequential" | "sequential-ports" => Ok(NatMode::SequentialPorts),
            "masquerade" | "single-ip" => Ok(NatMode::SingleIpMasquerade),
            _ => Err(format!("unknown NAT mode `{s}`")),
        }
    }
}

impl fmt::Display for NatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NatMode::Passthrough => "passthrough",
            NatMode::SequentialPorts => "sequential",
            NatMode::SingleIpMasquerade => "masquerade",
        })
    }
}

/// Address translation state for one trial.
#[derive(Debug, Clone)]
pub struct Nat {
    mode: NatMode,
    public_ip: IpAddr,
    next_port: u16,
    outbound: HashMap<SocketAddr, SocketAddr>,
    inbound: HashMap<SocketAddr, SocketAddr>,
}

impl Nat {
    /// `first_port` seeds the sequential counter.
    pub fn new(mode: NatMode, public_ip: IpAddr, first_port: u16) -> Self {
        Nat {
            mode,
            public_ip,
            next_port: first_port.max(1024),
            outbound: HashMap::new(),
            inbound: HashMap::new(),
        }
    }

    pub fn mode(&self) -> NatMode {
        self.mode
    }

    /// External address for a packet leaving from `internal`.
    pub fn outbound(&mut self, internal: SocketAddr) -> SocketAddr {
        if self.mode == NatMode::Passthrough {
            return internal;
        }
        if let Some(&ext) = self.outbound.get(&internal) {
            return ext;
        }
        let ext = match self.mode {
            NatMode::SequentialPorts => {
                let port = self.next_port;
                self.next_port = if port == u16::MAX { 1024 } else { port + 1 };
                SocketAddr::new(internal.ip(), port)
            }
            _ => SocketAddr::new(self.public_ip, internal.port()),
        };
        if let Some(old) = self.inbound.insert(ext, internal) {
            self.outbound.remove(&old);
        }
        self.outbound.insert(internal, ext);
        ext
    }

    /// Internal destination for a packet arriving at `external`, if mapped.
    pub fn inbound(&self, external: SocketAddr) -> Option<SocketAddr> {
        match self.mode {
            NatMode::Passthrough => Some(external),
            _ => self.inbound.get(&external).copied(),
        }
    }
}
