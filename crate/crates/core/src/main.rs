use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use dns_antidote::entropy::{entropy_budget, spoof_success_probability, PortRange};
use dns_antidote::gateway::{self, GatewayConfig};
use dns_antidote::sim::{run_experiment, to_csv, ExperimentConfig};
use dns_antidote::{DnsName, EntropyConfig};

#[derive(Parser)]
#[command(name = "antidote", version, about = "Resolver-side DNS anti-poisoning toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the UDP forwarding gateway.
    Serve(ServeArgs),
    /// Run an attack experiment grid and print CSV.
    Simulate(SimArgs),
    /// Print the entropy budget of a query name under a defense.
    Budget(BudgetArgs),
    /// Analytic spoof success probability.
    Probability {
        #[arg(long)]
        bits: f64,
        #[arg(long)]
        packets: u64,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Upstream server; repeatable. Replaces upstreams from the config file.
    #[arg(long)]
    upstream: Vec<SocketAddr>,
    /// Fixed RNG seed, for testing only.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log_level: Option<String>,
    #[arg(long)]
    metrics_port: Option<u16>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetArgs {
    name: DnsName,
    #[arg(long)]
    no_txid: bool,
    #[arg(long, default_value_t = 16)]
    txid_bits: u8,
    #[arg(long)]
    spr: bool,
    #[arg(long, default_value_t = 1024)]
    port_lo: u16,
    #[arg(long, default_value_t = 65535)]
    port_hi: u16,
    /// Source address pool size.
    #[arg(long, default_value_t = 1)]
    pool: usize,
    /// Number of authority addresses.
    #[arg(long, default_value_t = 1)]
    dst: usize,
    #[arg(long = "0x20")]
    case_0x20: bool,
    #[arg(long)]
    short: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Serve(args) => serve(args),
        Command::Simulate(args) => simulate(args),
        Command::Budget(args) => {
            budget(args);
            Ok(())
        }
        Command::Probability { bits, packets } => {
            println!("{:.9}", spoof_success_probability(bits, packets)?);
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GatewayConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => GatewayConfig::default(),
    };
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    if !args.upstream.is_empty() {
        cfg.upstreams = args.upstream;
    }
    if let Some(s) = args.seed {
        cfg.resolver.entropy.rng_seed = s;
    }
    if let Some(l) = args.log_level {
        cfg.log_level = l;
    }
    if let Some(p) = args.metrics_port {
        cfg.metrics_port = Some(p);
    }
    let cfg = cfg.finalize().context("invalid gateway configuration")?;

    let filter = EnvFilter::try_new(&cfg.log_level)
        .with_context(|| format!("invalid log level `{}`", cfg.log_level))?;
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(false)
        .init();

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(gateway::serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}

fn simulate(args: SimArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let csv = to_csv(&run_experiment(&cfg));
    match args.out {
        Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn budget(a: BudgetArgs) {
    let cfg = EntropyConfig {
        randomize_txid: !a.no_txid,
        txid_bits: a.txid_bits,
        spr_enabled: a.spr,
        port_range: PortRange::new(a.port_lo, a.port_hi),
        ip_pool: (0..a.pool.max(1) as u32).map(|i| IpAddr::from(i.to_be_bytes())).collect(),
        dst_candidates: (0..a.dst.max(1) as u32)
            .map(|i| SocketAddr::new(IpAddr::from(i.to_be_bytes()), 53))
            .collect(),
        encode_0x20: a.case_0x20,
        short_query_extension: a.short,
        ..EntropyConfig::default()
    };
    let b = entropy_budget(&cfg, &a.name);
    println!("txid_bits    {:.4}", b.txid_bits);
    println!("port_bits    {:.4}", b.port_bits);
    println!("src_ip_bits  {:.4}", b.src_ip_bits);
    println!("dst_ip_bits  {:.4}", b.dst_ip_bits);
    println!("case_bits    {:.4}", b.case_bits);
    println!("total_bits   {:.4}", b.total_bits);
}
