use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;
use tracing_subscriber::EnvFilter;

use swarmchat_core::bus::{Broker, BusClient};
use swarmchat_core::config::{Config, RobotSpec};
use swarmchat_core::orchestrator::{
    http, load_scenario, parse_scenario, run_headless, run_scenario, ManualClock, Orchestrator,
    ScenarioReport, DEMO_SCENARIO,
};
use swarmchat_core::robot::RobotNode;

#[derive(Parser)]
#[command(name = "swarmchat", version, about = "Keyword-driven command and control for a simulated robot swarm")]
struct Cli {
    /// Tracing filter, e.g. `info` or `swarmchat_core=debug`.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// TOML configuration; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pub/sub broker.
    Broker {
        /// Listen address; defaults to the configured broker address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run one simulated robot.
    Robot(RobotArgs),
    /// Run the orchestrator with its HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        broker: Option<String>,
        /// Directory for the published, received and interaction logs.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run a JSON-lines scenario and print the performance table.
    RunScenario {
        /// Script path; the bundled four-step script when omitted.
        script: Option<PathBuf>,
        /// Use an existing broker and robots instead of starting a local swarm.
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args)]
struct RobotArgs {
    #[arg(long)]
    id: String,
    #[arg(long)]
    broker: Option<String>,
    /// `x,y,heading` in meters and radians.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    start_pose: Option<[f64; 3]>,
    #[arg(long)]
    battery: Option<f64>,
    /// Append every accepted command here as a JSON line.
    #[arg(long)]
    received_log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, h] if parts.iter().all(|v| v.is_finite()) => Ok([x, y, h]),
        _ => Err("expected three finite numbers: x,y,heading".into()),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&cli.log_level).context("bad --log-level")?)
        .with_writer(std::io::stderr)
        .init();
    let cfg = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Broker { bind } => {
            let bind = bind.unwrap_or_else(|| cfg.bus.broker.clone());
            let broker = Broker::bind(&bind).await?;
            info!(addr = %broker.local_addr()?, "broker listening");
            broker.serve_until(shutdown()).await?;
        }
        Command::Robot(args) => robot(cfg, args).await?,
        Command::Serve { bind, broker, data_dir } => {
            let bus = connect(broker.as_deref().unwrap_or(&cfg.bus.broker)).await?;
            let mut builder = Orchestrator::builder(cfg);
            if let Some(dir) = data_dir {
                builder = builder.data_dir(dir);
            }
            let orch = builder.start(bus).await?;
            let listener = tokio::net::TcpListener::bind(bind).await?;
            info!(addr = %listener.local_addr()?, "http api listening");
            http::serve(orch, listener, shutdown()).await?;
        }
        Command::RunScenario { script, broker, data_dir, format } => {
            let steps = match &script {
                Some(p) => load_scenario(p).with_context(|| format!("loading {}", p.display()))?,
                None => parse_scenario(DEMO_SCENARIO)?,
            };
            let report = match broker {
                None => run_headless(cfg, &steps, data_dir.as_deref()).await?.report,
                Some(addr) => remote_scenario(cfg, &addr, &steps, data_dir).await?,
            };
            match format {
                Format::Table => print!("{}", report.table()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

async fn robot(cfg: Config, args: RobotArgs) -> Result<()> {
    let mut spec = cfg.robot(&args.id).cloned().unwrap_or(RobotSpec {
        id: args.id.clone(),
        start_pose: [0.0; 3],
        battery: 100.0,
    });
    if let Some(p) = args.start_pose {
        spec.start_pose = p;
    }
    if let Some(b) = args.battery {
        if !(0.0..=100.0).contains(&b) {
            bail!("--battery must be within 0..=100");
        }
        spec.battery = b;
    }
    let bus = connect(args.broker.as_deref().unwrap_or(&cfg.bus.broker)).await?;
    let mut node = RobotNode::new(&spec, cfg.robot);
    if let Some(path) = args.received_log {
        node = node.with_received_log(path);
    }
    tokio::select! {
        r = node.run(bus) => r?,
        _ = shutdown() => {}
    }
    Ok(())
}

async fn remote_scenario(
    cfg: Config,
    addr: &str,
    steps: &[swarmchat_core::orchestrator::ScenarioStep],
    data_dir: Option<PathBuf>,
) -> Result<ScenarioReport> {
    let bus = connect(addr).await?;
    let clock = Arc::new(ManualClock::new(0));
    let mut builder = Orchestrator::builder(cfg).clock(clock.clone());
    if let Some(dir) = data_dir {
        builder = builder.data_dir(dir);
    }
    let orch = builder.start(bus).await?;
    Ok(run_scenario(&orch, &clock, steps).await?)
}

async fn connect(addr: &str) -> Result<BusClient> {
    BusClient::connect(addr)
        .await
        .with_context(|| format!("connecting to broker at {addr}"))
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
    info!("shutting down");
}
