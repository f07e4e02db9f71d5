use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use edgeguard_core::config::{load_from_process, AppConfig, Loaded};
use edgeguard_core::runtime::scenario::{self, Scenario};
use edgeguard_core::runtime::{open_source, run_pipeline, write_replay, NullSink, SourceDescriptor};
use edgeguard_core::vlm::{run_vlm_session, NullVlmSink};
use edgeguard_service::Service;

#[derive(Parser)]
#[command(name = "edgeguard", version, about = "Edge action-detection engine")]
struct Cli {
    /// TOML config file; environment variables override it.
    #[arg(long, global = true, env = "EDGEGUARD_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Skel,
    Vlm,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket service with both backends.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        storage: Option<PathBuf>,
    },
    /// Run one session headless and print its report as JSON.
    Replay {
        /// Pose-replay JSONL file, `scenario:<name>[:seed]`, or camera address.
        source: String,
        #[arg(long, value_enum, default_value = "skel")]
        backend: BackendArg,
        /// Follow source timestamps instead of running flat-out.
        #[arg(long)]
        paced: bool,
        /// Directory for alert clips and thumbnails.
        #[arg(long)]
        alerts: Option<PathBuf>,
    },
    /// Unpaced skeleton run over a built-in scenario; prints the metrics snapshot.
    Bench {
        scenario: String,
        #[arg(long, default_value_t = scenario::DEFAULT_SEED)]
        seed: u64,
    },
    /// Write a scenario as pose-replay JSONL.
    GenFixture {
        /// Scenario name, or `all`.
        scenario: String,
        #[arg(long, default_value_t = scenario::DEFAULT_SEED)]
        seed: u64,
        /// Output file, or directory when generating `all`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print every configuration knob with its value and origin.
    Config,
}

fn scenarios(name: &str) -> Result<Vec<Scenario>> {
    if name == "all" {
        return Ok(Scenario::ALL.to_vec());
    }
    Ok(vec![name.parse().map_err(|_| {
        let known: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        anyhow::anyhow!("unknown scenario {name:?}; known: {}", known.join(", "))
    })?])
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn serve(mut cfg: AppConfig, bind: Option<String>, storage: Option<PathBuf>) -> Result<()> {
    if let Some(b) = bind {
        cfg.service.bind = b;
    }
    if let Some(s) = storage {
        cfg.service.storage_root = s;
    }
    let bind = cfg.service.bind.clone();
    let service = Service::open(cfg).context("opening storage")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        edgeguard_service::serve(service, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn replay(cfg: AppConfig, source: &str, backend: BackendArg, paced: bool, alerts: Option<PathBuf>) -> Result<()> {
    let desc = SourceDescriptor::parse(source);
    let src = open_source(&desc, cfg.skel.nominal_fps)?;
    match backend {
        BackendArg::Skel => {
            let pcfg = edgeguard_core::runtime::PipelineConfig { paced, ..cfg.skel };
            print_json(&run_pipeline(src, &pcfg, alerts, Arc::new(NullSink))?)
        }
        BackendArg::Vlm => {
            let vcfg = edgeguard_core::vlm::VlmConfig { paced, ..cfg.vlm };
            print_json(&run_vlm_session(src, &vcfg, alerts, Arc::new(NullVlmSink))?)
        }
    }
}

fn bench(cfg: AppConfig, name: &str, seed: u64) -> Result<()> {
    let [sc] = scenarios(name)?[..] else { bail!("bench takes a single scenario") };
    let frames = scenario::generate(sc, seed);
    let src = edgeguard_core::runtime::FrameSource::from_frames(
        SourceDescriptor::Scenario { name: sc.name().into(), seed },
        cfg.skel.nominal_fps,
        frames,
    );
    let pcfg = edgeguard_core::runtime::PipelineConfig { paced: false, ..cfg.skel };
    let report = run_pipeline(src, &pcfg, None, Arc::new(NullSink))?;
    print_json(&report.metrics)
}

fn gen_fixture(name: &str, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let list = scenarios(name)?;
    let many = list.len() > 1;
    for sc in list {
        let path = match (&out, many) {
            (Some(dir), true) => dir.join(format!("{}.jsonl", sc.name())),
            (Some(file), false) => file.clone(),
            (None, _) => PathBuf::from(format!("{}.jsonl", sc.name())),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let frames = scenario::generate(sc, seed);
        write_replay(&path, &frames)?;
        eprintln!("{}: {} frames -> {}", sc.name(), frames.len(), path.display());
    }
    Ok(())
}

fn show_config(loaded: &Loaded) {
    for (env, value, origin) in loaded.describe() {
        println!("{env}={value}\t# {origin:?}");
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let loaded = load_from_process(cli.config.as_deref()).context("loading configuration")?;
    let cfg = loaded.config.clone();
    match cli.command {
        Command::Serve { bind, storage } => serve(cfg, bind, storage),
        Command::Replay { source, backend, paced, alerts } => replay(cfg, &source, backend, paced, alerts),
        Command::Bench { scenario, seed } => bench(cfg, &scenario, seed),
        Command::GenFixture { scenario, seed, out } => gen_fixture(&scenario, seed, out),
        Command::Config => {
            show_config(&loaded);
            Ok(())
        }
    }
}
