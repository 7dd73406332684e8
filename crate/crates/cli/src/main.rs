//! `rdis`: validate, inspect and generate from device documents; run the
//! simulator, the runtime and its websocket bridge; drive and discover
//! devices through a bridge.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error (bad flags or an
//! unreadable input file).

mod client;
mod summary;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rdis_core::{diagnose, generate, has_errors, parse_document, Concept, Diagnostic, RdisDocument};
use rdis_runtime::{
    run_sim, serve, BridgeConfig, ProfileId, Runtime, RuntimeConfig, SimConfig, SimProfile, TcpFactory,
};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use client::BridgeClient;

#[derive(Parser)]
#[command(name = "rdis", version, about = "Robot device interface toolchain")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RDIS_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Finchling,
    Koalette,
}

impl Profile {
    fn id(self) -> ProfileId {
        match self {
            Profile::Finchling => ProfileId::Finchling,
            Profile::Koalette => ProfileId::Koalette,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a document and list its diagnostics.
    Validate { path: PathBuf },
    /// Summarize connections, primitives, interfaces and concepts.
    Inspect {
        path: PathBuf,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Generate a driver program from a document.
    Generate {
        path: PathBuf,
        #[arg(long, env = "RDIS_TARGET", default_value = "c-cli")]
        target: String,
        /// Output root; files land in `<out>/<name>/<target>/`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Run a simulated device until interrupted.
    Sim {
        #[arg(long, env = "RDIS_PROFILE", value_enum, default_value = "finchling")]
        profile: Profile,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Control port; defaults to 7070 (finchling) or 7071 (koalette).
        #[arg(long, env = "RDIS_SIM_PORT")]
        port: Option<u16>,
        /// Inspection port; defaults to the control port plus 100.
        #[arg(long, env = "RDIS_INSPECT_PORT")]
        inspect_port: Option<u16>,
        #[arg(long)]
        wheel_track_m: Option<f64>,
        #[arg(long)]
        ticks_per_meter: Option<f64>,
        #[arg(long)]
        max_wheel_mps: Option<f64>,
        #[arg(long)]
        keepalive_timeout_ms: Option<u64>,
        /// Initial encoder counts.
        #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"], allow_hyphen_values = true)]
        encoders: Option<Vec<i64>>,
    },
    /// Start the runtime and the websocket bridge against a live device.
    Run {
        path: PathBuf,
        /// Device address overriding the document's tcp endpoint.
        #[arg(long, env = "RDIS_CONNECT")]
        connect: Option<String>,
        #[arg(long, default_value = "127.0.0.1")]
        bridge_host: String,
        #[arg(long, env = "RDIS_BRIDGE_PORT", default_value_t = 8080)]
        bridge_port: u16,
        /// Directory served at `/` (for example a teleop UI bundle).
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        reply_timeout_ms: u64,
    },
    /// Send one velocity command through a bridge, then stop.
    Drive {
        #[arg(long, env = "RDIS_BRIDGE_URL", default_value = "ws://127.0.0.1:8080/ws")]
        connect: String,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        linear: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        angular: f64,
        /// Seconds to hold the command.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Command repeat rate while holding.
        #[arg(long, default_value_t = 10.0)]
        rate_hz: f64,
    },
    /// Print a device's document as served by its bridge.
    Discover {
        #[arg(long, env = "RDIS_BRIDGE_URL", default_value = "ws://127.0.0.1:8080/ws")]
        connect: String,
        /// Print the inspect view instead of the document.
        #[arg(long)]
        summary: bool,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_env("RDIS_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let outcome = match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Inspect { path, json } => inspect(&path, json),
        Command::Generate {
            path,
            target,
            out,
            force,
        } => generate_cmd(&path, &target, &out, force),
        Command::Sim {
            profile,
            host,
            port,
            inspect_port,
            wheel_track_m,
            ticks_per_meter,
            max_wheel_mps,
            keepalive_timeout_ms,
            encoders,
        } => {
            let mut p = SimProfile::of(profile.id());
            p.wheel_track_m = wheel_track_m.unwrap_or(p.wheel_track_m);
            p.ticks_per_meter = ticks_per_meter.unwrap_or(p.ticks_per_meter);
            p.max_wheel_mps = max_wheel_mps.unwrap_or(p.max_wheel_mps);
            p.keepalive_timeout_ms = keepalive_timeout_ms.unwrap_or(p.keepalive_timeout_ms);
            let enc = encoders.map(|v| (v[0], v[1])).unwrap_or((0, 0));
            sim(p, &host, port, inspect_port, enc)
        }
        Command::Run {
            path,
            connect,
            bridge_host,
            bridge_port,
            static_dir,
            reply_timeout_ms,
        } => run(&path, connect, &bridge_host, bridge_port, static_dir, reply_timeout_ms),
        Command::Drive {
            connect,
            linear,
            angular,
            duration,
            rate_hz,
        } => drive(&connect, linear, angular, duration, rate_hz),
        Command::Discover { connect, summary } => discover(&connect, summary),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(anyhow!("cannot read {}: {e}", path.display())))
}

fn report(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn load(path: &Path) -> Result<RdisDocument, Failure> {
    parse_document(&read(path)?).map_err(|diags| {
        report(&diags);
        domain(anyhow!("{}: invalid document", path.display()))
    })
}

fn validate(path: &Path) -> Outcome {
    let (doc, diags) = diagnose(&read(path)?);
    report(&diags);
    let errors = diags.iter().filter(|d| d.is_error()).count();
    if has_errors(&diags) {
        return Err(domain(anyhow!("{}: {errors} error(s)", path.display())));
    }
    let doc = doc.expect("structure parsed when there are no errors");
    let warnings = diags.len();
    println!("ok: {} {} ({warnings} warning(s))", doc.name, doc.version);
    Ok(())
}

fn inspect(path: &Path, as_json: bool) -> Outcome {
    let doc = load(path)?;
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary::json(&doc)).expect("summary serializes")
        );
    } else {
        print!("{}", summary::text(&doc));
    }
    Ok(())
}

fn generate_cmd(path: &Path, target: &str, out: &Path, force: bool) -> Outcome {
    let doc = load(path)?;
    let artifact = generate(&doc, target).map_err(domain)?;
    if !force {
        let existing: Vec<String> = artifact
            .files
            .keys()
            .map(|rel| out.join(rel))
            .filter(|p| p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !existing.is_empty() {
            return Err(domain(anyhow!(
                "refusing to overwrite {} (use --force)",
                existing.join(", ")
            )));
        }
    }
    for (rel, content) in &artifact.files {
        let dest = out.join(rel);
        if let Some(dir) = dest.parent() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("create {}", dir.display()))
                .map_err(domain)?;
        }
        std::fs::write(&dest, content)
            .with_context(|| format!("write {}", dest.display()))
            .map_err(domain)?;
        println!("{}", dest.display());
    }
    Ok(())
}

/// Installs the SIGINT/SIGTERM handler. Call before announcing readiness
/// so an early signal is not lost; `recv` on the result blocks until one
/// arrives.
fn interrupts() -> Result<mpsc::Receiver<()>, Failure> {
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(domain)?;
    Ok(rx)
}

fn sim(profile: SimProfile, host: &str, port: Option<u16>, inspect_port: Option<u16>, encoders: (i64, i64)) -> Outcome {
    let port = port.unwrap_or(match profile.id {
        ProfileId::Finchling => 7070,
        ProfileId::Koalette => 7071,
    });
    let inspect_port = inspect_port.unwrap_or(if port == 0 { 0 } else { port.saturating_add(100) });
    let stop = interrupts()?;
    let handle = run_sim(SimConfig {
        profile,
        control_addr: format!("{host}:{port}"),
        inspect_addr: format!("{host}:{inspect_port}"),
        initial_encoders: encoders,
    })
    .map_err(domain)?;
    println!(
        "sim {} control {} inspect {}",
        profile.id,
        handle.control_addr(),
        handle.inspect_addr()
    );
    let _ = stop.recv();
    handle.stop();
    println!("sim stopped");
    Ok(())
}

fn run(
    path: &Path,
    connect: Option<String>,
    bridge_host: &str,
    bridge_port: u16,
    static_dir: Option<PathBuf>,
    reply_timeout_ms: u64,
) -> Outcome {
    let doc = load(path)?;
    let name = doc.name.clone();
    let stop = interrupts()?;
    let factory = TcpFactory {
        override_addr: connect,
        connect_timeout: None,
    };
    let config = RuntimeConfig {
        reply_timeout: Duration::from_millis(reply_timeout_ms),
    };
    let runtime = Runtime::start(doc, &factory, config).map_err(domain)?;
    let bridge = serve(
        runtime.clone(),
        BridgeConfig {
            addr: format!("{bridge_host}:{bridge_port}"),
            static_dir,
        },
    )
    .map_err(|e| {
        runtime.stop();
        domain(e)
    })?;
    println!("runtime {name} started");
    println!("bridge {}", bridge.ws_url());
    let _ = stop.recv();
    bridge.shutdown();
    runtime.stop();
    println!("stopped");
    Ok(())
}

fn drive(url: &str, linear: f64, angular: f64, duration: f64, rate_hz: f64) -> Outcome {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(usage(anyhow!("--duration must be a non-negative number of seconds")));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(usage(anyhow!("--rate-hz must be positive")));
    }
    let mut client = BridgeClient::connect(url).map_err(domain)?;
    let list = client.list().map_err(domain)?;
    let concept = Concept::CommandVelocity.as_str();
    let offered = list["concepts"]
        .as_array()
        .is_some_and(|cs| cs.iter().any(|c| c["concept"] == concept));
    if !offered {
        return Err(domain(anyhow!("device does not offer {concept}")));
    }
    let twist = |l: f64, a: f64| json!({"linear_mps": l, "angular_radps": a});

    let start = Instant::now();
    let end = start + Duration::from_secs_f64(duration);
    let period = Duration::from_secs_f64(1.0 / rate_hz);
    let mut sent = 0u32;
    let mut next = start;
    while Instant::now() < end {
        client.call(concept, twist(linear, angular)).map_err(domain)?;
        sent += 1;
        next += period;
        let wake = next.min(end);
        if let Some(d) = wake.checked_duration_since(Instant::now()) {
            thread::sleep(d);
        }
    }
    client.call(concept, twist(0.0, 0.0)).map_err(domain)?;
    client.close();
    println!(
        "drove linear={linear} angular={angular} for {:.3} s ({sent} command(s)), then stopped",
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn discover(url: &str, as_summary: bool) -> Outcome {
    let mut client = BridgeClient::connect(url).map_err(domain)?;
    let text = client.discover().map_err(domain)?;
    client.close();
    if as_summary {
        let doc = parse_document(&text).map_err(|diags| {
            report(&diags);
            domain(anyhow!("device served an invalid document"))
        })?;
        print!("{}", summary::text(&doc));
    } else {
        print!("{text}");
    }
    Ok(())
}
