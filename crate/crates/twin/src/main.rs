use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use crane_twin::client::{Client, ClientError};
use crane_twin::{export, ErrorCode, Twin, UpOptions};
use crane_twin_core::ProfileMode;
use crane_twin_historian::{RunRecord, ValidationReport};
use crane_twin_services::{FaultSpec, StatusSnapshot, TwinConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURE: u8 = 2;
const EXIT_VALIDATION_FAILED: u8 = 3;

/// Gantry crane digital twin.
///
/// Exit codes: 0 success, 1 usage or rejected request, 2 transport or
/// crane state error, 3 validation failed.
#[derive(Parser)]
#[command(name = "crane-twin", version)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "CRANETWIN_CONFIG")]
    config: Option<PathBuf>,
    /// Historian data directory, overriding the configuration.
    #[arg(long, global = true, env = "CRANETWIN_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Gateway address, host:port.
    #[arg(long, global = true)]
    gateway: Option<String>,
    /// Bus broker address for `up`, host:port.
    #[arg(long, global = true)]
    broker: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Zv,
    Trap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Start broker, crane, services and gateway in this process.
    Up {
        /// Serve the API only.
        #[arg(long)]
        headless: bool,
    },
    /// Move the cart; waits for the run's validation verdict.
    Move {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, value_enum, default_value_t = Mode::Zv)]
        mode: Mode,
    },
    /// Change the rope length; waits for the run's validation verdict.
    Hoist {
        #[arg(long, allow_negative_numbers = true)]
        l: f64,
    },
    /// Drive to the origin and wait until the swing has settled.
    Home,
    /// Take the current swing reading as zero.
    Zero,
    /// Switch the lifting magnet.
    Magnet {
        #[arg(value_enum)]
        state: Switch,
    },
    /// Inject a plant fault, or clear it.
    Fault {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        damping_scale: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rope_length_offset: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        encoder_bias: f64,
        #[arg(long)]
        clear: bool,
    },
    /// Print the live crane state.
    Status,
    /// Inspect and export stored runs.
    Runs {
        #[command(subcommand)]
        command: RunsCommand,
    },
    /// Validate a stored run again under the current thresholds.
    Validate { id: String },
    /// Show or change the running configuration.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Subcommand)]
enum RunsCommand {
    List,
    Show {
        id: String,
    },
    /// Write every stored trace of a run as CSV, one file per kind.
    Export {
        id: String,
        /// Output directory.
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    Show,
    /// Apply a JSON merge patch, e.g. '{"logger":{"writeout_decimation":10}}'.
    Set { patch: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &ClientError) -> u8 {
    match e.code() {
        Some(ErrorCode::BadRequest) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn load_config(path: Option<&Path>) -> Result<TwinConfig, ClientError> {
    match path {
        Some(p) if p.exists() => TwinConfig::load(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        _ => Ok(TwinConfig::default()),
    }
}

fn usage(message: String) -> ClientError {
    ClientError::Api(crane_twin::ApiError::bad_request(message))
}

fn run(cli: Cli) -> Result<u8, ClientError> {
    if let Command::Up { headless } = cli.command {
        return up(&cli, headless);
    }
    let addr = match &cli.gateway {
        Some(a) => a.clone(),
        None => load_config(cli.config.as_deref())?.gateway_addr,
    };
    let client = Client::new(&addr)?;
    let fmt = cli.format;
    match cli.command {
        Command::Up { .. } => unreachable!(),
        Command::Move { x, mode } => {
            let mode = match mode {
                Mode::Zv => ProfileMode::ZvShaped,
                Mode::Trap => ProfileMode::Trapezoid,
            };
            let run = client.move_to(x, mode)?;
            let report = client.wait_for_report(&run.run_id, Duration::from_secs(600))?;
            Ok(print_report(fmt, &report))
        }
        Command::Hoist { l } => {
            let run = client.hoist_to(l)?;
            let report = client.wait_for_report(&run.run_id, Duration::from_secs(600))?;
            Ok(print_report(fmt, &report))
        }
        Command::Home => status_done(fmt, client.home()?),
        Command::Zero => status_done(fmt, client.zero()?),
        Command::Magnet { state } => status_done(fmt, client.magnet(matches!(state, Switch::On))?),
        Command::Fault {
            damping_scale,
            rope_length_offset,
            encoder_bias,
            clear,
        } => {
            let spec = FaultSpec {
                damping_scale,
                rope_length_offset,
                encoder_bias_extra: encoder_bias,
                active: !clear,
            };
            status_done(fmt, client.fault(&spec)?)
        }
        Command::Status => status_done(fmt, client.status()?),
        Command::Runs { command } => match command {
            RunsCommand::List => {
                print_runs(fmt, &client.runs()?);
                Ok(0)
            }
            RunsCommand::Show { id } => {
                let detail = client.run(&id)?;
                if fmt == Format::Raw {
                    println!("{}", serde_json::to_string(&detail).unwrap());
                } else {
                    print_runs(fmt, std::slice::from_ref(&detail.run));
                    if fmt == Format::Table {
                        let kinds: Vec<_> = detail.traces.iter().map(|k| k.as_str()).collect();
                        println!("traces: {}", kinds.join(", "));
                        match &detail.report {
                            Some(r) => {
                                print_report(fmt, r);
                            }
                            None => println!("not validated"),
                        }
                    }
                }
                Ok(0)
            }
            RunsCommand::Export { id, csv } => export_run(&client, fmt, &id, &csv),
        },
        Command::Validate { id } => Ok(print_report(fmt, &client.validate(&id)?)),
        Command::Config { command } => {
            let cfg = match command {
                ConfigCommand::Show => client.config()?,
                ConfigCommand::Set { patch } => {
                    let patch = serde_json::from_str(&patch).map_err(|e| usage(format!("patch: {e}")))?;
                    client.update_config(&patch)?
                }
            };
            match fmt {
                Format::Raw => println!("{}", serde_json::to_string(&cfg).unwrap()),
                _ => print!("{}", cfg.to_toml_string()),
            }
            Ok(0)
        }
    }
}

fn up(cli: &Cli, headless: bool) -> Result<u8, ClientError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(a) = &cli.gateway {
        config.gateway_addr = a.clone();
    }
    if let Some(a) = &cli.broker {
        config.broker_addr = a.clone();
    }
    let opts = UpOptions {
        config_path: cli.config.clone(),
        headless,
        ..UpOptions::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| ClientError::Local(e.to_string()))?;
    rt.block_on(async move {
        let twin = Twin::up(config, opts)
            .await
            .map_err(|e| ClientError::Local(e.to_string()))?;
        let mut out = std::io::stdout();
        for line in twin.readiness() {
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(out, "ready");
        let _ = out.flush();
        terminated().await;
        twin.shutdown().await;
        Ok(0)
    })
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
async fn terminated() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Prints a report and returns the exit code its verdict implies.
fn print_report(fmt: Format, r: &ValidationReport) -> u8 {
    match fmt {
        Format::Raw => println!("{}", serde_json::to_string(r).unwrap()),
        Format::Csv => {
            println!("run_id,verdict,signal,metric,value,threshold,pass");
            for m in &r.results {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.run_id,
                    verdict(r.overall_pass),
                    m.signal.as_str(),
                    m.metric.as_str(),
                    m.value,
                    m.threshold,
                    m.pass
                );
            }
        }
        Format::Table => {
            println!("run {} {}", r.run_id, verdict(r.overall_pass));
            println!("{:<8}{:<10}{:>14}{:>14}  result", "signal", "metric", "value", "threshold");
            for m in &r.results {
                println!(
                    "{:<8}{:<10}{:>14.4e}{:>14.4e}  {}",
                    m.signal.as_str(),
                    m.metric.as_str(),
                    m.value,
                    m.threshold,
                    verdict(m.pass)
                );
            }
            if !r.notes.is_empty() {
                println!("note: {}", r.notes);
            }
        }
    }
    if r.overall_pass {
        0
    } else {
        EXIT_VALIDATION_FAILED
    }
}

fn status_done(fmt: Format, s: StatusSnapshot) -> Result<u8, ClientError> {
    print_status(fmt, &s);
    Ok(0)
}

fn print_status(fmt: Format, s: &StatusSnapshot) {
    let st = &s.state;
    match fmt {
        Format::Raw => println!("{}", serde_json::to_string(s).unwrap()),
        Format::Csv => {
            println!("homed,busy,fault_active,run_id,t,x,v,l,l_dot,theta,theta_dot,wind,magnet_on");
            println!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.homed,
                s.busy,
                s.fault_active,
                s.run_id.as_deref().unwrap_or(""),
                st.t,
                st.x,
                st.v,
                st.l,
                st.l_dot,
                st.theta,
                st.theta_dot,
                st.wind,
                st.magnet_on
            );
        }
        Format::Table => {
            let yes = |b: bool| if b { "yes" } else { "no" };
            println!("homed      {}", yes(s.homed));
            println!("busy       {}", yes(s.busy));
            println!("run        {}", s.run_id.as_deref().unwrap_or("-"));
            println!(
                "fault      {}",
                if s.fault_active {
                    format!(
                        "damping x{}, rope {:+} m, encoder {:+} rad",
                        s.fault.damping_scale, s.fault.rope_length_offset, s.fault.encoder_bias_extra
                    )
                } else {
                    "none".to_string()
                }
            );
            println!("magnet     {}", if st.magnet_on { "on" } else { "off" });
            println!("t          {:.3} s", st.t);
            println!("x          {:.4} m   v {:.4} m/s", st.x, st.v);
            println!("l          {:.4} m   l_dot {:.4} m/s", st.l, st.l_dot);
            println!("theta      {:.5} rad theta_dot {:.5} rad/s", st.theta, st.theta_dot);
            println!("wind       {:.3} m/s", st.wind);
        }
    }
}

fn print_runs(fmt: Format, runs: &[RunRecord]) {
    let fields = |r: &RunRecord| {
        [
            r.run_id.clone(),
            format!("{:?}", r.axis).to_lowercase(),
            serde_json::to_value(r.mode).unwrap().as_str().unwrap().to_string(),
            r.status.as_str().to_string(),
            r.fault_active.to_string(),
            r.started_at.to_rfc3339(),
            r.completed_at.map(|t| t.to_rfc3339()).unwrap_or_default(),
        ]
    };
    let header = ["run_id", "axis", "mode", "status", "fault", "started_at", "completed_at"];
    match fmt {
        Format::Raw => println!("{}", serde_json::to_string(runs).unwrap()),
        Format::Csv => {
            println!("{}", header.join(","));
            for r in runs {
                println!("{}", fields(r).join(","));
            }
        }
        Format::Table => {
            println!(
                "{:<34}{:<7}{:<11}{:<11}{:<7}{}",
                header[0], header[1], header[2], header[3], header[4], header[5]
            );
            for r in runs {
                let f = fields(r);
                println!("{:<34}{:<7}{:<11}{:<11}{:<7}{}", f[0], f[1], f[2], f[3], f[4], f[5]);
            }
        }
    }
}

fn export_run(client: &Client, fmt: Format, id: &str, dir: &Path) -> Result<u8, ClientError> {
    let detail = client.run(id)?;
    let mut traces = Vec::new();
    for kind in &detail.traces {
        traces.push(client.trace(id, *kind)?);
    }
    let paths = export::write_run(dir, &traces)
        .map_err(|e| ClientError::Local(format!("writing {}: {e}", dir.display())))?;
    match fmt {
        Format::Raw => {
            let files: Vec<_> = traces
                .iter()
                .zip(&paths)
                .map(|(t, p)| serde_json::json!({ "kind": t.kind, "path": p, "samples": t.samples.len() }))
                .collect();
            println!("{}", serde_json::Value::Array(files));
        }
        Format::Csv => {
            println!("kind,path,samples");
            for (t, p) in traces.iter().zip(&paths) {
                println!("{},{},{}", t.kind.as_str(), p.display(), t.samples.len());
            }
        }
        Format::Table => {
            for (t, p) in traces.iter().zip(&paths) {
                println!("{:<16}{:>7} samples  {}", t.kind.as_str(), t.samples.len(), p.display());
            }
        }
    }
    Ok(0)
}
