//! Argument parsing and the subcommands of the `padme` binary.
//!
//! Exit codes: 0 on success, 1 when the protocol or a remote party refuses
//! the request, 2 on usage errors (bad arguments, unreadable files).

use std::ffi::OsString;
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use padme_center::{CenterClient, CenterConfig, HttpTransport};
use padme_core::crypto::{generate_keypair, open, KeyPair, KeyRole};
use padme_core::types::{AnalysisTask, ApprovalRecord, Party, Verdict};
use padme_core::{decode_train_archive, encode_train_archive};
use padme_station::admin_api::PendingList;
use padme_station::{ApprovalDecision, DecisionRequest, StationConfig};
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{run_scenario, ScenarioConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Protocol(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn protocol(e: impl std::fmt::Display) -> CliError {
    CliError::Protocol(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "padme", version, about = "Incremental analysis trains over a route of data stations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Role {
    Station,
    Researcher,
    Center,
}

#[derive(Debug, clap::Args)]
pub struct CenterArgs {
    /// Base URL of the service center.
    #[arg(long, default_value = "http://127.0.0.1:7400")]
    pub center: String,
    /// Key file used to sign requests.
    #[arg(long)]
    pub key: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair and write it as a JSON key file.
    Keygen {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        out: PathBuf,
        /// Deterministic key from a seed; for tests only.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Service center commands.
    #[command(subcommand)]
    Center(CenterCommand),
    /// Station agent commands.
    #[command(subcommand)]
    Station(StationCommand),
    /// Submit an analysis task for a route of stations.
    Submit {
        #[command(flatten)]
        conn: CenterArgs,
        /// Analysis task as JSON.
        #[arg(long)]
        task: PathBuf,
        /// Comma-separated station ids, in visiting order.
        #[arg(long, value_delimiter = ',', required = true)]
        route: Vec<String>,
    },
    /// Cast a signed vote on a submitted train, as the researcher or as a
    /// station owner.
    Vote {
        #[command(flatten)]
        conn: CenterArgs,
        #[arg(long)]
        train: String,
        /// Vote as the owner of this station instead of as the researcher.
        #[arg(long)]
        station: Option<String>,
        #[arg(long)]
        reject: bool,
    },
    /// Dispatch an approved train to its first station.
    Dispatch {
        #[command(flatten)]
        conn: CenterArgs,
        #[arg(long)]
        train: String,
    },
    /// Show route progress.
    Status {
        #[command(flatten)]
        conn: CenterArgs,
        #[arg(long)]
        train: String,
    },
    /// Print a train's audit ledger.
    Ledger {
        #[command(flatten)]
        conn: CenterArgs,
        #[arg(long)]
        train: String,
    },
    /// Fetch and decrypt the released results.
    Results {
        #[command(flatten)]
        conn: CenterArgs,
        #[arg(long)]
        train: String,
        /// Also write the decrypted train archive here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a whole scenario in one process and print its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CenterCommand {
    /// Serve the center API.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StationCommand {
    /// Run a station agent.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// List trains waiting for a decision at a station.
    Pending {
        /// Base URL of the station admin API.
        #[arg(long)]
        admin: String,
    },
    /// Approve or reject a pending train.
    Approve {
        #[arg(long)]
        admin: String,
        #[arg(long)]
        train: String,
        #[arg(long)]
        reject: bool,
        #[arg(long, default_value = "")]
        reason: String,
        /// Admin key to sign the decision with; unsigned decisions are
        /// signed by the station itself.
        #[arg(long)]
        key: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(protocol)?);
    Ok(())
}

fn block_on<F: Future<Output = Result<(), CliError>>>(f: F) -> Result<(), CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(usage)?
        .block_on(f)
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn load_key(path: &Path) -> Result<KeyPair, CliError> {
    KeyPair::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn center_client(conn: &CenterArgs) -> Result<CenterClient, CliError> {
    Ok(CenterClient::new(Arc::new(HttpTransport::new(&conn.center)), load_key(&conn.key)?))
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Keygen { role, out, seed } => {
            let role = match role {
                Role::Station => KeyRole::Station,
                Role::Researcher => KeyRole::Researcher,
                Role::Center => KeyRole::ServiceCenter,
            };
            let key = generate_keypair(role, seed);
            key.save(&out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
            println!("{}", key.key_id());
            Ok(())
        }
        Command::Center(CenterCommand::Run { config, listen, data_dir }) => {
            let mut config = match (config, data_dir.clone()) {
                (Some(path), _) => CenterConfig::load(&path).map_err(usage)?,
                (None, Some(dir)) => CenterConfig::new(dir),
                (None, None) => return Err(usage("center run needs --config or --data-dir")),
            };
            config.apply_overrides(|k| std::env::var(k).ok()).map_err(usage)?;
            if let Some(addr) = listen {
                config.listen = addr;
            }
            if let Some(dir) = data_dir {
                config.data_dir = dir;
            }
            config.validate().map_err(usage)?;
            init_logging();
            block_on(async move {
                let state = padme_center::open_state(&config).map_err(protocol)?;
                let listener = tokio::net::TcpListener::bind(config.listen).await.map_err(usage)?;
                padme_center::serve(listener, state, shutdown_signal()).await.map_err(protocol)
            })
        }
        Command::Station(StationCommand::Run { config }) => {
            let config = StationConfig::load(&config).map_err(usage)?;
            init_logging();
            block_on(async move {
                padme_station::run_station(config, shutdown_signal()).await.map_err(|e| match e {
                    padme_station::StationError::FatalConfig(m) => CliError::Usage(m),
                    other => protocol(other),
                })
            })
        }
        Command::Station(StationCommand::Pending { admin }) => block_on(async move {
            let list = fetch_pending(&admin).await?;
            print_json(&list)
        }),
        Command::Station(StationCommand::Approve {
            admin,
            train,
            reject,
            reason,
            key,
        }) => {
            let key = key.as_deref().map(load_key).transpose()?;
            let verdict = if reject { Verdict::Reject } else { Verdict::Approve };
            block_on(async move {
                let list = fetch_pending(&admin).await?;
                let pending = list
                    .pending
                    .iter()
                    .find(|p| p.train_id == train)
                    .ok_or_else(|| protocol(format!("NoSuchPending: no pending approval for train `{train}`")))?;
                let request = match &key {
                    Some(key) => DecisionRequest::signed(pending, verdict, &reason, key),
                    None => DecisionRequest::unsigned(verdict, &reason),
                };
                let url = format!("{}/pending/{train}/decision", admin.trim_end_matches('/'));
                let response = reqwest::Client::new().post(url).json(&request).send().await.map_err(protocol)?;
                let status = response.status();
                let body = response.text().await.map_err(protocol)?;
                if !status.is_success() {
                    return Err(protocol(format!("{status}: {body}")));
                }
                let decision: ApprovalDecision = serde_json::from_str(&body).map_err(protocol)?;
                print_json(&decision)
            })
        }
        Command::Submit { conn, task, route } => {
            let text = std::fs::read_to_string(&task).map_err(|e| usage(format!("{}: {e}", task.display())))?;
            let task: AnalysisTask = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", task.display())))?;
            let client = center_client(&conn)?;
            block_on(async move {
                let r = client.submit_task(task, route).await.map_err(protocol)?;
                let digest = r.manifest.binding_digest().map_err(protocol)?;
                print_json(&serde_json::json!({"train_id": r.train_id, "manifest_digest": digest}))
            })
        }
        Command::Vote {
            conn,
            train,
            station,
            reject,
        } => {
            let client = center_client(&conn)?;
            block_on(async move {
                let view = client.status(&train).await.map_err(protocol)?;
                let digest = view.manifest.binding_digest().map_err(protocol)?;
                let party = station.map_or(Party::Researcher, Party::StationOwner);
                let verdict = if reject { Verdict::Reject } else { Verdict::Approve };
                let record = ApprovalRecord::sign(&train, party, verdict, &digest, client.key());
                let status = client.approve(&train, &record).await.map_err(protocol)?;
                print_json(&serde_json::json!({"train_id": train, "status": status}))
            })
        }
        Command::Dispatch { conn, train } => {
            let client = center_client(&conn)?;
            block_on(async move {
                let status = client.dispatch(&train).await.map_err(protocol)?;
                print_json(&serde_json::json!({"train_id": train, "status": status}))
            })
        }
        Command::Status { conn, train } => {
            let client = center_client(&conn)?;
            block_on(async move { print_json(&client.status(&train).await.map_err(protocol)?) })
        }
        Command::Ledger { conn, train } => {
            let client = center_client(&conn)?;
            block_on(async move {
                let entries = client.ledger(&train).await.map_err(protocol)?;
                let center = client.center_public_key().await.map_err(protocol)?;
                let verdict = padme_core::crypto::chain_verify(&entries, &center);
                print_json(&serde_json::json!({"verification": format!("{verdict:?}"), "entries": entries}))
            })
        }
        Command::Results { conn, train, out } => {
            let client = center_client(&conn)?;
            block_on(async move {
                let bundle = client.results(&train).await.map_err(protocol)?;
                let digest = bundle.manifest.binding_digest().map_err(protocol)?;
                let bytes = open(&bundle.envelope, client.key(), &bundle.sender_public_key, digest.as_bytes())
                    .map_err(protocol)?;
                let archive = decode_train_archive(&bytes).map_err(protocol)?;
                if let Some(path) = out {
                    let encoded = encode_train_archive(&archive).map_err(protocol)?;
                    std::fs::write(&path, encoded).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                }
                print_json(&serde_json::json!({
                    "train_id": train,
                    "records_aggregated": archive.state.records_aggregated,
                    "result_summary": archive.result_summary,
                }))
            })
        }
        Command::Simulate { config, out } => {
            let config = ScenarioConfig::load(&config).map_err(|e| match e.stage.as_str() {
                "config" => usage(e),
                _ => protocol(e),
            })?;
            let run = run_scenario(&config).map_err(|e| match e.stage.as_str() {
                "config" | "fixtures" => usage(e),
                _ => protocol(e),
            })?;
            let json = serde_json::to_string_pretty(&run.report).map_err(protocol)?;
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?,
                None => println!("{json}"),
            }
            if run.report.passed {
                Ok(())
            } else {
                Err(protocol(format!("scenario checks failed: {}", run.report.failures.join("; "))))
            }
        }
    }
}

async fn fetch_pending(admin: &str) -> Result<PendingList, CliError> {
    let url = format!("{}/pending", admin.trim_end_matches('/'));
    let response = reqwest::get(url).await.map_err(protocol)?;
    if !response.status().is_success() {
        return Err(protocol(format!("admin api answered {}", response.status())));
    }
    response.json().await.map_err(protocol)
}
