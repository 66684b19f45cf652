//! `precompose`: plan compositions, drive merge sessions from files, run the
//! usage simulator, or start the HTTP API.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use precompose_core::composer::{compose, CompositionRequest, DEFAULT_MAX_DEPTH};
use precompose_core::deployment::Deployment;
use precompose_core::merger::{pivot_by_property, MergeDecision, MergeSession, MergeSettings, PivotOptions};
use precompose_core::ontology::{parse_ontology, serialize_ontology, Format, Iri, Ontology};
use precompose_core::sim::{emit_report, run_sim, ReportFormat, SimConfig};

/// Exit status when the planner finds no composition.
const EXIT_NO_PLAN: u8 = 3;

#[derive(Parser)]
#[command(name = "precompose", version, about = "Precomposed web-service framework tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compose a plan for a request against a catalog; exits 3 when none exists.
    Plan {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        request: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        depth: usize,
    },
    /// Work with merge-session files.
    #[command(subcommand)]
    Merge(MergeCommand),
    /// Run the usage simulator and write its report.
    Sim {
        /// JSON config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Subcommand)]
enum MergeCommand {
    /// Start a session from two ontology files.
    Open {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[command(flatten)]
        session: SessionFile,
        #[arg(long)]
        theta_name: Option<f64>,
        #[arg(long)]
        theta_struct: Option<f64>,
    },
    /// Print the pending suggestion queue.
    Suggestions {
        #[command(flatten)]
        session: SessionFile,
    },
    /// Apply decisions read from standard input (a JSON array, a single
    /// object, or one object per line). Nothing is written if any fails.
    Decide {
        #[command(flatten)]
        session: SessionFile,
    },
    /// Finalize the session and write the merged ontology.
    Finalize {
        #[command(flatten)]
        session: SessionFile,
        /// Output file; `.owl` writes RDF/XML, anything else canonical JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Regroup an ontology's individuals by a data property.
    Pivot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Take property, links and numbering from this catalog file.
        #[arg(long, conflicts_with_all = ["property", "link"])]
        catalog: Option<PathBuf>,
        #[arg(long, required_unless_present = "catalog")]
        property: Option<Iri>,
        /// CLASS=linkName, repeatable.
        #[arg(long, value_parser = parse_link)]
        link: Vec<(Iri, String)>,
        #[arg(long, default_value_t = 1)]
        first_number: u64,
    },
}

#[derive(Args)]
struct SessionFile {
    #[arg(long = "session")]
    path: PathBuf,
}

fn parse_link(s: &str) -> Result<(Iri, String), String> {
    let (class, link) = s.split_once('=').ok_or("expected CLASS=linkName")?;
    Ok((Iri::new(class).map_err(|e| e.to_string())?, link.to_string()))
}

struct Failure {
    code: String,
    message: String,
    exit: u8,
}

impl Failure {
    fn new(code: &str, message: impl Display) -> Self {
        Failure { code: code.to_string(), message: message.to_string(), exit: 1 }
    }
}

type Outcome = Result<u8, Failure>;

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(e.code(), e)
            }
        }
    )*};
}

coded!(
    precompose_core::ontology::OntologyError,
    precompose_core::composer::ComposeError,
    precompose_core::merger::MergeError,
    precompose_core::sim::SimError,
    precompose_server::StartError
);

impl From<precompose_core::deployment::DeploymentError> for Failure {
    fn from(e: precompose_core::deployment::DeploymentError) -> Self {
        Failure::new("CATALOG", e)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new("IO", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::new("IO", format!("{}: {e}", path.display())))
}

fn read_ontology(path: &Path) -> Result<Ontology, Failure> {
    Ok(parse_ontology(&read(path)?, Format::from_path(path))?)
}

fn write_ontology(path: &Path, o: &Ontology) -> Result<(), Failure> {
    write(path, &serialize_ontology(o, Format::from_path(path)))
}

fn load_session(f: &SessionFile) -> Result<MergeSession, Failure> {
    MergeSession::from_json(&read(&f.path)?)
        .map_err(|e| Failure::new("INVALID_SESSION", format!("{}: {e}", f.path.display())))
}

/// Pretty JSON on stdout. A closed pipe (`| head`) is not an error.
fn json_out(v: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn parse_decisions(text: &str) -> Result<Vec<MergeDecision>, Failure> {
    let bad = |e: serde_json::Error| Failure::new("INVALID_DECISION", format!("decisions on stdin: {e}"));
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(bad);
    }
    if let Ok(single) = serde_json::from_str::<MergeDecision>(trimmed) {
        return Ok(vec![single]);
    }
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(bad)).collect()
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Plan { catalog, request, depth } => {
            let d = Deployment::load(&catalog)?;
            let req: CompositionRequest = serde_json::from_slice(&read(&request)?)
                .map_err(|e| Failure::new("INVALID_REQUEST", format!("{}: {e}", request.display())))?;
            match compose(&d.catalog, &req, depth)? {
                Some(plan) => {
                    json_out(&plan);
                    Ok(0)
                }
                None => {
                    eprintln!("no composition within depth {depth}");
                    Ok(EXIT_NO_PLAN)
                }
            }
        }
        Command::Merge(m) => merge(m),
        Command::Sim { config, out, format } => {
            let cfg: SimConfig = match config {
                Some(p) => serde_json::from_slice(&read(&p)?)
                    .map_err(|e| Failure::new("INVALID_CONFIG", format!("{}: {e}", p.display())))?,
                None => SimConfig::default(),
            };
            let report = run_sim(&cfg)?;
            emit_report(&report, &out, format)?;
            Ok(0)
        }
        Command::Serve { store, catalog, bind } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("IO", e))?;
            runtime.block_on(precompose_server::run(precompose_server::ServerConfig { store, catalog, bind }))?;
            Ok(0)
        }
    }
}

fn merge(cmd: MergeCommand) -> Outcome {
    match cmd {
        MergeCommand::Open { left, right, session, theta_name, theta_struct } => {
            let mut settings = MergeSettings::default();
            if let Some(t) = theta_name {
                settings.theta_name = t;
            }
            if let Some(t) = theta_struct {
                settings.theta_struct = t;
            }
            let s = MergeSession::open(read_ontology(&left)?, read_ontology(&right)?, settings);
            write(&session.path, &s.to_json())?;
            json_out(&serde_json::json!({ "session_id": s.id(), "pending": s.pending().len() }));
        }
        MergeCommand::Suggestions { session } => json_out(&load_session(&session)?.pending()),
        MergeCommand::Decide { session } => {
            let mut s = load_session(&session)?;
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| Failure::new("IO", format!("stdin: {e}")))?;
            let decisions = parse_decisions(&text)?;
            for (i, d) in decisions.into_iter().enumerate() {
                s.apply(d).map_err(|e| {
                    let f = Failure::from(e);
                    Failure { message: format!("decision {}: {}", i + 1, f.message), ..f }
                })?;
            }
            write(&session.path, &s.to_json())?;
            json_out(&serde_json::json!({ "pending": s.pending().len(), "decisions": s.decision_log().len() }));
        }
        MergeCommand::Finalize { session, out } => {
            let mut s = load_session(&session)?;
            let merged = s.finalize()?;
            write_ontology(&out, &merged)?;
            write(&session.path, &s.to_json())?;
        }
        MergeCommand::Pivot { input, out, catalog, property, link, first_number } => {
            let o = read_ontology(&input)?;
            let result = match catalog {
                Some(c) => {
                    let d = Deployment::load(&c)?;
                    if d.pivot.is_none() {
                        return Err(Failure::new("CATALOG", "catalog defines no pivot"));
                    }
                    d.apply_pivot(o)?
                }
                None => {
                    let links: BTreeMap<Iri, String> = link.into_iter().collect();
                    let property = property.expect("required by clap");
                    pivot_by_property(&o, &property, &links, PivotOptions { first_number })?
                }
            };
            write_ontology(&out, &result)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}
