//! `clearsign`: validate system documents, derive their signs, run the
//! gateway, and export audit traces.
//!
//! Exit codes: 0 success, 1 rule violations or a broken audit chain,
//! 2 unreadable or malformed input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use clearsign_core::audit::verify_trace;
use clearsign_core::{
    encode_sign_headers, fixtures, Engine, EngineConfig, SystemClock, SystemDocument,
};
use clearsign_gateway::GatewayConfig;

#[derive(Parser)]
#[command(
    name = "clearsign",
    version,
    about = "Transparency signs and consent enforcement for AI services"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a system document against the descriptor rules.
    Validate { file: PathBuf },
    /// Print per-service signs, the aggregate and the header values.
    Signs {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the HTTP gateway until interrupted.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Write one user's audit trace after verifying the whole chain.
    AuditExport {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        user: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the bundled fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixtureAction,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Headers,
    Json,
}

#[derive(Subcommand)]
enum FixtureAction {
    /// List fixture names.
    List,
    /// Print one fixture document.
    Show { name: String },
    /// Write every fixture below a directory.
    Write { dir: PathBuf },
}

/// A failed command: message for stderr plus exit code.
struct Failure(String, u8);

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Self(msg.into(), 2)
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Signs { file, format } => signs(&file, format),
        Command::Serve { config } => serve(&config),
        Command::AuditExport { state, user, out } => audit_export(&state, &user, out.as_deref()),
        Command::Fixtures { action } => fixture_cmd(action),
    };
    match result {
        Ok(code) => code,
        Err(Failure(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read_document(path: &Path) -> Result<SystemDocument, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    SystemDocument::parse(&text).map_err(|e| {
        Failure::input(format!(
            "{}: malformed system document: {e}",
            path.display()
        ))
    })
}

/// Every rule violation in `doc`, one line each.
fn problems(doc: &SystemDocument) -> Vec<String> {
    let mut lines: Vec<String> = doc.validate().iter().map(ToString::to_string).collect();
    if lines.is_empty() {
        if let Err(e) = doc.clone().into_registry() {
            lines.push(format!("system {}: [registry] {e}", doc.id));
        }
    }
    lines
}

fn validate(path: &Path) -> Outcome {
    let doc = read_document(path)?;
    let found = problems(&doc);
    if found.is_empty() {
        println!("ok: system {} with {} services", doc.id, doc.services.len());
        return Ok(ExitCode::SUCCESS);
    }
    for line in &found {
        println!("{line}");
    }
    println!("{} problem(s) in system {}", found.len(), doc.id);
    Ok(ExitCode::from(1))
}

fn signs(path: &Path, format: Format) -> Outcome {
    let doc = read_document(path)?;
    let found = problems(&doc);
    if !found.is_empty() {
        return Err(Failure(found.join("\n"), 1));
    }
    let (services, system) = doc.signs().map_err(|e| Failure(e.to_string(), 1))?;
    let headers = encode_sign_headers(&system);
    let out = match format {
        Format::Headers => headers.render(),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "system {}", doc.id);
            for (id, t) in &services {
                let _ = writeln!(s, "  {id}: {t}");
            }
            let _ = writeln!(s, "aggregate: {}", system.summary());
            if system.objectivity_coerced {
                let _ = writeln!(
                    s,
                    "note: objectivity raised to personalised to keep the combination valid"
                );
            }
            s.push_str(&headers.render());
            s
        }
        Format::Json => {
            let per_service: serde_json::Map<String, serde_json::Value> = services
                .iter()
                .map(|(id, t)| (id.clone(), serde_json::to_value(t).unwrap()))
                .collect();
            let header_map: serde_json::Map<String, serde_json::Value> = headers
                .iter()
                .map(|(n, v)| (n.to_owned(), v.into()))
                .collect();
            let v = serde_json::json!({
                "system_id": doc.id,
                "services": per_service,
                "aggregate": system,
                "summary": system.summary(),
                "headers": header_map,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
    };
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn serve(config: &Path) -> Outcome {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CLEARSIGN_LOG")
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cfg = GatewayConfig::load(config).map_err(|e| Failure::input(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| Failure(format!("cannot start runtime: {e}"), 1))?;
    rt.block_on(clearsign_gateway::serve(cfg))
        .map_err(|e| Failure(e.to_string(), 1))?;
    Ok(ExitCode::SUCCESS)
}

fn audit_export(state: &Path, user: &str, out: Option<&Path>) -> Outcome {
    let engine = Engine::load(state, Arc::new(SystemClock), EngineConfig::default())
        .map_err(|e| Failure::input(format!("{}: {e}", state.display())))?;
    engine
        .verify_integrity()
        .map_err(|bad| Failure(format!("audit chain broken at seq {}", bad.0), 1))?;
    let trace = engine.export_trace(user);
    verify_trace(&trace)
        .map_err(|bad| Failure(format!("trace for {user} broken at seq {}", bad.0), 1))?;
    let text = format!("{}\n", serde_json::to_string_pretty(&trace).unwrap());
    match out {
        Some(path) => {
            std::fs::write(path, text)
                .map_err(|e| Failure(format!("cannot write {}: {e}", path.display()), 1))?;
            eprintln!(
                "{} audit records for {user} written to {}",
                trace.records.len(),
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn fixture_cmd(action: FixtureAction) -> Outcome {
    match action {
        FixtureAction::List => {
            for f in fixtures::all() {
                println!("{}", f.name);
            }
        }
        FixtureAction::Show { name } => {
            let f = fixtures::by_name(&name)
                .ok_or_else(|| Failure::input(format!("no fixture named {name:?}")))?;
            print!("{}", f.json);
            if !f.json.ends_with('\n') {
                println!();
            }
        }
        FixtureAction::Write { dir } => {
            for f in fixtures::all() {
                let path = dir.join(format!("{}.json", f.name));
                let written = path
                    .parent()
                    .map_or(Ok(()), std::fs::create_dir_all)
                    .and_then(|()| std::fs::write(&path, f.json));
                written.map_err(|e| Failure(format!("cannot write {}: {e}", path.display()), 1))?;
            }
            println!(
                "wrote {} fixtures to {}",
                fixtures::all().count(),
                dir.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
