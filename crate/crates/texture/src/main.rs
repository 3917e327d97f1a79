use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use texture::api::{router, ServiceConfig};
use texture::embedder::{EmbedderConfig, DEFAULT_TIMEOUT};
use texture::records::{read_records, RecordsError};
use texture::registry::{Dataset, Registry};
use texture::store_dir::{load_store, save_store, table_row_counts};
use texture_core::{normalize_dataset, validate_schema, DatasetSchema, NormalizedStore};
use tracing_subscriber::EnvFilter;

const OPENAPI: &str = include_str!("../../../docs/openapi.json");

/// Exit status for bad arguments, unreadable files, invalid schemas and store errors.
const EXIT_FAILURE: u8 = 1;
/// Exit status for records that cannot be parsed or do not fit the schema.
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "texture", version, about = "Explore text corpora through their attributes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize newline-delimited JSON records into a store directory.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a span-list attribute of word tokens over a text attribute.
    Tokenize {
        #[arg(long)]
        store: PathBuf,
        /// Text attribute to tokenize.
        #[arg(long)]
        text: String,
        /// Name of the new attribute.
        #[arg(long, default_value = "word")]
        name: String,
    },
    /// Serve one or more stores over HTTP.
    Serve {
        #[arg(long = "store", required = true)]
        stores: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Endpoint for query embeddings: POST {"text"} answered by {"embedding"}.
        #[arg(long, env = "TEXTURE_EMBEDDER_URL")]
        embedder_url: Option<String>,
        #[arg(long, env = "TEXTURE_EMBEDDER_TOKEN", hide_env_values = true)]
        embedder_token: Option<String>,
        /// Use the built-in hashed bag-of-words embedder instead of a remote one.
        #[arg(long, conflicts_with = "embedder_url")]
        offline_embedder: bool,
        /// Per-request deadline in seconds.
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        /// Allowed CORS origin; repeatable, `*` for any.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        /// Directory of static UI files to serve.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Print a JSON profile of a store.
    Profile {
        #[arg(long)]
        store: PathBuf,
    },
    /// Print the OpenAPI description of the HTTP service.
    #[command(hide = true)]
    Openapi,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn load(dir: &Path) -> Result<NormalizedStore, Failure> {
    load_store(dir).map_err(|e| fail(EXIT_FAILURE, format!("cannot load store: {e}")))
}

fn ingest(manifest: &Path, records: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", manifest.display())))?;
    let schema: DatasetSchema = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: invalid manifest: {e}", manifest.display())))?;
    let schema = validate_schema(schema)
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", manifest.display())))?;
    let parsed = read_records(records).map_err(|e| match e {
        RecordsError::Io(e) => fail(EXIT_FAILURE, format!("{}: {e}", records.display())),
        e => fail(EXIT_DATA, format!("{}: {e}", records.display())),
    })?;
    if parsed.records.is_empty() {
        tracing::warn!("{} contains no records; writing an empty store", records.display());
    }
    let store = normalize_dataset(&parsed.records, &schema).map_err(|e| {
        fail(
            EXIT_DATA,
            format!(
                "{}: line {}, attribute `{}`: {}",
                records.display(),
                parsed.line_of(e.record),
                e.attribute,
                e.kind
            ),
        )
    })?;
    save_store(&store, out).map_err(|e| fail(EXIT_FAILURE, e))?;
    for (table, rows) in table_row_counts(&store) {
        println!("{table}: {rows} rows");
    }
    Ok(())
}

fn tokenize(dir: &Path, text: &str, name: &str) -> Result<(), Failure> {
    let store = load(dir)?;
    let store = store
        .with_tokenized(text, name)
        .map_err(|e| fail(EXIT_FAILURE, e))?;
    save_store(&store, dir).map_err(|e| fail(EXIT_FAILURE, e))?;
    let rows = store.child_table(name).map_or(0, |t| t.len());
    println!("child_{name}: {rows} rows");
    Ok(())
}

fn serve(stores: &[PathBuf], addr: SocketAddr, config: ServiceConfig) -> Result<(), Failure> {
    let mut registry = Registry::new();
    for dir in stores {
        let started = std::time::Instant::now();
        let store = load(dir)?;
        tracing::info!(
            dataset = store.name(),
            n_docs = store.n_docs(),
            elapsed_ms = started.elapsed().as_millis() as u64,
            "loaded {}",
            dir.display()
        );
        registry
            .add(Dataset::new(store))
            .map_err(|e| fail(EXIT_FAILURE, e))?;
    }
    let app = router(registry, &config);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| fail(EXIT_FAILURE, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| fail(EXIT_FAILURE, format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| fail(EXIT_FAILURE, e))?;
        tracing::info!("listening on http://{local}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| fail(EXIT_FAILURE, e))
    })
}

fn profile(dir: &Path) -> Result<(), Failure> {
    let store = load(dir)?;
    let profile = texture::profile::profile(&store).map_err(|e| fail(EXIT_FAILURE, e))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&profile).expect("profile serializes")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest {
            manifest,
            records,
            out,
        } => ingest(&manifest, &records, &out),
        Command::Tokenize { store, text, name } => tokenize(&store, &text, &name),
        Command::Serve {
            stores,
            addr,
            embedder_url,
            embedder_token,
            offline_embedder,
            timeout_secs,
            cors_origins,
            ui_dir,
        } => {
            let embedder = match (offline_embedder, embedder_url) {
                (true, _) => EmbedderConfig::Hashed,
                (false, Some(url)) => EmbedderConfig::Remote {
                    url,
                    token: embedder_token,
                    timeout: DEFAULT_TIMEOUT,
                },
                (false, None) => EmbedderConfig::None,
            };
            let config = ServiceConfig {
                embedder,
                request_timeout: Duration::from_secs(timeout_secs),
                cors_origins,
                ui_dir,
            };
            serve(&stores, addr, config)
        }
        Command::Profile { store } => profile(&store),
        Command::Openapi => {
            print!("{OPENAPI}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            EnvFilter::try_from_env("TEXTURE_LOG").unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
