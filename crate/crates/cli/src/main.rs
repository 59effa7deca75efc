//! `pdfs`: provider node operation, party-side verification and
//! settlement, and the cost benchmarks, from one binary.
//!
//! Exit codes: 0 success, 2 verification failure, 3 transport failure,
//! 4 censorship timeout.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pdfs_core::bench;
use pdfs_core::chain::Keypair;
use pdfs_core::relying::{Outcome, RelyingParams};
use pdfs_core::{Address, HashKind};
use pdfs_service::http::{serve, AppState};
use pdfs_service::{
    load_shared_ledger, new_shared_ledger, ClientError, PartyClient, ProviderConfig,
    ProviderService, TrustAnchor,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Parser)]
#[command(name = "pdfs", about = "Authenticated data feed: provider node, party client, benchmarks")]
struct Cli {
    /// TOML config supplying defaults for the connection flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Defaults loadable from a TOML file; explicit flags win.
#[derive(Default, Deserialize)]
struct FileConfig {
    provider_url: Option<String>,
    ledger_url: Option<String>,
    pinned_key: Option<PathBuf>,
    key: Option<PathBuf>,
    fee_mem: Option<u64>,
    fee_query: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Args)]
struct Conn {
    /// Provider base URL, e.g. http://127.0.0.1:8080
    #[arg(long)]
    provider_url: Option<String>,
    /// Ledger base URL (defaults to the provider URL).
    #[arg(long)]
    ledger_url: Option<String>,
}

impl Conn {
    fn client(&self, file: &FileConfig) -> Result<PartyClient> {
        let provider = self
            .provider_url
            .clone()
            .or_else(|| file.provider_url.clone())
            .context("--provider-url (or provider_url in the config) is required")?;
        let ledger = self
            .ledger_url
            .clone()
            .or_else(|| file.ledger_url.clone())
            .unwrap_or_else(|| provider.clone());
        Ok(PartyClient::new(&provider, &ledger, HashKind::Keccak256))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a provider node: content endpoints, admin endpoints, and the
    /// embedded ledger, restartable from the state directory.
    Node {
        #[arg(long)]
        state_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Provider domain for the identity credential (first run only).
        #[arg(long, default_value = "feeds.example")]
        subject: String,
        /// Public URL written into the manifest (first run only).
        #[arg(long)]
        url: Option<String>,
        #[arg(long, default_value_t = 10)]
        fee_mem: u64,
        #[arg(long, default_value_t = 5)]
        fee_query: u64,
        #[arg(long, default_value_t = 16)]
        retention: usize,
        /// Censorship-responder poll interval; 0 disables the responder.
        #[arg(long, default_value_t = 1000)]
        responder_poll_ms: u64,
    },
    /// Fetch the manifest, check its signature against the pinned key, and
    /// check its entry-0 commitment on the ledger.
    ManifestVerify {
        #[command(flatten)]
        conn: Conn,
        /// File holding the provider's hex public key.
        #[arg(long)]
        pinned_key: Option<PathBuf>,
    },
    /// Deploy the two-party bet contract (escrows both deposits).
    DeployRelying {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        authoritative: Address,
        #[arg(long)]
        match_id: String,
        #[arg(long)]
        party_a: Address,
        #[arg(long)]
        party_b: Address,
        #[arg(long)]
        deposit: u64,
        /// "local" or "visitor".
        #[arg(long)]
        prediction_a: String,
        #[arg(long)]
        prediction_b: String,
        #[arg(long)]
        fee_mem: Option<u64>,
    },
    /// Fetch one entry with its membership proof.
    FetchEntry {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, conflicts_with = "id")]
        index: Option<u64>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Fetch the entry, submit it to the relying contract, report the
    /// settlement; --via-query settles from a stored on-ledger response.
    Settle {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        contract: Address,
        #[arg(long, required_unless_present = "via_query")]
        id: Option<String>,
        #[arg(long)]
        via_query: Option<u64>,
        #[arg(long)]
        fee_mem: Option<u64>,
    },
    /// Submit a paid, censorship-evident on-ledger query for an entry id.
    Query {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        key: Option<PathBuf>,
        /// The authoritative contract address.
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        id: String,
        #[arg(long)]
        fee_query: Option<u64>,
    },
    /// Poll for the provider's response; on timeout print the public
    /// evidence (the query's ledger position) and exit 4.
    AwaitResponse {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        query_id: u64,
        #[arg(long)]
        query_position: u64,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
    },
    /// Print the full ledger trace (JSON Lines).
    LedgerDump {
        #[command(flatten)]
        conn: Conn,
    },
    /// Generate a signing key, optionally funding it from the faucet.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        fund: Option<u64>,
    },
    /// Cost measurements.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Proof-size and hash-operation costs across log sizes, with log2 fits.
    Run {
        /// Comma-separated power-of-two log sizes.
        #[arg(long, value_delimiter = ',', default_value = "2,32,1024,32768,1048576")]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        trials: u32,
        #[arg(long)]
        out: PathBuf,
        /// Fit report destination (JSON); defaults next to --out.
        #[arg(long)]
        fit_out: Option<PathBuf>,
    },
    /// Trace-byte costs of on-ledger queries and responses by payload size.
    Censorship {
        #[arg(long, value_delimiter = ',', default_value = "50,150,500,1024,2048,5120")]
        sizes: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_key(path: Option<&Path>, file: &FileConfig) -> Result<Keypair> {
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| file.key.clone())
        .context("--key (or key in the config) is required")?;
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading key {}", path.display()))?;
    let seed: [u8; 32] = hex::decode(text.trim())
        .ok()
        .and_then(|b| b.try_into().ok())
        .context("key file must hold a 32-byte hex seed")?;
    Ok(Keypair::from_seed(seed))
}

fn parse_outcome(s: &str) -> Result<Outcome> {
    match s {
        "local" => Ok(Outcome::Local),
        "visitor" => Ok(Outcome::Visitor),
        other => bail!("prediction must be \"local\" or \"visitor\", got {other:?}"),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<ClientError>()
                .map(ClientError::exit_code)
                .unwrap_or(1);
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Node {
            state_dir,
            listen,
            subject,
            url,
            fee_mem,
            fee_query,
            retention,
            responder_poll_ms,
        } => run_node(
            state_dir,
            &listen,
            &subject,
            url,
            fee_mem,
            fee_query,
            retention,
            responder_poll_ms,
        ),
        Command::ManifestVerify { conn, pinned_key } => {
            let client = conn.client(&file)?;
            let pinned = pinned_key
                .or_else(|| file.pinned_key.clone())
                .context("--pinned-key (or pinned_key in the config) is required")?;
            let key_hex = std::fs::read_to_string(&pinned)
                .with_context(|| format!("reading pinned key {}", pinned.display()))?;
            let anchor = TrustAnchor::from_hex("provider", &key_hex)?;
            let manifest = client.fetch_and_verify_manifest(&anchor)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(())
        }
        Command::DeployRelying {
            conn,
            key,
            authoritative,
            match_id,
            party_a,
            party_b,
            deposit,
            prediction_a,
            prediction_b,
            fee_mem,
        } => {
            let client = conn.client(&file)?;
            let key = read_key(key.as_deref(), &file)?;
            let params = RelyingParams {
                authoritative,
                match_id,
                party_a,
                party_b,
                deposit,
                prediction_a: parse_outcome(&prediction_a)?,
                prediction_b: parse_outcome(&prediction_b)?,
                fee_mem: fee_mem.or(file.fee_mem).unwrap_or(10),
            };
            let address = client.deploy_relying(&key, &params)?;
            println!("{address}");
            Ok(())
        }
        Command::FetchEntry { conn, index, id } => {
            let client = conn.client(&file)?;
            let entry = match (index, id) {
                (Some(i), None) => client.fetch_entry_by_index(i)?,
                (None, Some(id)) => client.fetch_entry_by_id(&id)?,
                _ => bail!("exactly one of --index / --id is required"),
            };
            std::io::Write::write_all(&mut std::io::stdout(), &entry.to_bytes())?;
            println!();
            Ok(())
        }
        Command::Settle {
            conn,
            key,
            contract,
            id,
            via_query,
            fee_mem,
        } => {
            let client = conn.client(&file)?;
            let key = read_key(key.as_deref(), &file)?;
            let fee = fee_mem.or(file.fee_mem).unwrap_or(10);
            let report = match via_query {
                Some(query_id) => client.settle_via_censorship(&key, contract, query_id, fee)?,
                None => client.settle(&key, contract, id.as_deref().unwrap_or_default(), fee)?,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Query {
            conn,
            key,
            contract,
            id,
            fee_query,
        } => {
            let client = conn.client(&file)?;
            let key = read_key(key.as_deref(), &file)?;
            let fee = fee_query.or(file.fee_query).unwrap_or(5);
            let (query_id, position) = client.censor_query(&key, contract, &id, fee)?;
            println!(
                "{}",
                serde_json::json!({ "query_id": query_id, "position": position })
            );
            Ok(())
        }
        Command::AwaitResponse {
            conn,
            key,
            contract,
            query_id,
            query_position,
            timeout_secs,
            poll_ms,
        } => {
            let client = conn.client(&file)?;
            let key = read_key(key.as_deref(), &file)?;
            let entry = client.await_response(
                &key,
                contract,
                query_id,
                query_position,
                Duration::from_secs(timeout_secs),
                Duration::from_millis(poll_ms),
            )?;
            std::io::Write::write_all(&mut std::io::stdout(), &entry.to_bytes())?;
            println!();
            Ok(())
        }
        Command::LedgerDump { conn } => {
            let client = conn.client(&file)?;
            print!("{}", client.ledger_dump()?);
            Ok(())
        }
        Command::Keygen { out, conn, fund } => {
            let key = Keypair::generate(&mut rand::thread_rng());
            std::fs::write(&out, hex::encode(key.seed()))?;
            println!("address: {}", key.address());
            println!("public_key: {}", hex::encode(key.public().as_bytes()));
            if let Some(balance) = fund {
                let client = conn.client(&file)?;
                client.faucet(&key, balance)?;
                println!("funded: {balance}");
            }
            Ok(())
        }
        Command::Bench(bench_cmd) => run_bench(bench_cmd),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_node(
    state_dir: PathBuf,
    listen: &str,
    subject: &str,
    url: Option<String>,
    fee_mem: u64,
    fee_query: u64,
    retention: usize,
    responder_poll_ms: u64,
) -> Result<()> {
    let hash = HashKind::Keccak256;
    let chain_file = state_dir.join("chain.jsonl");
    let (ledger, service) = if state_dir.join("entries.jsonl").exists() {
        let ledger = load_shared_ledger(&chain_file, hash)
            .with_context(|| format!("restoring ledger from {}", chain_file.display()))?;
        let service = ProviderService::open(&state_dir, ledger.clone())?;
        println!(
            "restored: {} entries, contract {}",
            service.committed_size(),
            service.contract_address()
        );
        (ledger, service)
    } else {
        let ledger = new_shared_ledger(hash);
        let mut config = ProviderConfig::new(
            &state_dir,
            subject,
            url.as_deref().unwrap_or(&format!("http://{listen}")),
        );
        config.fee_mem = fee_mem;
        config.fee_query = fee_query;
        config.retention = retention;
        let service = ProviderService::init(&config, ledger.clone())?;
        println!(
            "initialized: contract {}, pinned key in {}",
            service.contract_address(),
            state_dir.join("identity.pub").display()
        );
        (ledger, service)
    };

    let state = AppState {
        provider: Arc::new(Mutex::new(service)),
        ledger,
        chain_file: Some(chain_file),
    };
    state.checkpoint();
    let poll = (responder_poll_ms > 0).then(|| Duration::from_millis(responder_poll_ms));
    let addr: std::net::SocketAddr = listen.parse().context("bad --listen address")?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let bound = serve(state, addr, poll).await?;
        println!("serving on http://{bound}");
        std::future::pending::<()>().await;
        Ok(())
    })
}

fn run_bench(cmd: BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Run {
            sizes,
            trials,
            out,
            fit_out,
        } => {
            let report = bench::run_suite(&sizes, trials, HashKind::Keccak256)?;
            std::fs::write(&out, report.to_csv())?;
            for skipped in &report.skipped {
                eprintln!("warning: size {skipped} exceeds the in-memory bound, skipped");
            }
            let fits = serde_json::json!({
                "membership_fit": report.membership_fit,
                "consistency_fit": report.consistency_fit,
                "parse_constant": report.parse_constant,
                "parse_tokens": report.parse_tokens,
                "skipped": report.skipped,
            });
            let fit_path = fit_out.unwrap_or_else(|| out.with_extension("fits.json"));
            std::fs::write(&fit_path, serde_json::to_vec_pretty(&fits)?)?;
            println!("{}", serde_json::to_string_pretty(&fits)?);
            println!("samples: {} -> {}", report.samples.len(), out.display());
            Ok(())
        }
        BenchCommand::Censorship { sizes, out } => {
            let report = bench::censorship_size_sweep(&sizes, HashKind::Keccak256)?;
            std::fs::write(&out, report.to_csv())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "query_fit": report.query_fit,
                    "response_fit": report.response_fit,
                    "max_pair_gap": report.max_pair_gap,
                }))?
            );
            Ok(())
        }
    }
}
