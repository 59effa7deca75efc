//! The content provider: owns the entry log, signs and publishes the
//! manifest as entry 0, pushes consistency-checked root updates to its
//! on-ledger contract, serves entries with membership proofs, and answers
//! on-ledger censorship queries.

use pdfs_core::authoritative::{self, AuthoritativeContract, AuthoritativeParams};
use pdfs_core::chain::{call_tx, deploy_tx, Keypair, Ledger, Receipt};
use pdfs_core::manifest::{IdentityCredential, Manifest, ManifestSigned};
use pdfs_core::{Address, HashKind, MerkleLog, SidedProof};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// The ledger handle shared by the provider, the HTTP chain endpoints, and
/// in-process tests.
pub type SharedLedger = Arc<Mutex<Ledger>>;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("state directory {0} already holds a service (refusing to overwrite)")]
    AlreadyInitialized(PathBuf),
    #[error("state directory {0} holds no service")]
    NotInitialized(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt state file {file}: {reason}")]
    CorruptState { file: String, reason: String },
    #[error("ledger rejected transaction: {0}")]
    LedgerRejected(String),
    #[error("contract rejected update: {0} (batch kept in staging)")]
    UpdateRejected(String),
    #[error("entry not found: {0}")]
    NotFound(String),
    #[error("entry {0} is staged but not yet committed")]
    StagedOnly(u64),
}

/// Deploy/runtime configuration for a provider instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub state_dir: PathBuf,
    pub subject: String,
    pub url: String,
    pub fee_mem: u64,
    pub fee_query: u64,
    pub retention: usize,
    pub data_structure: String,
}

impl ProviderConfig {
    pub fn new(state_dir: impl Into<PathBuf>, subject: &str, url: &str) -> Self {
        ProviderConfig {
            state_dir: state_dir.into(),
            subject: subject.to_string(),
            url: url.to_string(),
            fee_mem: 10,
            fee_query: 5,
            retention: 16,
            data_structure:
                "{id:string, local:string, visitor:string, localGoals:int, visitorGoals:int}"
                    .to_string(),
        }
    }
}

/// One persisted log entry: index plus the exact bytes served and hashed.
#[derive(Serialize, Deserialize)]
struct StoredEntry {
    i: u64,
    bytes: String,
}

#[derive(Serialize, Deserialize)]
struct IdentityFile {
    subject: String,
    seed: String,
    wallet_seed: String,
}

#[derive(Serialize, Deserialize)]
struct ContractFile {
    address: Address,
    fee_mem: u64,
    fee_query: u64,
}

pub struct ProviderService {
    state_dir: PathBuf,
    identity: IdentityCredential,
    wallet: Keypair,
    contract: Address,
    manifest: Manifest,
    log: MerkleLog,
    staging: Vec<Vec<u8>>,
    locked: bool,
    ledger: SharedLedger,
}

impl ProviderService {
    /// Creates a fresh service: identity and wallet keys, contract deploy,
    /// signed manifest appended as entry 0, and the first root update
    /// (single-entry log, empty proof).
    pub fn init(config: &ProviderConfig, ledger: SharedLedger) -> Result<Self, ProviderError> {
        let dir = &config.state_dir;
        if dir.join("entries.jsonl").exists() {
            return Err(ProviderError::AlreadyInitialized(dir.clone()));
        }
        fs::create_dir_all(dir)?;

        let mut rng = rand::thread_rng();
        let identity = IdentityCredential::generate(&config.subject, &mut rng);
        let wallet = Keypair::generate(&mut rng);

        let hash = {
            let mut l = ledger.lock().unwrap();
            l.create_account(wallet.public(), 1_000_000);
            l.hash_kind()
        };

        let params = serde_json::to_value(AuthoritativeParams {
            fee_mem: config.fee_mem,
            fee_query: config.fee_query,
            retention: config.retention,
        })
        .expect("params serialize");
        let receipt = submit(&ledger, deploy_tx(&wallet, "authoritative", &params, 0))?;
        let contract = receipt
            .deployed
            .ok_or_else(|| ProviderError::LedgerRejected("deploy returned no address".into()))?;

        let manifest = identity.sign_manifest(ManifestSigned {
            url: config.url.clone(),
            sc_address: contract.to_string(),
            sc_interface: AuthoritativeContract::interface_descriptor(
                config.fee_mem,
                config.fee_query,
            ),
            data_structure: config.data_structure.clone(),
        });

        let mut log = MerkleLog::new(hash);
        let manifest_bytes = manifest.canonical_bytes();
        log.append(&manifest_bytes)
            .map_err(|e| ProviderError::LedgerRejected(e.to_string()))?;

        let update = call_tx(
            &wallet,
            contract,
            "update",
            &authoritative::args::update(log.root().expect("one entry"), SidedProof::default()),
            0,
        );
        let receipt = submit(&ledger, update)?;
        if !receipt.accepted() {
            return Err(ProviderError::LedgerRejected(
                receipt.error.unwrap_or_default(),
            ));
        }

        let service = ProviderService {
            state_dir: dir.clone(),
            identity,
            wallet,
            contract,
            manifest,
            log,
            staging: Vec::new(),
            locked: false,
            ledger,
        };
        service.persist_keys(config)?;
        service.append_entry_file("entries.jsonl", 0, &manifest_bytes)?;
        Ok(service)
    }

    /// Reopens a persisted service, rebuilding the tree cache from the
    /// entry file.
    pub fn open(state_dir: &Path, ledger: SharedLedger) -> Result<Self, ProviderError> {
        let entries_path = state_dir.join("entries.jsonl");
        if !entries_path.exists() {
            return Err(ProviderError::NotInitialized(state_dir.to_path_buf()));
        }
        let identity_file: IdentityFile = read_json(&state_dir.join("identity.json"))?;
        let contract_file: ContractFile = read_json(&state_dir.join("contract.json"))?;
        let identity = IdentityCredential::new(
            &identity_file.subject,
            decode_seed(&identity_file.seed, "identity.json")?,
        );
        let wallet = Keypair::from_seed(decode_seed(&identity_file.wallet_seed, "identity.json")?);

        let hash = ledger.lock().unwrap().hash_kind();
        let mut log = MerkleLog::new(hash);
        let mut manifest_bytes = Vec::new();
        for (i, bytes) in read_entries(&entries_path)? {
            if i == 0 {
                manifest_bytes = bytes.clone();
            }
            log.append(&bytes)
                .map_err(|e| ProviderError::CorruptState {
                    file: "entries.jsonl".into(),
                    reason: e.to_string(),
                })?;
        }
        let manifest = Manifest::parse(&manifest_bytes).map_err(|e| ProviderError::CorruptState {
            file: "entries.jsonl".into(),
            reason: format!("entry 0 is not a manifest: {e}"),
        })?;

        let staging_path = state_dir.join("staging.jsonl");
        let staging = if staging_path.exists() {
            read_entries(&staging_path)?.into_iter().map(|(_, b)| b).collect()
        } else {
            Vec::new()
        };
        let locked = {
            let l = ledger.lock().unwrap();
            l.contract_state::<AuthoritativeContract>(contract_file.address)
                .map(|c| c.locked)
                .unwrap_or(false)
        };

        Ok(ProviderService {
            state_dir: state_dir.to_path_buf(),
            identity,
            wallet,
            contract: contract_file.address,
            manifest,
            log,
            staging,
            locked,
            ledger,
        })
    }

    pub fn contract_address(&self) -> Address {
        self.contract
    }

    pub fn wallet_address(&self) -> Address {
        self.wallet.address()
    }

    pub fn identity_public(&self) -> ed25519_dalek::VerifyingKey {
        self.identity.public()
    }

    pub fn manifest_bytes(&self) -> Vec<u8> {
        self.manifest.canonical_bytes()
    }

    pub fn committed_size(&self) -> u64 {
        self.log.size()
    }

    pub fn staged_count(&self) -> usize {
        self.staging.len()
    }

    pub fn ledger(&self) -> &SharedLedger {
        &self.ledger
    }

    /// Current serving root: size, root hash, and the contract's accepted
    /// update timestamp.
    pub fn root_info(&self) -> serde_json::Value {
        let timestamp = {
            let l = self.ledger.lock().unwrap();
            l.contract_state::<AuthoritativeContract>(self.contract)
                .map(|c| c.time)
                .unwrap_or(0)
        };
        serde_json::json!({
            "size": self.log.size(),
            "root": self.log.root().map(|r| r.to_hex()),
            "timestamp": timestamp,
        })
    }

    /// Appends a batch, commits the new root on-ledger with a consistency
    /// proof, and only then makes the entries fetchable. On rejection the
    /// batch stays in the staging area.
    pub fn publish(&mut self, batch: &[Vec<u8>]) -> Result<PublishOutcome, ProviderError> {
        let mut pending: Vec<Vec<u8>> = std::mem::take(&mut self.staging);
        pending.extend(batch.iter().cloned());
        if pending.is_empty() {
            return Ok(PublishOutcome {
                size: self.log.size(),
                root: self.log.root().expect("manifest entry").to_hex(),
                committed: 0,
            });
        }

        let old_size = self.log.size();
        let mut candidate = self.log.clone();
        for entry in &pending {
            if let Err(e) = candidate.append(entry) {
                self.staging = pending;
                self.persist_staging()?;
                return Err(ProviderError::UpdateRejected(e.to_string()));
            }
        }
        let proof = candidate
            .consistency_proof(old_size)
            .expect("old_size < new size");
        let update = call_tx(
            &self.wallet,
            self.contract,
            "update",
            &authoritative::args::update(candidate.root().expect("non-empty"), proof),
            0,
        );
        let receipt = submit(&self.ledger, update)?;
        if !receipt.accepted() {
            // Operational alarm: the entries stay staged, nothing is served.
            self.staging = pending;
            self.persist_staging()?;
            return Err(ProviderError::UpdateRejected(
                receipt.error.unwrap_or_default(),
            ));
        }

        for (offset, entry) in pending.iter().enumerate() {
            self.append_entry_file("entries.jsonl", old_size + offset as u64, entry)?;
        }
        let committed = pending.len();
        self.log = candidate;
        self.staging.clear();
        self.persist_staging()?;
        Ok(PublishOutcome {
            size: self.log.size(),
            root: self.log.root().expect("non-empty").to_hex(),
            committed,
        })
    }

    /// Parks entries in the staging area without committing them.
    pub fn stage(&mut self, batch: &[Vec<u8>]) -> Result<(), ProviderError> {
        self.staging.extend(batch.iter().cloned());
        self.persist_staging()
    }

    /// Serves the entry at `index`: exact stored bytes plus a membership
    /// proof against the current root.
    pub fn serve_index(&self, index: u64) -> Result<EntryResponse, ProviderError> {
        if index >= self.log.size() {
            let staged_end = self.log.size() + self.staging.len() as u64;
            if index < staged_end {
                return Err(ProviderError::StagedOnly(index));
            }
            return Err(ProviderError::NotFound(format!("index {index}")));
        }
        let content = self.log.entry(index).expect("in range").to_vec();
        let proofs = self.log.membership_proof(index).expect("in range");
        Ok(EntryResponse { content, proofs })
    }

    /// Serves the first committed entry whose JSON "id" field equals `id`.
    pub fn serve_id(&self, id: &str) -> Result<EntryResponse, ProviderError> {
        for index in 0..self.log.size() {
            let bytes = self.log.entry(index).expect("in range");
            if entry_id(bytes).as_deref() == Some(id) {
                return self.serve_index(index);
            }
        }
        if self.staging.iter().any(|b| entry_id(b).as_deref() == Some(id)) {
            return Err(ProviderError::StagedOnly(self.log.size()));
        }
        Err(ProviderError::NotFound(format!("id {id:?}")))
    }

    /// Answers every pending on-ledger query once: resolves the filter
    /// against the log and stores the serialized entry + proof, or a
    /// well-formed "no match" payload. Returns the ids answered.
    pub fn respond_pending(&mut self) -> Result<Vec<u64>, ProviderError> {
        let pending: Vec<(u64, Vec<u8>)> = {
            let l = self.ledger.lock().unwrap();
            let Some(state) = l.contract_state::<AuthoritativeContract>(self.contract) else {
                return Ok(Vec::new());
            };
            state
                .queries
                .iter()
                .filter(|(id, _)| !state.responses.contains_key(id))
                .map(|(id, filter)| (*id, filter.0.clone()))
                .collect()
        };
        let mut answered = Vec::new();
        for (id, filter) in pending {
            let payload = match self.resolve_filter(&filter) {
                Some(response) => response.to_bytes(),
                None => br#"{"error":"no match"}"#.to_vec(),
            };
            let tx = call_tx(
                &self.wallet,
                self.contract,
                "store_response",
                &authoritative::args::store_response(id, &payload),
                0,
            );
            let receipt = submit(&self.ledger, tx)?;
            if receipt.accepted() {
                answered.push(id);
            }
        }
        Ok(answered)
    }

    fn resolve_filter(&self, filter: &[u8]) -> Option<EntryResponse> {
        let parsed: serde_json::Value = serde_json::from_slice(filter).ok()?;
        let id = parsed.get("id")?.as_str()?;
        self.serve_id(id).ok()
    }

    /// Freezes the contract. Serving continues read-only; further publishes
    /// fail at the contract.
    pub fn lock(&mut self) -> Result<(), ProviderError> {
        if self.locked {
            return Ok(());
        }
        let tx = call_tx(&self.wallet, self.contract, "lock", &serde_json::json!({}), 0);
        let receipt = submit(&self.ledger, tx)?;
        if !receipt.accepted() {
            return Err(ProviderError::LedgerRejected(
                receipt.error.unwrap_or_default(),
            ));
        }
        self.locked = true;
        Ok(())
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    fn persist_keys(&self, config: &ProviderConfig) -> Result<(), ProviderError> {
        write_json(
            &self.state_dir.join("identity.json"),
            &IdentityFile {
                subject: self.identity.subject.clone(),
                seed: hex::encode(self.identity.seed()),
                wallet_seed: hex::encode(self.wallet.seed()),
            },
        )?;
        write_json(
            &self.state_dir.join("contract.json"),
            &ContractFile {
                address: self.contract,
                fee_mem: config.fee_mem,
                fee_query: config.fee_query,
            },
        )?;
        // The pinned-key file parties distribute out of band.
        fs::write(
            self.state_dir.join("identity.pub"),
            hex::encode(self.identity.public().as_bytes()),
        )?;
        Ok(())
    }

    fn append_entry_file(&self, file: &str, index: u64, bytes: &[u8]) -> Result<(), ProviderError> {
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.state_dir.join(file))?;
        let line = serde_json::to_string(&StoredEntry {
            i: index,
            bytes: hex::encode(bytes),
        })
        .expect("entry serializes");
        writeln!(f, "{line}")?;
        Ok(())
    }

    fn persist_staging(&self) -> Result<(), ProviderError> {
        let path = self.state_dir.join("staging.jsonl");
        let mut out = String::new();
        for (offset, bytes) in self.staging.iter().enumerate() {
            out.push_str(
                &serde_json::to_string(&StoredEntry {
                    i: self.log.size() + offset as u64,
                    bytes: hex::encode(bytes),
                })
                .expect("entry serializes"),
            );
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PublishOutcome {
    pub size: u64,
    pub root: String,
    pub committed: usize,
}

/// An entry as served over HTTP and embedded in censorship responses:
/// the exact content bytes plus the sided membership proof.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryResponse {
    pub content: Vec<u8>,
    pub proofs: SidedProof,
}

impl EntryResponse {
    /// `{"content":<exact bytes>,"proofs":[...]}` — content is spliced in
    /// verbatim so the receiver can re-hash the same bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.content.len() + 64);
        out.extend_from_slice(b"{\"content\":");
        out.extend_from_slice(&self.content);
        out.extend_from_slice(b",\"proofs\":");
        out.extend_from_slice(
            serde_json::to_string(&self.proofs)
                .expect("proof serializes")
                .as_bytes(),
        );
        out.push(b'}');
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<EntryResponse, String> {
        #[derive(Deserialize)]
        struct Wire<'a> {
            #[serde(borrow)]
            content: &'a serde_json::value::RawValue,
            proofs: SidedProof,
        }
        let wire: Wire = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        Ok(EntryResponse {
            content: wire.content.get().as_bytes().to_vec(),
            proofs: wire.proofs,
        })
    }
}

fn entry_id(bytes: &[u8]) -> Option<String> {
    let v: serde_json::Value = serde_json::from_slice(bytes).ok()?;
    v.get("id")?.as_str().map(str::to_string)
}

fn submit(ledger: &SharedLedger, tx: pdfs_core::Transaction) -> Result<Receipt, ProviderError> {
    ledger
        .lock()
        .unwrap()
        .submit(tx)
        .map_err(|e| ProviderError::LedgerRejected(e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ProviderError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ProviderError::CorruptState {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ProviderError> {
    fs::write(path, serde_json::to_vec_pretty(value).expect("serializes"))?;
    Ok(())
}

fn read_entries(path: &Path) -> Result<Vec<(u64, Vec<u8>)>, ProviderError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let entry: StoredEntry =
            serde_json::from_str(line).map_err(|e| ProviderError::CorruptState {
                file: path.display().to_string(),
                reason: e.to_string(),
            })?;
        let bytes = hex::decode(&entry.bytes).map_err(|e| ProviderError::CorruptState {
            file: path.display().to_string(),
            reason: e.to_string(),
        })?;
        out.push((entry.i, bytes));
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}

fn decode_seed(hex_seed: &str, file: &str) -> Result<[u8; 32], ProviderError> {
    hex::decode(hex_seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| ProviderError::CorruptState {
            file: file.to_string(),
            reason: "seed is not 32 hex bytes".into(),
        })
}

/// Convenience for tests and the CLI: a fresh logical-time ledger with the
/// standard contract registry.
pub fn new_shared_ledger(hash: HashKind) -> SharedLedger {
    Arc::new(Mutex::new(Ledger::new(
        hash,
        pdfs_core::default_registry(),
        pdfs_core::TimeMode::Logical,
    )))
}

/// Rebuilds a ledger from a persisted event file (one JSON event per line).
pub fn load_shared_ledger(path: &Path, hash: HashKind) -> Result<SharedLedger, ProviderError> {
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let event: pdfs_core::chain::LedgerEvent =
            serde_json::from_str(line).map_err(|e| ProviderError::CorruptState {
                file: path.display().to_string(),
                reason: e.to_string(),
            })?;
        events.push(event);
    }
    let ledger = Ledger::from_events(hash, pdfs_core::default_registry(), &events).map_err(
        |reason| ProviderError::CorruptState {
            file: path.display().to_string(),
            reason,
        },
    )?;
    Ok(Arc::new(Mutex::new(ledger)))
}
