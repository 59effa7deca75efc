//! The contract party's client: verifies the provider manifest against a
//! pinned key and the on-ledger log, fetches entries with proofs, deploys
//! relying contracts, settles bets, and escalates to censorship-evident
//! on-ledger queries when HTTP fails.

use crate::provider::EntryResponse;
use pdfs_core::authoritative::{self, AuthoritativeContract};
use pdfs_core::chain::{call_tx, deploy_tx, Keypair, Receipt};
use pdfs_core::manifest::Manifest;
use pdfs_core::relying::{self, RelyingParams};
use pdfs_core::{mth_dual, Address, Digest, HashKind};
use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

/// The party's out-of-band trust decision: this provider, this key.
#[derive(Clone, Debug)]
pub struct TrustAnchor {
    pub provider_domain: String,
    pub pinned_key: VerifyingKey,
}

impl TrustAnchor {
    pub fn from_hex(provider_domain: &str, key_hex: &str) -> Result<Self, ClientError> {
        let key = hex::decode(key_hex.trim())
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .and_then(|b| VerifyingKey::from_bytes(&b).ok())
            .ok_or_else(|| {
                ClientError::Verification("pinned key is not 32 hex bytes".to_string())
            })?;
        Ok(TrustAnchor {
            provider_domain: provider_domain.to_string(),
            pinned_key: key,
        })
    }
}

/// Client failures map onto distinct exit codes so scripts can branch:
/// verification 2, transport 3, censorship timeout 4.
#[derive(Debug, Error)]
pub enum ClientError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("transport failed: {0}")]
    Transport(String),
    #[error("censorship timeout: provider never answered query {query_id}; the unanswered query is public evidence at ledger position {query_position}")]
    CensorshipTimeout { query_id: u64, query_position: u64 },
    #[error("ledger rejected transaction: {0}")]
    Rejected(String),
}

impl ClientError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Verification(_) | ClientError::Rejected(_) => 2,
            ClientError::Transport(_) => 3,
            ClientError::CensorshipTimeout { .. } => 4,
        }
    }
}

/// HTTP-facing client; the ledger endpoint usually lives on the same host
/// in this artifact, but the two base URLs are independent.
pub struct PartyClient {
    http: reqwest::blocking::Client,
    pub provider_url: String,
    pub ledger_url: String,
    pub hash: HashKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SettlementReport {
    pub settled: bool,
    pub verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    pub fee_spent: u64,
    pub tx_position: u64,
}

impl PartyClient {
    pub fn new(provider_url: &str, ledger_url: &str, hash: HashKind) -> Self {
        PartyClient {
            http: reqwest::blocking::Client::new(),
            provider_url: provider_url.trim_end_matches('/').to_string(),
            ledger_url: ledger_url.trim_end_matches('/').to_string(),
            hash,
        }
    }

    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, ClientError> {
        let response = self
            .http
            .get(url)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ClientError::Transport(format!(
                "{url} -> {}",
                response.status()
            )));
        }
        response
            .bytes()
            .map(|b| b.to_vec())
            .map_err(|e| ClientError::Transport(e.to_string()))
    }

    /// Accepts the manifest only if (a) its signature verifies under the
    /// pinned key and (b) the served bytes are committed as entry 0 of the
    /// log, proven against a retained contract root. Binding both ties the
    /// web identity to the ledger identity.
    pub fn fetch_and_verify_manifest(
        &self,
        anchor: &TrustAnchor,
    ) -> Result<Manifest, ClientError> {
        let manifest_bytes = self.get_bytes(&format!("{}/manifest", self.provider_url))?;
        let manifest = Manifest::parse(&manifest_bytes)
            .map_err(|e| ClientError::Verification(e.to_string()))?;
        manifest
            .verify(&anchor.pinned_key)
            .map_err(|e| ClientError::Verification(e.to_string()))?;

        let entry0 = self.fetch_entry_by_index(0)?;
        if entry0.content != manifest_bytes {
            return Err(ClientError::Verification(
                "entry 0 does not match the served manifest bytes".into(),
            ));
        }
        let sc_address: Address = manifest
            .signed
            .sc_address
            .parse()
            .map_err(|e: String| ClientError::Verification(e))?;
        self.verify_membership_locally(sc_address, &entry0)?;
        Ok(manifest)
    }

    /// Local replica of the contract's membership check: hash the content
    /// bytes, run the dual-root evaluation, and compare against the
    /// contract's retained roots read from the ledger.
    pub fn verify_membership_locally(
        &self,
        contract: Address,
        entry: &EntryResponse,
    ) -> Result<(), ClientError> {
        let roots = self.retained_roots(contract)?;
        let leaf = self.hash.digest(&entry.content);
        let (root, _) = mth_dual(self.hash, &entry.proofs, Some(leaf))
            .map_err(|e| ClientError::Verification(e.to_string()))?;
        if roots.contains(&root) {
            Ok(())
        } else {
            Err(ClientError::Verification(
                "membership proof does not reach any retained contract root".into(),
            ))
        }
    }

    fn retained_roots(&self, contract: Address) -> Result<Vec<Digest>, ClientError> {
        let bytes = self.get_bytes(&format!("{}/chain/contracts/{}", self.ledger_url, contract))?;
        let v: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Transport(e.to_string()))?;
        let roots = v["state"]["roots"]
            .as_object()
            .ok_or_else(|| ClientError::Verification("contract state has no roots".into()))?;
        roots
            .values()
            .map(|r| {
                r.as_str()
                    .and_then(|s| Digest::from_hex(s).ok())
                    .ok_or_else(|| ClientError::Verification("malformed root digest".into()))
            })
            .collect()
    }

    pub fn fetch_entry_by_index(&self, index: u64) -> Result<EntryResponse, ClientError> {
        let bytes = self.get_bytes(&format!("{}/entries/{index}", self.provider_url))?;
        EntryResponse::parse(&bytes).map_err(ClientError::Verification)
    }

    pub fn fetch_entry_by_id(&self, id: &str) -> Result<EntryResponse, ClientError> {
        let bytes = self.get_bytes(&format!("{}/entries?id={id}", self.provider_url))?;
        EntryResponse::parse(&bytes).map_err(ClientError::Verification)
    }

    pub fn submit_tx(&self, tx: pdfs_core::Transaction) -> Result<Receipt, ClientError> {
        let response = self
            .http
            .post(format!("{}/chain/submit", self.ledger_url))
            .json(&tx)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            let detail = response.text().unwrap_or_default();
            return Err(ClientError::Rejected(detail));
        }
        response
            .json::<Receipt>()
            .map_err(|e| ClientError::Transport(e.to_string()))
    }

    pub fn faucet(&self, key: &Keypair, balance: u64) -> Result<(), ClientError> {
        let response = self
            .http
            .post(format!("{}/chain/faucet", self.ledger_url))
            .json(&serde_json::json!({
                "public_key": hex::encode(key.public().as_bytes()),
                "balance": balance,
            }))
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ClientError::Transport(format!("faucet: {}", response.status())));
        }
        Ok(())
    }

    /// Deploys the two-party relying contract; deposits are escrowed from
    /// both parties at creation.
    pub fn deploy_relying(
        &self,
        key: &Keypair,
        params: &RelyingParams,
    ) -> Result<Address, ClientError> {
        let tx = deploy_tx(
            key,
            "relying",
            &serde_json::to_value(params).expect("params serialize"),
            0,
        );
        let receipt = self.submit_tx(tx)?;
        if !receipt.accepted() {
            return Err(ClientError::Rejected(receipt.error.unwrap_or_default()));
        }
        receipt
            .deployed
            .ok_or_else(|| ClientError::Rejected("deploy returned no address".into()))
    }

    /// The happy path: fetch the entry over HTTP, verify it locally, then
    /// submit it to the relying contract with FEE_mem attached.
    pub fn settle(
        &self,
        key: &Keypair,
        relying_contract: Address,
        entry_id: &str,
        fee_mem: u64,
    ) -> Result<SettlementReport, ClientError> {
        let entry = self.fetch_entry_by_id(entry_id).map_err(|e| match e {
            // A transport failure here is the censorship trigger.
            ClientError::Transport(msg) => ClientError::Transport(format!(
                "{msg}; provider unreachable — use `query` for an on-ledger censorship-evident request"
            )),
            other => other,
        })?;
        let tx = call_tx(
            key,
            relying_contract,
            "submit_data",
            &relying::args::submit_data(&entry.content, entry.proofs, fee_mem),
            fee_mem,
        );
        let receipt = self.submit_tx(tx)?;
        self.settlement_report(receipt, fee_mem)
    }

    fn settlement_report(
        &self,
        receipt: Receipt,
        fee_mem: u64,
    ) -> Result<SettlementReport, ClientError> {
        if !receipt.accepted() {
            return Err(ClientError::Rejected(receipt.error.unwrap_or_default()));
        }
        let value = receipt.return_value.unwrap_or_default();
        let verified = value["verified"].as_bool().unwrap_or(false);
        if !verified {
            return Err(ClientError::Verification(
                "contract-side membership verification failed; no payout".into(),
            ));
        }
        Ok(SettlementReport {
            settled: value["settled"].as_bool().unwrap_or(false),
            verified,
            outcome: value["outcome"].as_str().map(str::to_string),
            fee_spent: fee_mem,
            tx_position: receipt.position,
        })
    }

    /// Submits a paid on-ledger query for the entry with the given id.
    /// Returns (query id, ledger position of the query transaction).
    pub fn censor_query(
        &self,
        key: &Keypair,
        contract: Address,
        entry_id: &str,
        fee_query: u64,
    ) -> Result<(u64, u64), ClientError> {
        let filter = serde_json::json!({ "id": entry_id }).to_string();
        let tx = call_tx(
            key,
            contract,
            "query",
            &authoritative::args::query(filter.as_bytes(), fee_query),
            fee_query,
        );
        let receipt = self.submit_tx(tx)?;
        if !receipt.accepted() {
            return Err(ClientError::Rejected(receipt.error.unwrap_or_default()));
        }
        let id = receipt
            .return_value
            .as_ref()
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ClientError::Rejected("query returned no id".into()))?;
        Ok((id, receipt.position))
    }

    /// Polls get_response until the provider answers or the timeout lapses.
    /// The timeout error carries the query's ledger position: the publicly
    /// checkable evidence of censorship.
    pub fn await_response(
        &self,
        key: &Keypair,
        contract: Address,
        query_id: u64,
        query_position: u64,
        timeout: Duration,
        poll: Duration,
    ) -> Result<EntryResponse, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let tx = call_tx(
                key,
                contract,
                "get_response",
                &authoritative::args::get_response(query_id),
                0,
            );
            let receipt = self.submit_tx(tx)?;
            if receipt.accepted() {
                let payload_hex = receipt
                    .return_value
                    .as_ref()
                    .and_then(|v| v.as_str())
                    .unwrap_or_default()
                    .to_string();
                if !payload_hex.is_empty() {
                    let payload = hex::decode(&payload_hex)
                        .map_err(|e| ClientError::Verification(e.to_string()))?;
                    return EntryResponse::parse(&payload).map_err(ClientError::Verification);
                }
            }
            if Instant::now() >= deadline {
                return Err(ClientError::CensorshipTimeout {
                    query_id,
                    query_position,
                });
            }
            std::thread::sleep(poll);
        }
    }

    /// Settles through the censorship fallback once a response is stored.
    pub fn settle_via_censorship(
        &self,
        key: &Keypair,
        relying_contract: Address,
        query_id: u64,
        fee_mem: u64,
    ) -> Result<SettlementReport, ClientError> {
        let tx = call_tx(
            key,
            relying_contract,
            "if_censorship",
            &relying::args::if_censorship(query_id),
            fee_mem,
        );
        let receipt = self.submit_tx(tx)?;
        self.settlement_report(receipt, fee_mem)
    }

    /// The full public transcript of the ledger, one JSON object per line.
    pub fn ledger_dump(&self) -> Result<String, ClientError> {
        let bytes = self.get_bytes(&format!("{}/chain/trace", self.ledger_url))?;
        String::from_utf8(bytes).map_err(|e| ClientError::Transport(e.to_string()))
    }

    pub fn authoritative_fees(&self, contract: Address) -> Result<(u64, u64), ClientError> {
        let bytes = self.get_bytes(&format!("{}/chain/contracts/{}", self.ledger_url, contract))?;
        let v: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Transport(e.to_string()))?;
        let state: AuthoritativeContract = serde_json::from_value(v["state"].clone())
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok((state.fee_mem, state.fee_query))
    }
}
