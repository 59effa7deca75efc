//! Deterministic in-process ledger: ordered signed transactions with block
//! timestamps, account balances, and replayable contract execution.
//!
//! The ledger is a single serialization point. Every submitted transaction
//! is recorded (including failed ones), contract handlers run atomically,
//! and replaying the event sequence from genesis reproduces all contract
//! state bit-exactly. Receipts carry the number of hash-function invocations
//! a handler performed, which stands in for gas in the benchmarks.

use crate::hash::{Digest, HashKind};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const ADDRESS_LEN: usize = 20;

/// 20-byte account / contract identifier, rendered as 0x-prefixed hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    /// The reserved system address: transfers and deploys target it.
    pub const ZERO: Address = Address([0u8; ADDRESS_LEN]);

    /// Address of an account key: trailing 20 bytes of Keccak-256 of the
    /// public key bytes.
    pub fn of_key(key: &VerifyingKey) -> Address {
        let d = HashKind::Keccak256.digest(key.as_bytes());
        let mut out = [0u8; ADDRESS_LEN];
        out.copy_from_slice(&d.0[12..32]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex_part = s.strip_prefix("0x").unwrap_or(s);
        let bytes = hex::decode(hex_part).map_err(|e| format!("bad address {s:?}: {e}"))?;
        if bytes.len() != ADDRESS_LEN {
            return Err(format!("address must be {ADDRESS_LEN} bytes, got {}", bytes.len()));
        }
        let mut out = [0u8; ADDRESS_LEN];
        out.copy_from_slice(&bytes);
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A signing keypair for ledger interactions (the wallet key).
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn generate<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Keypair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Keypair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn address(&self) -> Address {
        Address::of_key(&self.public())
    }

    pub fn sign_tx(&self, body: TxBody) -> Transaction {
        let sig = self.signing.sign(&body.signing_bytes());
        Transaction {
            body,
            signature: hex::encode(sig.to_bytes()),
        }
    }

    pub fn sign_raw(&self, bytes: &[u8]) -> Signature {
        self.signing.sign(bytes)
    }
}

/// The signed portion of a transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxBody {
    pub sender: Address,
    pub target: Address,
    pub function: String,
    /// Canonical argument encoding (JSON bytes), hex in serialized form.
    #[serde(with = "hex_bytes")]
    pub args: Vec<u8>,
    pub fee: u64,
}

impl TxBody {
    pub fn signing_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("tx body serializes")
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// A signed, ordered ledger event. The block timestamp is assigned by the
/// ledger at inclusion time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub body: TxBody,
    /// Hex-encoded Ed25519 signature over the body's canonical bytes.
    pub signature: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxStatus {
    Accepted,
    Failed,
}

/// Outcome of a submitted transaction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Receipt {
    pub position: u64,
    pub timestamp: u64,
    pub status: TxStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_value: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub hash_ops: u64,
    pub parse_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deployed: Option<Address>,
}

impl Receipt {
    pub fn accepted(&self) -> bool {
        self.status == TxStatus::Accepted
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordedTx {
    pub position: u64,
    pub timestamp: u64,
    pub tx: Transaction,
    pub status: TxStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of the exported ledger trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceLine {
    pub position: u64,
    pub timestamp: u64,
    pub sender: Address,
    pub target: Address,
    pub function: String,
    pub args_hex: String,
    pub fee: u64,
    pub status: TxStatus,
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("bad transaction signature")]
    BadSignature,
    #[error("insufficient balance: need {needed}, have {available}")]
    InsufficientBalance { needed: u64, available: u64 },
    #[error("unknown target contract {0}")]
    UnknownTarget(Address),
}

/// Error raised inside a contract handler; the transaction is recorded as
/// failed and all state changes are rolled back.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HandlerError {
    #[error("assertion failed: {0}")]
    Assert(String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("unknown contract {0}")]
    UnknownContract(Address),
    #[error("transfer failed: {0}")]
    Transfer(String),
    #[error("fee claims ({claimed}) exceed attached fee ({attached})")]
    FeeOverclaim { claimed: u64, attached: u64 },
    #[error("{0}")]
    Other(String),
}

/// Asserts a handler precondition, mirroring on-chain `Assert` statements.
pub fn assert_that(cond: bool, msg: &str) -> Result<(), HandlerError> {
    if cond {
        Ok(())
    } else {
        Err(HandlerError::Assert(msg.to_string()))
    }
}

/// Replicated contract state hosted on the ledger.
pub trait SmartContract: Send {
    fn call(
        &mut self,
        ctx: &mut CallCtx<'_>,
        function: &str,
        args: &[u8],
    ) -> Result<serde_json::Value, HandlerError>;

    fn clone_box(&self) -> Box<dyn SmartContract>;

    /// Canonical JSON view of the state, used for digests and read access.
    fn state_json(&self) -> serde_json::Value;

    fn as_any(&self) -> &dyn Any;
}

impl Clone for Box<dyn SmartContract> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub type Constructor = fn(
    ctx: &mut CallCtx<'_>,
    owner: Address,
    params: &serde_json::Value,
) -> Result<Box<dyn SmartContract>, HandlerError>;

/// Maps deployable code ids to constructors; replay uses the same registry
/// to rebuild contract instances.
#[derive(Clone, Default)]
pub struct ContractRegistry {
    constructors: BTreeMap<String, Constructor>,
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, code_id: &str, ctor: Constructor) {
        self.constructors.insert(code_id.to_string(), ctor);
    }

    fn get(&self, code_id: &str) -> Option<Constructor> {
        self.constructors.get(code_id).copied()
    }
}

#[derive(Clone)]
struct ContractEntry {
    owner: Address,
    code_id: String,
    state: Box<dyn SmartContract>,
}

#[derive(Clone, Debug)]
pub struct AccountInfo {
    /// None for contract escrow balances, which have no signing key.
    pub public_key: Option<VerifyingKey>,
    pub balance: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// One tick per transaction; fully reproducible.
    #[default]
    Logical,
    /// Unix milliseconds, clamped to stay strictly increasing.
    WallClock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Transfer {
    from: Address,
    to: Address,
    amount: u64,
}

/// Mutable execution environment shared by the call stack of one transaction.
pub struct ExecEnv {
    hash: HashKind,
    now: u64,
    tx_sender: Address,
    tx_fee: u64,
    contracts: BTreeMap<Address, ContractEntry>,
    hash_ops: u64,
    parse_tokens: u64,
    transfers: Vec<Transfer>,
    fee_claimed: u64,
}

/// Per-call view handed to contract handlers.
pub struct CallCtx<'e> {
    env: &'e mut ExecEnv,
    /// The immediate caller: the tx sender, or the calling contract.
    pub sender: Address,
    /// Address of the executing contract (zero during construction).
    pub this: Address,
    /// Owner of the executing contract.
    pub owner: Address,
    /// Fee attached to this call.
    pub fee: u64,
}

impl CallCtx<'_> {
    pub fn now(&self) -> u64 {
        self.env.now
    }

    pub fn hash(&self) -> HashKind {
        self.env.hash
    }

    pub fn hash_ops_mut(&mut self) -> &mut u64 {
        &mut self.env.hash_ops
    }

    pub fn count_hash_op(&mut self) {
        self.env.hash_ops += 1;
    }

    pub fn count_parse_tokens(&mut self, n: u64) {
        self.env.parse_tokens += n;
    }

    /// Claims `amount` of the attached transaction fee for this contract's
    /// owner. The total claimed across the call stack may not exceed the
    /// fee the sender attached.
    pub fn claim_fee(&mut self, amount: u64) -> Result<(), HandlerError> {
        let claimed = self.env.fee_claimed + amount;
        if claimed > self.env.tx_fee {
            return Err(HandlerError::FeeOverclaim {
                claimed,
                attached: self.env.tx_fee,
            });
        }
        self.env.fee_claimed = claimed;
        let transfer = Transfer {
            from: self.env.tx_sender,
            to: self.owner,
            amount,
        };
        self.env.transfers.push(transfer);
        Ok(())
    }

    /// Records a balance transfer, applied atomically when the transaction
    /// commits.
    pub fn transfer(&mut self, from: Address, to: Address, amount: u64) {
        self.env.transfers.push(Transfer { from, to, amount });
    }

    /// Synchronous contract-to-contract call. Re-entering a contract already
    /// on the call stack is rejected.
    pub fn call_contract(
        &mut self,
        target: Address,
        function: &str,
        args: &[u8],
        fee: u64,
    ) -> Result<serde_json::Value, HandlerError> {
        let mut entry = self
            .env
            .contracts
            .remove(&target)
            .ok_or(HandlerError::UnknownContract(target))?;
        let caller = self.this;
        let mut child = CallCtx {
            env: self.env,
            sender: caller,
            this: target,
            owner: entry.owner,
            fee,
        };
        let result = entry.state.call(&mut child, function, args);
        self.env.contracts.insert(target, entry);
        result
    }
}

#[derive(Clone)]
enum Event {
    CreateAccount { public_key: VerifyingKey, balance: u64 },
    Tx(RecordedTx),
}

/// Persistable ledger event, one JSON object per line in dump files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LedgerEvent {
    CreateAccount { public_key: String, balance: u64 },
    Tx { recorded: RecordedTx },
}

/// The deterministic ledger: accounts, contracts, and the ordered
/// transaction history.
#[derive(Clone)]
pub struct Ledger {
    hash: HashKind,
    registry: ContractRegistry,
    time_mode: TimeMode,
    accounts: BTreeMap<Address, AccountInfo>,
    contracts: BTreeMap<Address, ContractEntry>,
    events: Vec<Event>,
    tx_count: u64,
    clock: u64,
}

#[derive(Serialize, Deserialize)]
struct TransferArgs {
    to: Address,
    amount: u64,
}

#[derive(Serialize, Deserialize)]
struct DeployArgs {
    code_id: String,
    params: serde_json::Value,
}

impl Ledger {
    pub fn new(hash: HashKind, registry: ContractRegistry, time_mode: TimeMode) -> Self {
        Ledger {
            hash,
            registry,
            time_mode,
            accounts: BTreeMap::new(),
            contracts: BTreeMap::new(),
            events: Vec::new(),
            tx_count: 0,
            clock: 0,
        }
    }

    pub fn hash_kind(&self) -> HashKind {
        self.hash
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    pub fn account(&self, addr: Address) -> Option<&AccountInfo> {
        self.accounts.get(&addr)
    }

    /// Registers an account with an initial balance (genesis / faucet).
    pub fn create_account(&mut self, public_key: VerifyingKey, balance: u64) -> Address {
        let addr = Address::of_key(&public_key);
        self.events.push(Event::CreateAccount { public_key, balance });
        let entry = self.accounts.entry(addr).or_insert(AccountInfo {
            public_key: Some(public_key),
            balance: 0,
        });
        entry.public_key = Some(public_key);
        entry.balance += balance;
        addr
    }

    fn next_timestamp(&self) -> u64 {
        match self.time_mode {
            TimeMode::Logical => self.clock + 1,
            TimeMode::WallClock => {
                let now = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0);
                now.max(self.clock + 1)
            }
        }
    }

    /// Applies one signed transaction. Signature or balance failures are
    /// rejected before inclusion; handler failures are recorded as failed
    /// transactions with state unchanged and the fee refunded.
    pub fn submit(&mut self, tx: Transaction) -> Result<Receipt, SubmitError> {
        let sender = tx.body.sender;
        let account = self
            .accounts
            .get(&sender)
            .ok_or(SubmitError::UnknownSender(sender))?;
        let sig_bytes: [u8; 64] = hex::decode(&tx.signature)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or(SubmitError::BadSignature)?;
        let signature = Signature::from_bytes(&sig_bytes);
        let public_key = account.public_key.ok_or(SubmitError::UnknownSender(sender))?;
        public_key
            .verify(&tx.body.signing_bytes(), &signature)
            .map_err(|_| SubmitError::BadSignature)?;
        if account.balance < tx.body.fee {
            return Err(SubmitError::InsufficientBalance {
                needed: tx.body.fee,
                available: account.balance,
            });
        }
        if tx.body.target != Address::ZERO && !self.contracts.contains_key(&tx.body.target) {
            return Err(SubmitError::UnknownTarget(tx.body.target));
        }

        let position = self.tx_count;
        let timestamp = self.next_timestamp();
        let outcome = self.execute(&tx, position, timestamp);

        let (status, return_value, error, hash_ops, parse_tokens, deployed) = match outcome {
            Ok(exec) => (
                TxStatus::Accepted,
                exec.return_value,
                None,
                exec.hash_ops,
                exec.parse_tokens,
                exec.deployed,
            ),
            Err(e) => (TxStatus::Failed, None, Some(e.to_string()), 0, 0, None),
        };

        self.events.push(Event::Tx(RecordedTx {
            position,
            timestamp,
            tx,
            status,
            error: error.clone(),
        }));
        self.tx_count += 1;
        self.clock = timestamp;

        Ok(Receipt {
            position,
            timestamp,
            status,
            return_value,
            error,
            hash_ops,
            parse_tokens,
            deployed,
        })
    }

    fn execute(
        &mut self,
        tx: &Transaction,
        position: u64,
        timestamp: u64,
    ) -> Result<ExecOutcome, HandlerError> {
        let snapshot = self.contracts.clone();
        let mut env = ExecEnv {
            hash: self.hash,
            now: timestamp,
            tx_sender: tx.body.sender,
            tx_fee: tx.body.fee,
            contracts: std::mem::take(&mut self.contracts),
            hash_ops: 0,
            parse_tokens: 0,
            transfers: Vec::new(),
            fee_claimed: 0,
        };

        let result = if tx.body.target == Address::ZERO {
            self.execute_builtin(&mut env, tx, position)
        } else {
            let target = tx.body.target;
            match env.contracts.remove(&target) {
                None => Err(HandlerError::UnknownContract(target)),
                Some(mut entry) => {
                    let mut ctx = CallCtx {
                        env: &mut env,
                        sender: tx.body.sender,
                        this: target,
                        owner: entry.owner,
                        fee: tx.body.fee,
                    };
                    let r = entry
                        .state
                        .call(&mut ctx, &tx.body.function, &tx.body.args)
                        .map(|v| (Some(v), None));
                    env.contracts.insert(target, entry);
                    r
                }
            }
        };

        match result.and_then(|ok| {
            Self::apply_transfers(&mut self.accounts, &env.transfers).map(|()| ok)
        }) {
            Ok((return_value, deployed)) => {
                self.contracts = env.contracts;
                Ok(ExecOutcome {
                    return_value,
                    deployed,
                    hash_ops: env.hash_ops,
                    parse_tokens: env.parse_tokens,
                })
            }
            Err(e) => {
                self.contracts = snapshot;
                Err(e)
            }
        }
    }

    fn execute_builtin(
        &mut self,
        env: &mut ExecEnv,
        tx: &Transaction,
        position: u64,
    ) -> Result<(Option<serde_json::Value>, Option<Address>), HandlerError> {
        match tx.body.function.as_str() {
            "transfer" => {
                let args: TransferArgs = serde_json::from_slice(&tx.body.args)
                    .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
                if !self.accounts.contains_key(&args.to) {
                    return Err(HandlerError::Transfer(format!(
                        "unknown recipient {}",
                        args.to
                    )));
                }
                env.transfers.push(Transfer {
                    from: tx.body.sender,
                    to: args.to,
                    amount: args.amount,
                });
                Ok((None, None))
            }
            "deploy" => {
                let args: DeployArgs = serde_json::from_slice(&tx.body.args)
                    .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
                let ctor = self
                    .registry
                    .get(&args.code_id)
                    .ok_or_else(|| HandlerError::BadArgs(format!("unknown code id {:?}", args.code_id)))?;
                let addr = derive_contract_address(tx.body.sender, position);
                let owner = tx.body.sender;
                let mut ctx = CallCtx {
                    env,
                    sender: owner,
                    this: addr,
                    owner,
                    fee: tx.body.fee,
                };
                let state = ctor(&mut ctx, owner, &args.params)?;
                env.contracts.insert(
                    addr,
                    ContractEntry {
                        owner,
                        code_id: args.code_id,
                        state,
                    },
                );
                Ok((Some(serde_json::json!(addr.to_string())), Some(addr)))
            }
            other => Err(HandlerError::UnknownFunction(other.to_string())),
        }
    }

    fn apply_transfers(
        accounts: &mut BTreeMap<Address, AccountInfo>,
        transfers: &[Transfer],
    ) -> Result<(), HandlerError> {
        // Validate against a scratch balance view before touching anything.
        let mut scratch: BTreeMap<Address, u64> = BTreeMap::new();
        for t in transfers {
            let from_balance = *scratch
                .entry(t.from)
                .or_insert_with(|| accounts.get(&t.from).map(|a| a.balance).unwrap_or(0));
            if from_balance < t.amount {
                return Err(HandlerError::Transfer(format!(
                    "{} cannot pay {} (balance {})",
                    t.from, t.amount, from_balance
                )));
            }
            *scratch.get_mut(&t.from).unwrap() -= t.amount;
            let to_balance = scratch
                .entry(t.to)
                .or_insert_with(|| accounts.get(&t.to).map(|a| a.balance).unwrap_or(0));
            *to_balance += t.amount;
        }
        for (addr, balance) in scratch {
            // Contracts hold escrow balances without a signing key.
            accounts
                .entry(addr)
                .and_modify(|a| a.balance = balance)
                .or_insert(AccountInfo {
                    public_key: None,
                    balance,
                });
        }
        Ok(())
    }

    pub fn contract_owner(&self, addr: Address) -> Option<Address> {
        self.contracts.get(&addr).map(|e| e.owner)
    }

    pub fn contract_code_id(&self, addr: Address) -> Option<&str> {
        self.contracts.get(&addr).map(|e| e.code_id.as_str())
    }

    /// Typed read-only view of a contract's state.
    pub fn contract_state<T: 'static>(&self, addr: Address) -> Option<&T> {
        self.contracts
            .get(&addr)
            .and_then(|e| e.state.as_any().downcast_ref::<T>())
    }

    pub fn contract_state_json(&self, addr: Address) -> Option<serde_json::Value> {
        self.contracts.get(&addr).map(|e| {
            serde_json::json!({
                "owner": e.owner.to_string(),
                "code_id": e.code_id,
                "state": e.state.state_json(),
            })
        })
    }

    pub fn contract_addresses(&self) -> Vec<Address> {
        self.contracts.keys().copied().collect()
    }

    pub fn recorded(&self) -> Vec<&RecordedTx> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Tx(tx) => Some(tx),
                _ => None,
            })
            .collect()
    }

    pub fn trace(&self) -> Vec<TraceLine> {
        self.recorded()
            .into_iter()
            .map(|r| TraceLine {
                position: r.position,
                timestamp: r.timestamp,
                sender: r.tx.body.sender,
                target: r.tx.body.target,
                function: r.tx.body.function.clone(),
                args_hex: hex::encode(&r.tx.body.args),
                fee: r.tx.body.fee,
                status: r.status,
            })
            .collect()
    }

    /// Machine-readable trace: JSON Lines, one transaction per line.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for line in self.trace() {
            out.push_str(&serde_json::to_string(&line).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    /// Human-readable transaction trace.
    pub fn dump_human(&self) -> String {
        let mut out = String::new();
        for line in self.trace() {
            let status = match line.status {
                TxStatus::Accepted => "ok",
                TxStatus::Failed => "FAILED",
            };
            out.push_str(&format!(
                "#{:<4} t={:<6} {} -> {} {}({} bytes) fee={} [{}]\n",
                line.position,
                line.timestamp,
                line.sender,
                line.target,
                line.function,
                line.args_hex.len() / 2,
                line.fee,
                status
            ));
        }
        out
    }

    /// Digest over all replicated state: contract states and balances.
    pub fn state_digest(&self) -> Digest {
        let contracts: BTreeMap<String, serde_json::Value> = self
            .contracts
            .keys()
            .map(|a| {
                (
                    a.to_string(),
                    self.contract_state_json(*a).expect("contract exists"),
                )
            })
            .collect();
        let balances: BTreeMap<String, u64> = self
            .accounts
            .iter()
            .map(|(a, info)| (a.to_string(), info.balance))
            .collect();
        let doc = serde_json::json!({ "contracts": contracts, "balances": balances });
        self.hash
            .digest(&crate::manifest::canonical_json_bytes(&doc))
    }

    /// Serializable view of the event history, for persistence.
    pub fn export_events(&self) -> Vec<LedgerEvent> {
        self.events
            .iter()
            .map(|e| match e {
                Event::CreateAccount { public_key, balance } => LedgerEvent::CreateAccount {
                    public_key: hex::encode(public_key.as_bytes()),
                    balance: *balance,
                },
                Event::Tx(recorded) => LedgerEvent::Tx {
                    recorded: recorded.clone(),
                },
            })
            .collect()
    }

    /// Rebuilds a ledger by re-applying a persisted event sequence. Only
    /// meaningful for logical-time histories, whose timestamps are
    /// reproduced exactly.
    pub fn from_events(
        hash: HashKind,
        registry: ContractRegistry,
        events: &[LedgerEvent],
    ) -> Result<Ledger, String> {
        let mut ledger = Ledger::new(hash, registry, TimeMode::Logical);
        for event in events {
            match event {
                LedgerEvent::CreateAccount { public_key, balance } => {
                    let key = hex::decode(public_key)
                        .ok()
                        .and_then(|b| <[u8; 32]>::try_from(b).ok())
                        .and_then(|b| VerifyingKey::from_bytes(&b).ok())
                        .ok_or_else(|| format!("bad public key {public_key:?}"))?;
                    ledger.create_account(key, *balance);
                }
                LedgerEvent::Tx { recorded } => {
                    ledger
                        .submit(recorded.tx.clone())
                        .map_err(|e| format!("replay position {}: {e}", recorded.position))?;
                }
            }
        }
        Ok(ledger)
    }

    /// Rebuilds a fresh ledger by re-applying the recorded event sequence.
    pub fn replay(&self) -> Ledger {
        let mut fresh = Ledger::new(self.hash, self.registry.clone(), TimeMode::Logical);
        for event in &self.events {
            match event {
                Event::CreateAccount { public_key, balance } => {
                    fresh.create_account(*public_key, *balance);
                }
                Event::Tx(recorded) => {
                    // Signature was validated at original inclusion.
                    let _ = fresh.submit(recorded.tx.clone());
                }
            }
        }
        fresh
    }
}

fn derive_contract_address(deployer: Address, position: u64) -> Address {
    let mut buf = Vec::with_capacity(ADDRESS_LEN + 16);
    buf.extend_from_slice(b"deploy:");
    buf.extend_from_slice(&deployer.0);
    buf.extend_from_slice(&position.to_be_bytes());
    let d = HashKind::Keccak256.digest(&buf);
    let mut out = [0u8; ADDRESS_LEN];
    out.copy_from_slice(&d.0[12..32]);
    Address(out)
}

struct ExecOutcome {
    return_value: Option<serde_json::Value>,
    deployed: Option<Address>,
    hash_ops: u64,
    parse_tokens: u64,
}

/// Builds and signs a contract-call transaction with JSON arguments.
pub fn call_tx(
    keypair: &Keypair,
    target: Address,
    function: &str,
    args: &serde_json::Value,
    fee: u64,
) -> Transaction {
    keypair.sign_tx(TxBody {
        sender: keypair.address(),
        target,
        function: function.to_string(),
        args: serde_json::to_vec(args).expect("args serialize"),
        fee,
    })
}

/// Builds and signs a deploy transaction for a registered code id.
pub fn deploy_tx(
    keypair: &Keypair,
    code_id: &str,
    params: &serde_json::Value,
    fee: u64,
) -> Transaction {
    call_tx(
        keypair,
        Address::ZERO,
        "deploy",
        &serde_json::json!({ "code_id": code_id, "params": params }),
        fee,
    )
}

/// Builds and signs a plain value transfer.
pub fn transfer_tx(keypair: &Keypair, to: Address, amount: u64) -> Transaction {
    call_tx(
        keypair,
        Address::ZERO,
        "transfer",
        &serde_json::json!({ "to": to.to_string(), "amount": amount }),
        0,
    )
}
