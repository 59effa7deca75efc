//! The authoritative contract: accepts consistency-checked root updates from
//! its owner, answers paid membership verifications against the retained
//! roots, can be locked forever, and hosts censorship-evident queries and
//! responses.

use crate::chain::{assert_that, Address, CallCtx, HandlerError, SmartContract};
use crate::hash::Digest;
use crate::merkle_log::{mth_dual_counted, SidedProof};
use serde::{Deserialize, Serialize};
use std::any::Any;
use std::collections::BTreeMap;

pub const DEFAULT_RETENTION: usize = 16;

/// Deploy-time parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuthoritativeParams {
    pub fee_mem: u64,
    pub fee_query: u64,
    /// Number of most recent roots retained (K).
    #[serde(default = "default_retention")]
    pub retention: usize,
}

fn default_retention() -> usize {
    DEFAULT_RETENTION
}

/// Replicated state of the authoritative contract.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuthoritativeContract {
    pub fee_mem: u64,
    pub fee_query: u64,
    pub retention: usize,
    pub locked: bool,
    /// Retained roots keyed by accepted-update timestamp, strictly increasing.
    pub roots: BTreeMap<u64, Digest>,
    /// Timestamp of the last accepted update, 0 if none.
    pub time: u64,
    pub counter: u64,
    /// Query id -> filter bytes (hex in the JSON view).
    pub queries: BTreeMap<u64, HexBytes>,
    /// Query id -> response bytes; keys are a subset of `queries`.
    pub responses: BTreeMap<u64, HexBytes>,
}

/// Byte payload serialized as lowercase hex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HexBytes(pub Vec<u8>);

impl Serialize for HexBytes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexBytes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map(HexBytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct UpdateArgs {
    root: Digest,
    proof: SidedProof,
}

#[derive(Serialize, Deserialize)]
struct MembershipArgs {
    data: HexBytes,
    proof: SidedProof,
    fee: u64,
}

#[derive(Serialize, Deserialize)]
struct QueryArgs {
    filter: HexBytes,
    fee: u64,
}

#[derive(Serialize, Deserialize)]
struct StoreResponseArgs {
    id: u64,
    data: HexBytes,
}

#[derive(Serialize, Deserialize)]
struct GetResponseArgs {
    id: u64,
}

impl AuthoritativeContract {
    pub fn new(params: AuthoritativeParams) -> Self {
        AuthoritativeContract {
            fee_mem: params.fee_mem,
            fee_query: params.fee_query,
            retention: params.retention.max(1),
            locked: false,
            roots: BTreeMap::new(),
            time: 0,
            counter: 0,
            queries: BTreeMap::new(),
            responses: BTreeMap::new(),
        }
    }

    /// Registry constructor for code id `"authoritative"`.
    pub fn construct(
        _ctx: &mut CallCtx<'_>,
        _owner: Address,
        params: &serde_json::Value,
    ) -> Result<Box<dyn SmartContract>, HandlerError> {
        let params: AuthoritativeParams = serde_json::from_value(params.clone())
            .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
        Ok(Box::new(AuthoritativeContract::new(params)))
    }

    /// The consistency check of the update path: trivially true before the
    /// first update, otherwise the dual-root evaluation must reproduce the
    /// submitted root and the last stored one.
    pub fn consistency(
        &self,
        ctx: &mut CallCtx<'_>,
        root: &Digest,
        proof: &SidedProof,
    ) -> bool {
        if self.time == 0 {
            return true;
        }
        let Ok((root_new, root_old)) = mth_dual_counted(ctx.hash(), proof, None, ctx.hash_ops_mut())
        else {
            return false;
        };
        root_new == *root && Some(&root_old) == self.roots.get(&self.time)
    }

    pub fn latest_root(&self) -> Option<&Digest> {
        self.roots.get(&self.time)
    }

    pub fn retained_roots(&self) -> impl Iterator<Item = &Digest> {
        self.roots.values()
    }

    fn update(
        &mut self,
        ctx: &mut CallCtx<'_>,
        args: UpdateArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(ctx.sender == ctx.owner, "sender = owner")?;
        assert_that(!self.locked, "locked = False")?;
        if !self.consistency(ctx, &args.root, &args.proof) {
            // The contract ignores inconsistent data; the receipt still
            // surfaces the failure so callers can detect it.
            return Err(HandlerError::Other("consistency check failed".into()));
        }
        let now = ctx.now();
        if self.roots.contains_key(&now) {
            return Err(HandlerError::Other(format!(
                "duplicate update timestamp {now}"
            )));
        }
        self.time = now;
        self.roots.insert(now, args.root);
        while self.roots.len() > self.retention {
            let oldest = *self.roots.keys().next().expect("non-empty");
            self.roots.remove(&oldest);
        }
        Ok(serde_json::json!(true))
    }

    fn membership(
        &self,
        ctx: &mut CallCtx<'_>,
        args: MembershipArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(args.fee == self.fee_mem, "fee = FEE_mem")?;
        ctx.claim_fee(args.fee)?;
        let leaf = ctx.hash().digest(&args.data.0);
        ctx.count_hash_op();
        let Ok((root_mem, _)) =
            mth_dual_counted(ctx.hash(), &args.proof, Some(leaf), ctx.hash_ops_mut())
        else {
            return Ok(serde_json::json!(false));
        };
        let found = self.roots.values().any(|r| *r == root_mem);
        Ok(serde_json::json!(found))
    }

    fn query(
        &mut self,
        ctx: &mut CallCtx<'_>,
        args: QueryArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(args.fee == self.fee_query, "fee = FEE_query")?;
        ctx.claim_fee(args.fee)?;
        self.counter += 1;
        self.queries.insert(self.counter, args.filter);
        Ok(serde_json::json!(self.counter))
    }

    fn store_response(
        &mut self,
        ctx: &mut CallCtx<'_>,
        args: StoreResponseArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(ctx.sender == ctx.owner, "sender = owner")?;
        assert_that(args.id >= 1 && args.id <= self.counter, "id <= counter")?;
        self.responses.insert(args.id, args.data);
        Ok(serde_json::Value::Null)
    }

    fn get_response(&self, args: GetResponseArgs) -> Result<serde_json::Value, HandlerError> {
        assert_that(args.id >= 1 && args.id <= self.counter, "id <= counter")?;
        let data = self
            .responses
            .get(&args.id)
            .map(|d| hex::encode(&d.0))
            .unwrap_or_default();
        Ok(serde_json::json!(data))
    }

    fn lock(&mut self, ctx: &mut CallCtx<'_>) -> Result<serde_json::Value, HandlerError> {
        assert_that(ctx.sender == ctx.owner, "sender = owner")?;
        self.locked = true;
        Ok(serde_json::Value::Null)
    }

    /// JSON interface descriptor published in the manifest's sc_interface
    /// field: function names, argument types, and fee requirements.
    pub fn interface_descriptor(fee_mem: u64, fee_query: u64) -> serde_json::Value {
        serde_json::json!([
            { "name": "update", "inputs": [
                { "name": "root", "type": "hash" },
                { "name": "proof", "type": "sided_proof" } ],
              "access": "owner", "fee": 0 },
            { "name": "lock", "inputs": [], "access": "owner", "fee": 0 },
            { "name": "membership", "inputs": [
                { "name": "data", "type": "bytes" },
                { "name": "proof", "type": "sided_proof" },
                { "name": "fee", "type": "uint" } ],
              "access": "public", "fee": fee_mem },
            { "name": "query", "inputs": [
                { "name": "filter", "type": "bytes" },
                { "name": "fee", "type": "uint" } ],
              "access": "public", "fee": fee_query },
            { "name": "store_response", "inputs": [
                { "name": "id", "type": "uint" },
                { "name": "data", "type": "bytes" } ],
              "access": "owner", "fee": 0 },
            { "name": "get_response", "inputs": [
                { "name": "id", "type": "uint" } ],
              "access": "public", "fee": 0 }
        ])
    }
}

fn parse_args<T: serde::de::DeserializeOwned>(args: &[u8]) -> Result<T, HandlerError> {
    serde_json::from_slice(args).map_err(|e| HandlerError::BadArgs(e.to_string()))
}

impl SmartContract for AuthoritativeContract {
    fn call(
        &mut self,
        ctx: &mut CallCtx<'_>,
        function: &str,
        args: &[u8],
    ) -> Result<serde_json::Value, HandlerError> {
        match function {
            "update" => {
                let args = parse_args(args)?;
                self.update(ctx, args)
            }
            "lock" => self.lock(ctx),
            "membership" => {
                let args = parse_args(args)?;
                self.membership(ctx, args)
            }
            "consistency" => {
                let args: UpdateArgs = parse_args(args)?;
                let ok = self.consistency(ctx, &args.root, &args.proof);
                Ok(serde_json::json!(ok))
            }
            "query" => {
                let args = parse_args(args)?;
                self.query(ctx, args)
            }
            "store_response" => {
                let args = parse_args(args)?;
                self.store_response(ctx, args)
            }
            "get_response" => {
                let args = parse_args(args)?;
                self.get_response(args)
            }
            other => Err(HandlerError::UnknownFunction(other.to_string())),
        }
    }

    fn clone_box(&self) -> Box<dyn SmartContract> {
        Box::new(self.clone())
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("state serializes")
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Argument builders shared by the provider, clients, and tests.
pub mod args {
    use super::*;

    pub fn update(root: Digest, proof: SidedProof) -> serde_json::Value {
        serde_json::to_value(UpdateArgs { root, proof }).expect("serializes")
    }

    pub fn membership(data: &[u8], proof: SidedProof, fee: u64) -> serde_json::Value {
        serde_json::to_value(MembershipArgs {
            data: HexBytes(data.to_vec()),
            proof,
            fee,
        })
        .expect("serializes")
    }

    pub fn query(filter: &[u8], fee: u64) -> serde_json::Value {
        serde_json::to_value(QueryArgs {
            filter: HexBytes(filter.to_vec()),
            fee,
        })
        .expect("serializes")
    }

    pub fn store_response(id: u64, data: &[u8]) -> serde_json::Value {
        serde_json::to_value(StoreResponseArgs {
            id,
            data: HexBytes(data.to_vec()),
        })
        .expect("serializes")
    }

    pub fn get_response(id: u64) -> serde_json::Value {
        serde_json::to_value(GetResponseArgs { id }).expect("serializes")
    }
}
