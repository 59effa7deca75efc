//! The relying contract: verifies a data entry through the authoritative
//! contract's membership call, parses the JSON match record, and settles a
//! two-party bet on the outcome, with a censorship fallback that reads the
//! provider's on-ledger response.

use crate::authoritative::{self};
use crate::chain::{assert_that, Address, CallCtx, HandlerError, SmartContract};
use crate::merkle_log::SidedProof;
use crate::minijson::{self, JsonValue, ParseError};
use serde::{Deserialize, Serialize};
use std::any::Any;

/// A parsed football match entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub id: String,
    pub date: String,
    pub local: String,
    pub visitor: String,
    #[serde(rename = "localGoals")]
    pub local_goals: u64,
    #[serde(rename = "visitorGoals")]
    pub visitor_goals: u64,
}

impl MatchRecord {
    pub fn outcome(&self) -> Outcome {
        match self.local_goals.cmp(&self.visitor_goals) {
            std::cmp::Ordering::Greater => Outcome::Local,
            std::cmp::Ordering::Less => Outcome::Visitor,
            std::cmp::Ordering::Equal => Outcome::Draw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Local,
    Visitor,
    Draw,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatchParseError {
    #[error(transparent)]
    Json(#[from] ParseError),
    #[error("entry is not a JSON object")]
    NotAnObject,
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {0:?} has the wrong type")]
    WrongType(&'static str),
    #[error("field {0:?} must be a non-negative integer")]
    NegativeGoals(&'static str),
}

/// Parses entry bytes into a [`MatchRecord`], returning the parse-token
/// count alongside.
pub fn parse_match(content: &[u8]) -> Result<(MatchRecord, u64), MatchParseError> {
    let (value, tokens) = minijson::parse(content)?;
    let JsonValue::Object(_) = value else {
        return Err(MatchParseError::NotAnObject);
    };
    let string_field = |name: &'static str| -> Result<String, MatchParseError> {
        let v = value.get(name).ok_or(MatchParseError::MissingField(name))?;
        v.as_str()
            .map(str::to_string)
            .ok_or(MatchParseError::WrongType(name))
    };
    let goals_field = |name: &'static str| -> Result<u64, MatchParseError> {
        let v = value.get(name).ok_or(MatchParseError::MissingField(name))?;
        let n = v.as_int().ok_or(MatchParseError::WrongType(name))?;
        u64::try_from(n).map_err(|_| MatchParseError::NegativeGoals(name))
    };
    Ok((
        MatchRecord {
            id: string_field("id")?,
            date: string_field("date")?,
            local: string_field("local")?,
            visitor: string_field("visitor")?,
            local_goals: goals_field("localGoals")?,
            visitor_goals: goals_field("visitorGoals")?,
        },
        tokens,
    ))
}

/// Constructor arguments for the relying contract.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelyingParams {
    /// Address of the authoritative contract (the manifest's sc_address).
    pub authoritative: Address,
    pub match_id: String,
    pub party_a: Address,
    pub party_b: Address,
    /// Escrowed from each party at creation.
    pub deposit: u64,
    pub prediction_a: Outcome,
    pub prediction_b: Outcome,
    /// Fee the contract forwards to membership verification.
    pub fee_mem: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelyingContract {
    pub cc: Address,
    pub match_id: String,
    pub party_a: Address,
    pub party_b: Address,
    pub deposit: u64,
    pub prediction_a: Outcome,
    pub prediction_b: Outcome,
    pub fee_mem: u64,
    pub settled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settlement: Option<Settlement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub outcome: Outcome,
    /// Payouts applied, as (address, amount) pairs.
    pub payouts: Vec<(Address, u64)>,
}

#[derive(Serialize, Deserialize)]
struct SubmitDataArgs {
    data: authoritative::HexBytes,
    proof: SidedProof,
    fee: u64,
}

#[derive(Serialize, Deserialize)]
struct IfCensorshipArgs {
    id: u64,
}

/// The serialized payload a provider stores as a censorship response and a
/// client receives from `GET /entries/...`: the exact entry bytes plus its
/// membership proof.
#[derive(Serialize, Deserialize)]
struct ResponseEnvelope<'a> {
    #[serde(borrow)]
    content: &'a serde_json::value::RawValue,
    proofs: SidedProof,
}

impl RelyingContract {
    /// Registry constructor for code id `"relying"`. Escrows both deposits.
    pub fn construct(
        ctx: &mut CallCtx<'_>,
        _owner: Address,
        params: &serde_json::Value,
    ) -> Result<Box<dyn SmartContract>, HandlerError> {
        let p: RelyingParams = serde_json::from_value(params.clone())
            .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
        assert_that(p.party_a != p.party_b, "parties are distinct")?;
        assert_that(
            p.prediction_a != p.prediction_b,
            "parties predict different outcomes",
        )?;
        assert_that(
            p.prediction_a != Outcome::Draw && p.prediction_b != Outcome::Draw,
            "predictions are local or visitor",
        )?;
        ctx.transfer(p.party_a, ctx.this, p.deposit);
        ctx.transfer(p.party_b, ctx.this, p.deposit);
        Ok(Box::new(RelyingContract {
            cc: p.authoritative,
            match_id: p.match_id,
            party_a: p.party_a,
            party_b: p.party_b,
            deposit: p.deposit,
            prediction_a: p.prediction_a,
            prediction_b: p.prediction_b,
            fee_mem: p.fee_mem,
            settled: false,
            settlement: None,
        }))
    }

    fn is_party(&self, addr: Address) -> bool {
        addr == self.party_a || addr == self.party_b
    }

    /// Verified-data settlement path shared by direct submission and the
    /// censorship fallback.
    fn verify_and_settle(
        &mut self,
        ctx: &mut CallCtx<'_>,
        data: &[u8],
        proof: SidedProof,
        fee: u64,
    ) -> Result<serde_json::Value, HandlerError> {
        let membership_args = authoritative::args::membership(data, proof, fee);
        let verified = ctx.call_contract(
            self.cc,
            "membership",
            &serde_json::to_vec(&membership_args).expect("args serialize"),
            fee,
        )?;
        if verified != serde_json::json!(true) {
            return Ok(serde_json::json!({ "settled": false, "verified": false }));
        }
        let (record, tokens) =
            parse_match(data).map_err(|e| HandlerError::Other(format!("parse: {e}")))?;
        ctx.count_parse_tokens(tokens);
        if record.id != self.match_id {
            // Authentic entry for some other match: verified but ignored.
            return Ok(serde_json::json!({ "settled": false, "verified": true }));
        }
        let outcome = record.outcome();
        let pot = self.deposit;
        let payouts = match outcome {
            Outcome::Draw => vec![(self.party_a, pot), (self.party_b, pot)],
            o if o == self.prediction_a => vec![(self.party_a, 2 * pot)],
            _ => vec![(self.party_b, 2 * pot)],
        };
        for (to, amount) in &payouts {
            ctx.transfer(ctx.this, *to, *amount);
        }
        self.settled = true;
        self.settlement = Some(Settlement {
            outcome,
            payouts: payouts.clone(),
        });
        Ok(serde_json::json!({
            "settled": true,
            "verified": true,
            "outcome": outcome,
        }))
    }

    fn submit_data(
        &mut self,
        ctx: &mut CallCtx<'_>,
        args: SubmitDataArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(!self.settled, "not settled")?;
        assert_that(self.is_party(ctx.sender), "sender is a party")?;
        self.verify_and_settle(ctx, &args.data.0, args.proof, args.fee)
    }

    fn if_censorship(
        &mut self,
        ctx: &mut CallCtx<'_>,
        args: IfCensorshipArgs,
    ) -> Result<serde_json::Value, HandlerError> {
        assert_that(!self.settled, "not settled")?;
        assert_that(self.is_party(ctx.sender), "sender is a party")?;
        let response = ctx.call_contract(
            self.cc,
            "get_response",
            &serde_json::to_vec(&authoritative::args::get_response(args.id))
                .expect("args serialize"),
            0,
        )?;
        let hex_payload = response.as_str().unwrap_or_default().to_string();
        if hex_payload.is_empty() {
            return Ok(serde_json::json!({ "settled": false, "response": "empty" }));
        }
        let payload = hex::decode(&hex_payload)
            .map_err(|e| HandlerError::Other(format!("response payload: {e}")))?;
        let envelope: ResponseEnvelope = serde_json::from_slice(&payload)
            .map_err(|e| HandlerError::Other(format!("response envelope: {e}")))?;
        let content = envelope.content.get().as_bytes().to_vec();
        self.verify_and_settle(ctx, &content, envelope.proofs, ctx.fee)
    }
}

impl SmartContract for RelyingContract {
    fn call(
        &mut self,
        ctx: &mut CallCtx<'_>,
        function: &str,
        args: &[u8],
    ) -> Result<serde_json::Value, HandlerError> {
        match function {
            "submit_data" => {
                let args = serde_json::from_slice(args)
                    .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
                self.submit_data(ctx, args)
            }
            "if_censorship" => {
                let args = serde_json::from_slice(args)
                    .map_err(|e| HandlerError::BadArgs(e.to_string()))?;
                self.if_censorship(ctx, args)
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

/// Argument builders for relying-contract calls.
pub mod args {
    use super::*;

    pub fn submit_data(data: &[u8], proof: SidedProof, fee: u64) -> serde_json::Value {
        serde_json::to_value(SubmitDataArgs {
            data: authoritative::HexBytes(data.to_vec()),
            proof,
            fee,
        })
        .expect("serializes")
    }

    pub fn if_censorship(id: u64) -> serde_json::Value {
        serde_json::to_value(IfCensorshipArgs { id }).expect("serializes")
    }
}
