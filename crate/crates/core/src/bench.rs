//! Desk-scale cost measurements: proof lengths and hash-operation counts
//! for consistency and membership verification across log sizes, JSON
//! parse-token counts, and trace-byte costs of censorship queries and
//! responses. Hash-operation counts from transaction receipts stand in for
//! platform gas.

use crate::authoritative::{self, AuthoritativeContract, AuthoritativeParams};
use crate::chain::{call_tx, deploy_tx, Address, ContractRegistry, Keypair, Ledger, TimeMode};
use crate::hash::HashKind;
use crate::merkle_log::MerkleLog;
use crate::relying::{parse_match, RelyingContract};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on benchmarked log sizes; beyond this the in-memory node
/// cache stops being desk-scale.
pub const MAX_SIZE: u64 = 1 << 20;

pub const FEE_MEM: u64 = 10;
pub const FEE_QUERY: u64 = 5;

/// The case-study entry used for the parse-cost series.
pub const PARSE_FIXTURE: &str = concat!(
    r#"{"id":"341576","date":"2018-07-15T18:00:00Z","local":"France","#,
    r#""visitor":"Croatia","localGoals":4,"visitorGoals":2}"#
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Membership,
    Consistency,
    Parse,
    Query,
    Response,
}

/// One measured cost point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostSample {
    pub size: u64,
    pub kind: OpKind,
    pub hash_ops: u64,
    pub proof_len: u64,
    pub parse_tokens: u64,
    pub payload_bytes: u64,
}

impl CostSample {
    pub const CSV_HEADER: &'static str =
        "size,kind,hash_ops,proof_len,parse_tokens,payload_bytes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.size,
            match self.kind {
                OpKind::Membership => "membership",
                OpKind::Consistency => "consistency",
                OpKind::Parse => "parse",
                OpKind::Query => "query",
                OpKind::Response => "response",
            },
            self.hash_ops,
            self.proof_len,
            self.parse_tokens,
            self.payload_bytes
        )
    }
}

/// Least-squares fit y = intercept + slope * x.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    LinearFit { intercept, slope, r2 }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("size {0} is not a power of two >= 2")]
    BadSize(u64),
    #[error("ledger: {0}")]
    Ledger(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub samples: Vec<CostSample>,
    pub membership_fit: LinearFit,
    pub consistency_fit: LinearFit,
    /// True when the parse-token count is identical across all sizes.
    pub parse_constant: bool,
    pub parse_tokens: u64,
    /// Sizes skipped by the memory guard, if any.
    pub skipped: Vec<u64>,
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CostSample::CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }
}

pub fn default_registry() -> ContractRegistry {
    let mut registry = ContractRegistry::new();
    registry.register("authoritative", AuthoritativeContract::construct);
    registry.register("relying", RelyingContract::construct);
    registry
}

fn fresh_chain(hash: HashKind) -> (Ledger, Keypair, Keypair, Address) {
    let mut ledger = Ledger::new(hash, default_registry(), TimeMode::Logical);
    let provider = Keypair::from_seed([41u8; 32]);
    let client = Keypair::from_seed([42u8; 32]);
    ledger.create_account(provider.public(), 1_000_000);
    ledger.create_account(client.public(), 1_000_000);
    let receipt = ledger
        .submit(deploy_tx(
            &provider,
            "authoritative",
            &serde_json::to_value(AuthoritativeParams {
                fee_mem: FEE_MEM,
                fee_query: FEE_QUERY,
                retention: 16,
            })
            .expect("params serialize"),
            0,
        ))
        .expect("deploy submits");
    let contract = receipt.deployed.expect("deploy succeeds");
    (ledger, provider, client, contract)
}

/// Builds logs at the given power-of-two sizes, commits a mid-growth update
/// followed by a consistency-checked one, runs paid membership
/// verifications, and fits hash-operation cost against log2(size).
pub fn run_suite(sizes: &[u64], trials: u32, hash: HashKind) -> Result<SuiteReport, BenchError> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut membership_points = Vec::new();
    let mut consistency_points = Vec::new();
    let mut parse_counts = Vec::new();

    for &n in sizes {
        if n < 2 || !n.is_power_of_two() {
            return Err(BenchError::BadSize(n));
        }
        if n > MAX_SIZE {
            skipped.push(n);
            continue;
        }
        let (mut ledger, provider, client, contract) = fresh_chain(hash);

        let mut log = MerkleLog::new(hash);
        for i in 0..n {
            log.append(format!("entry-{i}").as_bytes())
                .expect("append succeeds");
        }

        // First committed snapshot just past the half-way point keeps the
        // tree unbalanced, so the follow-up proof spans the full depth.
        let mid = if n == 2 { 1 } else { n / 2 + 1 };
        let first = call_tx(
            &provider,
            contract,
            "update",
            &authoritative::args::update(log.root_at(mid).expect("mid root"), Default::default()),
            0,
        );
        let receipt = ledger.submit(first).map_err(|e| BenchError::Ledger(e.to_string()))?;
        assert!(receipt.accepted(), "first update: {:?}", receipt.error);

        let proof = log.consistency_proof(mid).expect("mid < n");
        let proof_len = proof.len() as u64;
        let second = call_tx(
            &provider,
            contract,
            "update",
            &authoritative::args::update(log.root().expect("root"), proof),
            0,
        );
        let receipt = ledger.submit(second).map_err(|e| BenchError::Ledger(e.to_string()))?;
        assert!(receipt.accepted(), "consistency update: {:?}", receipt.error);
        consistency_points.push(((n as f64).log2(), receipt.hash_ops as f64));
        samples.push(CostSample {
            size: n,
            kind: OpKind::Consistency,
            hash_ops: receipt.hash_ops,
            proof_len,
            parse_tokens: 0,
            payload_bytes: 0,
        });

        let mut trial_ops = Vec::new();
        for t in 0..trials.max(1) {
            // Deterministic spread of leaf indices across the tree.
            let index = (t as u64 * 2_654_435_761) % n;
            let entry = log.entry(index).expect("entry exists").to_vec();
            let proof = log.membership_proof(index).expect("in range");
            let proof_len = proof.len() as u64;
            let tx = call_tx(
                &client,
                contract,
                "membership",
                &authoritative::args::membership(&entry, proof, FEE_MEM),
                FEE_MEM,
            );
            let receipt = ledger.submit(tx).map_err(|e| BenchError::Ledger(e.to_string()))?;
            assert!(receipt.accepted(), "membership: {:?}", receipt.error);
            assert_eq!(receipt.return_value, Some(serde_json::json!(true)));
            trial_ops.push(receipt.hash_ops);
            samples.push(CostSample {
                size: n,
                kind: OpKind::Membership,
                hash_ops: receipt.hash_ops,
                proof_len,
                parse_tokens: 0,
                payload_bytes: entry.len() as u64,
            });
        }
        let mean_ops = trial_ops.iter().sum::<u64>() as f64 / trial_ops.len() as f64;
        membership_points.push(((n as f64).log2(), mean_ops));

        let (_, tokens) = parse_match(PARSE_FIXTURE.as_bytes()).expect("fixture parses");
        parse_counts.push(tokens);
        samples.push(CostSample {
            size: n,
            kind: OpKind::Parse,
            hash_ops: 0,
            proof_len: 0,
            parse_tokens: tokens,
            payload_bytes: PARSE_FIXTURE.len() as u64,
        });
    }

    let parse_constant = parse_counts.windows(2).all(|w| w[0] == w[1]);
    Ok(SuiteReport {
        membership_fit: linear_fit(&membership_points),
        consistency_fit: linear_fit(&consistency_points),
        parse_constant,
        parse_tokens: parse_counts.first().copied().unwrap_or(0),
        skipped,
        samples,
    })
}

/// One row of the censorship payload sweep: the byte cost of a query or
/// response transaction in the exported trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub payload_bytes: u64,
    pub kind: OpKind,
    pub trace_bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub query_fit: LinearFit,
    pub response_fit: LinearFit,
    /// Largest relative gap between query and response cost at equal size.
    pub max_pair_gap: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("payload_bytes,kind,trace_bytes\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                r.payload_bytes,
                match r.kind {
                    OpKind::Query => "query",
                    OpKind::Response => "response",
                    _ => "other",
                },
                r.trace_bytes
            ));
        }
        out
    }
}

/// Submits query/response pairs at each payload size and measures the
/// trace-byte cost of each transaction.
pub fn censorship_size_sweep(payload_sizes: &[u64], hash: HashKind) -> Result<SweepReport, BenchError> {
    let (mut ledger, provider, client, contract) = fresh_chain(hash);
    let mut rows = Vec::new();
    let mut query_points = Vec::new();
    let mut response_points = Vec::new();
    let mut max_pair_gap: f64 = 0.0;

    for (i, &size) in payload_sizes.iter().enumerate() {
        let payload = vec![b'q'; size as usize];
        let tx = call_tx(
            &client,
            contract,
            "query",
            &authoritative::args::query(&payload, FEE_QUERY),
            FEE_QUERY,
        );
        let receipt = ledger.submit(tx).map_err(|e| BenchError::Ledger(e.to_string()))?;
        assert!(receipt.accepted(), "query: {:?}", receipt.error);
        let query_cost = trace_line_bytes(&ledger, receipt.position);

        let response_payload = vec![b'r'; size as usize];
        let tx = call_tx(
            &provider,
            contract,
            "store_response",
            &authoritative::args::store_response((i + 1) as u64, &response_payload),
            0,
        );
        let receipt = ledger.submit(tx).map_err(|e| BenchError::Ledger(e.to_string()))?;
        assert!(receipt.accepted(), "response: {:?}", receipt.error);
        let response_cost = trace_line_bytes(&ledger, receipt.position);

        rows.push(SweepRow {
            payload_bytes: size,
            kind: OpKind::Query,
            trace_bytes: query_cost,
        });
        rows.push(SweepRow {
            payload_bytes: size,
            kind: OpKind::Response,
            trace_bytes: response_cost,
        });
        query_points.push((size as f64, query_cost as f64));
        response_points.push((size as f64, response_cost as f64));
        let gap = (query_cost as f64 - response_cost as f64).abs()
            / (query_cost.max(response_cost) as f64);
        max_pair_gap = max_pair_gap.max(gap);
    }

    Ok(SweepReport {
        rows,
        query_fit: linear_fit(&query_points),
        response_fit: linear_fit(&response_points),
        max_pair_gap,
    })
}

fn trace_line_bytes(ledger: &Ledger, position: u64) -> u64 {
    let trace = ledger.trace();
    let line = trace
        .iter()
        .find(|l| l.position == position)
        .expect("recorded");
    serde_json::to_string(line).expect("serializes").len() as u64
}
