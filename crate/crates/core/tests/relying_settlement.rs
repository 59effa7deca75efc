//! End-to-end bet settlement through the relying contract: the verified
//! submission path, the censorship fallback, and parser robustness.

use pdfs_core::authoritative::{self, AuthoritativeParams};
use pdfs_core::chain::{call_tx, deploy_tx, Keypair, Ledger, TimeMode};
use pdfs_core::relying::{self, parse_match, Outcome, RelyingContract, RelyingParams};
use pdfs_core::{default_registry, Address, HashKind, MerkleLog, SidedProof};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const HASH: HashKind = HashKind::Keccak256;
const FEE_MEM: u64 = 10;
const FEE_QUERY: u64 = 5;
const DEPOSIT: u64 = 100;

const FINAL_ENTRY: &str = concat!(
    r#"{"id":"341576","date":"2018-07-15T18:00:00Z","local":"France","#,
    r#""visitor":"Croatia","localGoals":4,"visitorGoals":2}"#
);
const OTHER_ENTRY: &str = concat!(
    r#"{"id":"341575","date":"2018-07-14T16:00:00Z","local":"England","#,
    r#""visitor":"Belgium","localGoals":0,"visitorGoals":2}"#
);

struct World {
    ledger: Ledger,
    provider: Keypair,
    alice: Keypair,
    bob: Keypair,
    cc: Address,
    rc: Address,
    log: MerkleLog,
}

/// Provider feed with several matches, the final as entry 3; Alice predicts
/// a local win, Bob a visitor win, both staking the same deposit.
fn world() -> World {
    let mut ledger = Ledger::new(HASH, default_registry(), TimeMode::Logical);
    let provider = Keypair::from_seed([11u8; 32]);
    let alice = Keypair::from_seed([12u8; 32]);
    let bob = Keypair::from_seed([13u8; 32]);
    ledger.create_account(provider.public(), 10_000);
    ledger.create_account(alice.public(), 1_000);
    ledger.create_account(bob.public(), 1_000);

    let params = serde_json::to_value(AuthoritativeParams {
        fee_mem: FEE_MEM,
        fee_query: FEE_QUERY,
        retention: 16,
    })
    .unwrap();
    let cc = ledger
        .submit(deploy_tx(&provider, "authoritative", &params, 0))
        .unwrap()
        .deployed
        .unwrap();

    let mut log = MerkleLog::new(HASH);
    for entry in [
        r#"{"id":"341570","date":"2018-07-10T18:00:00Z","local":"France","visitor":"Belgium","localGoals":1,"visitorGoals":0}"#,
        r#"{"id":"341571","date":"2018-07-11T18:00:00Z","local":"Croatia","visitor":"England","localGoals":2,"visitorGoals":1}"#,
        OTHER_ENTRY,
        FINAL_ENTRY,
        r#"{"id":"341577","date":"2018-07-16T10:00:00Z","local":"Padding","visitor":"Entry","localGoals":0,"visitorGoals":0}"#,
    ] {
        log.append(entry.as_bytes()).unwrap();
    }
    let update = call_tx(
        &provider,
        cc,
        "update",
        &authoritative::args::update(log.root().unwrap(), SidedProof::default()),
        0,
    );
    assert!(ledger.submit(update).unwrap().accepted());

    let params = serde_json::to_value(RelyingParams {
        authoritative: cc,
        match_id: "341576".into(),
        party_a: alice.address(),
        party_b: bob.address(),
        deposit: DEPOSIT,
        prediction_a: Outcome::Local,
        prediction_b: Outcome::Visitor,
        fee_mem: FEE_MEM,
    })
    .unwrap();
    let rc = ledger
        .submit(deploy_tx(&alice, "relying", &params, 0))
        .unwrap()
        .deployed
        .unwrap();

    World {
        ledger,
        provider,
        alice,
        bob,
        cc,
        rc,
        log,
    }
}

fn balance(ledger: &Ledger, addr: Address) -> u64 {
    ledger.account(addr).map(|a| a.balance).unwrap_or(0)
}

#[test]
fn deployment_escrows_both_deposits() {
    let w = world();
    assert_eq!(balance(&w.ledger, w.alice.address()), 1_000 - DEPOSIT);
    assert_eq!(balance(&w.ledger, w.bob.address()), 1_000 - DEPOSIT);
    assert_eq!(balance(&w.ledger, w.rc), 2 * DEPOSIT);
    let state: &RelyingContract = w.ledger.contract_state(w.rc).unwrap();
    assert!(!state.settled);
}

#[test]
fn verified_entry_settles_to_the_winner() {
    let mut w = world();
    let proof = w.log.membership_proof(3).unwrap();
    let tx = call_tx(
        &w.bob,
        w.rc,
        "submit_data",
        &relying::args::submit_data(FINAL_ENTRY.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted(), "{:?}", r.error);
    assert_eq!(r.return_value.as_ref().unwrap()["settled"], true);
    assert_eq!(r.return_value.as_ref().unwrap()["outcome"], "local");
    assert!(r.parse_tokens > 0);

    // France won 4-2: Alice takes the pot; Bob also paid the membership fee,
    // which lands with the provider as owner of the authoritative contract.
    assert_eq!(balance(&w.ledger, w.alice.address()), 1_000 + DEPOSIT);
    assert_eq!(balance(&w.ledger, w.bob.address()), 1_000 - DEPOSIT - FEE_MEM);
    assert_eq!(balance(&w.ledger, w.rc), 0);
    let state: &RelyingContract = w.ledger.contract_state(w.rc).unwrap();
    assert!(state.settled);
    assert_eq!(state.settlement.as_ref().unwrap().outcome, Outcome::Local);

    // Settling twice is rejected.
    let proof = w.log.membership_proof(3).unwrap();
    let tx = call_tx(
        &w.alice,
        w.rc,
        "submit_data",
        &relying::args::submit_data(FINAL_ENTRY.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    assert!(!w.ledger.submit(tx).unwrap().accepted());
}

#[test]
fn tampered_entry_fails_verification_and_nothing_moves() {
    let mut w = world();
    let proof = w.log.membership_proof(3).unwrap();
    let forged = FINAL_ENTRY.replace("\"localGoals\":4", "\"localGoals\":1");
    let tx = call_tx(
        &w.bob,
        w.rc,
        "submit_data",
        &relying::args::submit_data(forged.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted());
    assert_eq!(r.return_value.as_ref().unwrap()["verified"], false);
    assert_eq!(r.return_value.as_ref().unwrap()["settled"], false);

    let state: &RelyingContract = w.ledger.contract_state(w.rc).unwrap();
    assert!(!state.settled);
    assert_eq!(balance(&w.ledger, w.rc), 2 * DEPOSIT);
}

#[test]
fn authentic_entry_for_another_match_is_ignored() {
    let mut w = world();
    let proof = w.log.membership_proof(2).unwrap();
    let tx = call_tx(
        &w.alice,
        w.rc,
        "submit_data",
        &relying::args::submit_data(OTHER_ENTRY.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted());
    assert_eq!(r.return_value.as_ref().unwrap()["verified"], true);
    assert_eq!(r.return_value.as_ref().unwrap()["settled"], false);
    let state: &RelyingContract = w.ledger.contract_state(w.rc).unwrap();
    assert!(!state.settled);
}

#[test]
fn non_party_cannot_submit() {
    let mut w = world();
    let proof = w.log.membership_proof(3).unwrap();
    let tx = call_tx(
        &w.provider,
        w.rc,
        "submit_data",
        &relying::args::submit_data(FINAL_ENTRY.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert!(!r.accepted());
    assert!(r.error.unwrap().contains("party"));
}

#[test]
fn censorship_fallback_settles_from_the_stored_response() {
    let mut w = world();

    // Bob cannot reach the provider off-ledger, so he queries on-ledger.
    let tx = call_tx(
        &w.bob,
        w.cc,
        "query",
        &authoritative::args::query(b"id=341576", FEE_QUERY),
        FEE_QUERY,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert_eq!(r.return_value, Some(serde_json::json!(1)));

    // Before the provider answers, the fallback is a recorded no-op.
    let tx = call_tx(&w.bob, w.rc, "if_censorship", &relying::args::if_censorship(1), FEE_MEM);
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted());
    assert_eq!(r.return_value.as_ref().unwrap()["settled"], false);

    // The provider answers on-ledger with the byte-exact entry and its proof.
    let payload = format!(
        r#"{{"content":{FINAL_ENTRY},"proofs":{}}}"#,
        serde_json::to_string(&w.log.membership_proof(3).unwrap()).unwrap()
    );
    let tx = call_tx(
        &w.provider,
        w.cc,
        "store_response",
        &authoritative::args::store_response(1, payload.as_bytes()),
        0,
    );
    assert!(w.ledger.submit(tx).unwrap().accepted());

    let tx = call_tx(&w.bob, w.rc, "if_censorship", &relying::args::if_censorship(1), FEE_MEM);
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted(), "{:?}", r.error);
    assert_eq!(r.return_value.as_ref().unwrap()["settled"], true);
    assert_eq!(balance(&w.ledger, w.alice.address()), 1_000 + DEPOSIT);

    // The whole exchange is in the public trace.
    let trace = w.ledger.dump_jsonl();
    assert!(trace.contains("\"function\":\"query\""));
    assert!(trace.contains("\"function\":\"store_response\""));
    assert!(trace.contains("\"function\":\"if_censorship\""));
}

#[test]
fn settlement_history_replays_bit_exactly() {
    let mut w = world();
    let proof = w.log.membership_proof(3).unwrap();
    let tx = call_tx(
        &w.bob,
        w.rc,
        "submit_data",
        &relying::args::submit_data(FINAL_ENTRY.as_bytes(), proof, FEE_MEM),
        FEE_MEM,
    );
    assert!(w.ledger.submit(tx).unwrap().accepted());

    let replayed = w.ledger.replay();
    assert_eq!(replayed.state_digest(), w.ledger.state_digest());
}

#[test]
fn parse_match_accepts_the_fixture_and_survives_mutation_fuzzing() {
    let (record, tokens) = parse_match(FINAL_ENTRY.as_bytes()).unwrap();
    assert_eq!(record.id, "341576");
    assert_eq!(record.local, "France");
    assert_eq!(record.visitor, "Croatia");
    assert_eq!(record.local_goals, 4);
    assert_eq!(record.visitor_goals, 2);
    assert_eq!(record.outcome(), Outcome::Local);
    assert!(tokens > 0);

    // 1000 random byte-level mutations: never panic, and any accepted parse
    // must still be internally coherent.
    let mut rng = StdRng::seed_from_u64(2018);
    for _ in 0..1000 {
        let mut bytes = FINAL_ENTRY.as_bytes().to_vec();
        for _ in 0..rng.gen_range(1..8) {
            match rng.gen_range(0..3) {
                0 => {
                    let i = rng.gen_range(0..bytes.len());
                    bytes[i] = rng.gen();
                }
                1 => {
                    let i = rng.gen_range(0..bytes.len());
                    bytes.remove(i);
                }
                _ => {
                    let i = rng.gen_range(0..=bytes.len());
                    bytes.insert(i, rng.gen());
                }
            }
            if bytes.is_empty() {
                break;
            }
        }
        if let Ok((record, tokens)) = parse_match(&bytes) {
            assert!(tokens > 0);
            let _ = record.outcome();
        }
    }
}

#[test]
fn draw_outcome_refunds_both_parties() {
    let mut w = world();
    // Entry 4 is a 0-0 draw; rewire the bet to that match.
    let params = serde_json::to_value(RelyingParams {
        authoritative: w.cc,
        match_id: "341577".into(),
        party_a: w.alice.address(),
        party_b: w.bob.address(),
        deposit: DEPOSIT,
        prediction_a: Outcome::Local,
        prediction_b: Outcome::Visitor,
        fee_mem: FEE_MEM,
    })
    .unwrap();
    let rc = w
        .ledger
        .submit(deploy_tx(&w.bob, "relying", &params, 0))
        .unwrap()
        .deployed
        .unwrap();
    let before_a = balance(&w.ledger, w.alice.address());
    let before_b = balance(&w.ledger, w.bob.address());

    let entry = w.log.entry(4).unwrap().to_vec();
    let proof = w.log.membership_proof(4).unwrap();
    let tx = call_tx(
        &w.alice,
        rc,
        "submit_data",
        &relying::args::submit_data(&entry, proof, FEE_MEM),
        FEE_MEM,
    );
    let r = w.ledger.submit(tx).unwrap();
    assert!(r.accepted(), "{:?}", r.error);
    assert_eq!(r.return_value.as_ref().unwrap()["outcome"], "draw");
    assert_eq!(balance(&w.ledger, w.alice.address()), before_a + DEPOSIT - FEE_MEM);
    assert_eq!(balance(&w.ledger, w.bob.address()), before_b + DEPOSIT);
}
