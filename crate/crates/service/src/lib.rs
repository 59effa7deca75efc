//! Provider service and party client for the authenticated data feed: the
//! HTTP-facing content provider with its persisted Merkle log, and the
//! command-line party's verification and settlement client.

pub mod client;
pub mod http;
pub mod provider;

pub use client::{ClientError, PartyClient, SettlementReport, TrustAnchor};
pub use provider::{
    load_shared_ledger, new_shared_ledger, EntryResponse, ProviderConfig, ProviderError,
    ProviderService, PublishOutcome, SharedLedger,
};
