//! Transcripts and token cost accounting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BackendError;

/// One prompt round. Latency is informational and excluded from digests so
/// replayed runs stay byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub query_digest: String,
    pub model_id: String,
    pub prompt: String,
    pub response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub cached: bool,
}

/// Append-only list of prompt rounds for one image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_tokens(&self) -> (u64, u64) {
        self.entries.iter().fold((0, 0), |(i, o), e| {
            (i + e.input_tokens, o + e.output_tokens)
        })
    }

    /// Content digest over (query digest, prompt, response, token counts);
    /// latency and cache provenance do not participate.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(e.query_digest.as_bytes());
            hasher.update([0]);
            hasher.update(e.model_id.as_bytes());
            hasher.update([0]);
            hasher.update(e.prompt.as_bytes());
            hasher.update([0]);
            hasher.update(e.response.as_bytes());
            hasher.update([0]);
            hasher.update(e.input_tokens.to_le_bytes());
            hasher.update(e.output_tokens.to_le_bytes());
            hasher.update([0xff]);
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

/// Currency per million input/output tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

/// Price table keyed by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl Default for PriceTable {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../assets/prices.json"))
            .expect("bundled price table parses")
    }
}

impl PriceTable {
    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{path:?}: {e}"))
        })
    }

    pub fn price(&self, model_id: &str) -> Result<ModelPrice, BackendError> {
        self.models
            .get(model_id)
            .copied()
            .ok_or_else(|| BackendError::UnknownModel(model_id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub usd: f64,
}

/// Accumulated spend per model plus a grand total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub per_model: BTreeMap<String, CostTotals>,
    pub total: CostTotals,
}

impl CostLedger {
    pub fn record(&mut self, entry: &TranscriptEntry, prices: &PriceTable) -> Result<(), BackendError> {
        let price = prices.price(&entry.model_id)?;
        let usd = entry.input_tokens as f64 * price.input_per_million / 1e6
            + entry.output_tokens as f64 * price.output_per_million / 1e6;
        for totals in [
            self.per_model.entry(entry.model_id.clone()).or_default(),
            &mut self.total,
        ] {
            totals.input_tokens += entry.input_tokens;
            totals.output_tokens += entry.output_tokens;
            totals.usd += usd;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (model, t) in &other.per_model {
            let e = self.per_model.entry(model.clone()).or_default();
            e.input_tokens += t.input_tokens;
            e.output_tokens += t.output_tokens;
            e.usd += t.usd;
        }
        self.total.input_tokens += other.total.input_tokens;
        self.total.output_tokens += other.total.output_tokens;
        self.total.usd += other.total.usd;
    }
}

/// Replay a transcript into a ledger.
pub fn record_cost(
    transcript: &Transcript,
    ledger: &mut CostLedger,
    prices: &PriceTable,
) -> Result<(), BackendError> {
    for entry in transcript.entries() {
        ledger.record(entry, prices)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(model: &str, input: u64, output: u64) -> TranscriptEntry {
        TranscriptEntry {
            query_digest: "q".into(),
            model_id: model.into(),
            prompt: "p".into(),
            response: "r".into(),
            input_tokens: input,
            output_tokens: output,
            latency_ms: 5,
            cached: false,
        }
    }

    #[test]
    fn gpt4o_rate_per_million() {
        let prices = PriceTable::default();
        let mut ledger = CostLedger::default();
        let mut t = Transcript::new();
        t.push(entry("gpt-4o-2024-08-06", 1_000_000, 0));
        record_cost(&t, &mut ledger, &prices).unwrap();
        assert_eq!(ledger.total.usd, 2.50);
    }

    #[test]
    fn mixed_tokens_price_sum() {
        let prices = PriceTable::default();
        let mut ledger = CostLedger::default();
        let mut t = Transcript::new();
        t.push(entry("gpt-4o-2024-08-06", 500_000, 100_000));
        record_cost(&t, &mut ledger, &prices).unwrap();
        // $2.50/M input and $10.00/M output: 1.25 + 1.00
        assert!((ledger.total.usd - 2.25).abs() < 1e-12);
    }

    #[test]
    fn zero_tokens_leave_ledger_unchanged() {
        let prices = PriceTable::default();
        let mut ledger = CostLedger::default();
        let mut t = Transcript::new();
        t.push(entry("oracle", 0, 0));
        record_cost(&t, &mut ledger, &prices).unwrap();
        assert_eq!(ledger.total, CostTotals::default());
        assert_eq!(ledger.per_model["oracle"].usd, 0.0);
    }

    #[test]
    fn unknown_model_is_an_error() {
        let prices = PriceTable::default();
        let mut ledger = CostLedger::default();
        let mut t = Transcript::new();
        t.push(entry("mystery-model", 10, 0));
        assert!(matches!(
            record_cost(&t, &mut ledger, &prices),
            Err(BackendError::UnknownModel(_))
        ));
    }

    #[test]
    fn digest_ignores_latency_and_cache_flag() {
        let mut a = Transcript::new();
        let mut b = Transcript::new();
        a.push(entry("m", 10, 2));
        let mut e = entry("m", 10, 2);
        e.latency_ms = 999;
        e.cached = true;
        b.push(e);
        assert_eq!(a.digest(), b.digest());
        let mut c = Transcript::new();
        c.push(entry("m", 11, 2));
        assert_ne!(a.digest(), c.digest());
    }
}
