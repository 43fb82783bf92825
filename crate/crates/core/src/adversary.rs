//! Eavesdropper model under partial satellite compromise.
//!
//! A compromised satellite leaks both of its sub-keys (the key material sits
//! on board in classical form). Parities are public regardless. The oracle
//! enumerates every sub-key assignment consistent with Eve's view and reports
//! the conditional distribution of the final key, which stays exactly uniform
//! until every satellite in the derivation set is compromised.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keycore::{KeyMaterial, ParityRecord};
use crate::qkdsession::SessionTranscript;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown satellite id in compromised set: {0}")]
    UnknownSatellite(String),
    #[error("enumeration bound exceeded: n={n}, key_len={key_len} (need n <= 4, key_len <= 8)")]
    TooLargeForOracle { n: usize, key_len: usize },
    #[error("view is missing a parity for satellite {0}")]
    MissingParity(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryModel {
    pub compromised: BTreeSet<String>,
    /// Parities are broadcast; Eve always sees them.
    #[serde(default = "default_true")]
    pub observes_parities: bool,
}

fn default_true() -> bool {
    true
}

impl AdversaryModel {
    pub fn new(compromised: impl IntoIterator<Item = String>) -> Self {
        AdversaryModel {
            compromised: compromised.into_iter().collect(),
            observes_parities: true,
        }
    }
}

/// Everything Eve knows after a run: both sub-keys of each compromised
/// satellite, plus every broadcast parity.
#[derive(Debug, Clone, PartialEq)]
pub struct EveView {
    /// satellite_id -> (k_A^i, k_B^i)
    pub known_sub_keys: BTreeMap<String, (KeyMaterial, KeyMaterial)>,
    pub parities: Vec<ParityRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Secure,
    Broken,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Secure => write!(f, "SECURE"),
            Verdict::Broken => write!(f, "BROKEN"),
        }
    }
}

/// Empirical distribution of the final key over the enumerated assignment
/// space. Counts are exact, not sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeyDistribution {
    pub key_len: usize,
    /// final-key value (big-endian bits as integer) -> assignment count
    pub counts: BTreeMap<u32, u64>,
    pub total_assignments: u64,
}

impl KeyDistribution {
    /// Exact uniformity: every one of the 2^key_len values occurs equally often.
    pub fn is_uniform(&self) -> bool {
        let values = 1u64 << self.key_len;
        if self.counts.len() as u64 != values {
            return false;
        }
        let expected = self.total_assignments / values;
        self.counts.values().all(|&c| c == expected)
    }

    pub fn is_point_mass(&self) -> bool {
        self.counts.len() == 1
    }

    /// Shannon entropy in bits of the normalized distribution.
    pub fn entropy_bits(&self) -> f64 {
        let total = self.total_assignments as f64;
        self.counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    }
}

/// Assembles Eve's view from the run artifacts. Transcripts supply the
/// sub-keys of compromised satellites; parities are copied wholesale.
pub fn eve_view(
    model: &AdversaryModel,
    transcripts: &[SessionTranscript],
    parities: &[ParityRecord],
) -> Result<EveView, AdversaryError> {
    let satellites: BTreeSet<&str> = transcripts
        .iter()
        .map(|t| t.satellite_id.as_str())
        .chain(parities.iter().map(|p| p.satellite_id.as_str()))
        .collect();
    for sat in &model.compromised {
        if !satellites.contains(sat.as_str()) {
            return Err(AdversaryError::UnknownSatellite(sat.clone()));
        }
    }
    let mut known_sub_keys = BTreeMap::new();
    for parity in parities {
        if !model.compromised.contains(&parity.satellite_id) {
            continue;
        }
        let find = |session_id: &str| {
            transcripts
                .iter()
                .find(|t| t.session_id == session_id && t.satellite_id == parity.satellite_id)
                .map(|t| t.key_sat.clone())
        };
        if let (Some(k_a), Some(k_b)) = (find(&parity.session_a_id), find(&parity.session_b_id)) {
            known_sub_keys.insert(parity.satellite_id.clone(), (k_a, k_b));
        }
    }
    Ok(EveView {
        known_sub_keys,
        parities: parities.to_vec(),
    })
}

/// Exhaustive conditional distribution of Bob's final key given the view.
///
/// The parity of satellite `i` fixes `k_A^i` once `k_B^i` is chosen, so the
/// consistent assignments are exactly the free choices of `k_B^i` for each
/// uncompromised satellite; each is counted once.
pub fn conditional_key_distribution(
    view: &EveView,
    n: usize,
    key_len: usize,
) -> Result<KeyDistribution, AdversaryError> {
    if n > 4 || key_len > 8 || key_len == 0 {
        return Err(AdversaryError::TooLargeForOracle { n, key_len });
    }
    let mut satellites: Vec<&ParityRecord> = view.parities.iter().collect();
    satellites.sort_by(|a, b| a.satellite_id.cmp(&b.satellite_id));
    if satellites.len() != n {
        return Err(AdversaryError::MissingParity(format!(
            "expected {n} parities, view has {}",
            satellites.len()
        )));
    }

    let mut known_xor = 0u32;
    let mut free_sats = 0u32;
    for parity in &satellites {
        match view.known_sub_keys.get(&parity.satellite_id) {
            Some((_, k_b)) => known_xor ^= k_b.truncated(key_len).to_u32(),
            None => free_sats += 1,
        }
    }

    let free_bits = free_sats as usize * key_len;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mask = (1u32 << key_len) - 1;
    for assignment in 0u64..(1u64 << free_bits) {
        let mut final_key = known_xor;
        for s in 0..free_sats {
            final_key ^= ((assignment >> (s as usize * key_len)) as u32) & mask;
        }
        *counts.entry(final_key).or_insert(0) += 1;
    }
    Ok(KeyDistribution {
        key_len,
        counts,
        total_assignments: 1u64 << free_bits,
    })
}

/// Structural secrecy rule: the relay is broken only when every satellite in
/// the derivation set is compromised.
pub fn security_verdict(model: &AdversaryModel, satellites: &BTreeSet<String>) -> Verdict {
    if !satellites.is_empty() && satellites.iter().all(|s| model.compromised.contains(s)) {
        Verdict::Broken
    } else {
        Verdict::Secure
    }
}
