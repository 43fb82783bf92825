//! Toy prepare-and-measure QKD session over a lossy channel.
//!
//! Idealized BB84 with uniform random bases: simulate pulses, sift, estimate
//! the QBER on a sacrificed sample, abort check, block-parity reconciliation,
//! and Toeplitz privacy amplification with the asymptotic 1 - 2 h2(Q) rate.
//! A session is a pure function of (profile, channel, window, seed); the
//! generator is ChaCha20 with a fixed stream layout, recorded in transcripts.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{link_outcome_probabilities, ChannelParams};
use crate::keycore::KeyMaterial;
use crate::orbitpass::PassWindow;

/// Seedable generator identity; part of the compatibility contract.
pub const GENERATOR_ID: &str = "chacha20";

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("QBER sample would be empty ({sifted} sifted bits at fraction {fraction})")]
    InsufficientSample { sifted: usize, fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolProfile {
    pub pulse_rate: f64,
    pub qber_abort_threshold: f64,
    /// Fraction of sifted bits sacrificed for QBER estimation.
    pub sample_fraction: f64,
    pub reconciliation_block: usize,
}

impl Default for ProtocolProfile {
    fn default() -> Self {
        ProtocolProfile {
            pulse_rate: 10_000.0,
            qber_abort_threshold: 0.11,
            sample_fraction: 0.1,
            reconciliation_block: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "ABORT_QBER")]
    AbortQber,
    #[serde(rename = "ABORT_EMPTY")]
    AbortEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session_id: String,
    pub satellite_id: String,
    pub ogs_id: String,
    pub pulses_sent: u64,
    pub detections: u64,
    pub sifted_bits: u64,
    pub measured_qber: f64,
    pub leaked_bits: u64,
    pub final_bits: u64,
    pub status: SessionStatus,
    pub key_ogs: KeyMaterial,
    pub key_sat: KeyMaterial,
    pub seed: u64,
    pub generator: String,
}

impl SessionTranscript {
    /// Minimal OK transcript carrying a given key; used by the adversary
    /// oracle tests and the `adversary-analysis` demo path.
    pub fn synthetic(
        session_id: &str,
        satellite_id: &str,
        ogs_id: &str,
        key: KeyMaterial,
    ) -> Self {
        let bits = key.len() as u64;
        SessionTranscript {
            session_id: session_id.to_string(),
            satellite_id: satellite_id.to_string(),
            ogs_id: ogs_id.to_string(),
            pulses_sent: bits,
            detections: bits,
            sifted_bits: bits,
            measured_qber: 0.0,
            leaked_bits: 0,
            final_bits: bits,
            status: SessionStatus::Ok,
            key_ogs: key.clone(),
            key_sat: key,
            seed: 0,
            generator: GENERATOR_ID.to_string(),
        }
    }

    /// One CSV row: session_id, satellite_id, ogs_id, t_start is appended by
    /// the simulator; here the per-session accounting columns.
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{}",
            self.session_id,
            self.satellite_id,
            self.ogs_id,
            self.sifted_bits,
            self.measured_qber,
            self.final_bits,
            status_str(self.status)
        )
    }
}

pub fn status_str(status: SessionStatus) -> &'static str {
    match status {
        SessionStatus::Ok => "OK",
        SessionStatus::AbortQber => "ABORT_QBER",
        SessionStatus::AbortEmpty => "ABORT_EMPTY",
    }
}

/// Binary entropy, h2(0) = h2(1) = 0.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Positions where preparation and measurement bases match, with the receiver
/// values at those positions.
pub struct Sifted {
    pub positions: Vec<usize>,
    pub bits: Vec<bool>,
}

pub fn sift(
    tx_bases: &[bool],
    rx_bases: &[bool],
    rx_bits: &[bool],
) -> Result<Sifted, SessionError> {
    if tx_bases.len() != rx_bases.len() {
        return Err(SessionError::LengthMismatch(tx_bases.len(), rx_bases.len()));
    }
    if rx_bases.len() != rx_bits.len() {
        return Err(SessionError::LengthMismatch(rx_bases.len(), rx_bits.len()));
    }
    let mut positions = Vec::new();
    let mut bits = Vec::new();
    for i in 0..tx_bases.len() {
        if tx_bases[i] == rx_bases[i] {
            positions.push(i);
            bits.push(rx_bits[i]);
        }
    }
    Ok(Sifted { positions, bits })
}

/// Publicly compares a random `sample_fraction` subset of the sifted strings.
/// Returns the mismatch rate on the sample and the surviving positions
/// (indices into the sifted strings), in order.
pub fn estimate_qber(
    sifted_a: &[bool],
    sifted_b: &[bool],
    sample_fraction: f64,
    seed: u64,
) -> Result<(f64, Vec<usize>), SessionError> {
    if sifted_a.len() != sifted_b.len() {
        return Err(SessionError::LengthMismatch(sifted_a.len(), sifted_b.len()));
    }
    let n = sifted_a.len();
    let sample_len = (n as f64 * sample_fraction).floor() as usize;
    if sample_len == 0 {
        return Err(SessionError::InsufficientSample {
            sifted: n,
            fraction: sample_fraction,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates: the first sample_len entries are the sample
    for i in 0..sample_len {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mismatches = indices[..sample_len]
        .iter()
        .filter(|&&i| sifted_a[i] != sifted_b[i])
        .count();
    let mut remaining: Vec<usize> = indices[sample_len..].to_vec();
    remaining.sort_unstable();
    Ok((mismatches as f64 / sample_len as f64, remaining))
}

/// Block-parity reconciliation by discard: blocks whose parities differ are
/// dropped entirely. Even-weight error patterns inside a block survive
/// undetected. Leakage is one bit per compared block.
pub fn reconcile(
    key_a: &[bool],
    key_b: &[bool],
    block: usize,
) -> Result<(Vec<bool>, Vec<bool>, u64), SessionError> {
    if key_a.len() != key_b.len() {
        return Err(SessionError::LengthMismatch(key_a.len(), key_b.len()));
    }
    let mut out_a = Vec::with_capacity(key_a.len());
    let mut out_b = Vec::with_capacity(key_b.len());
    let mut blocks = 0u64;
    for (chunk_a, chunk_b) in key_a.chunks(block).zip(key_b.chunks(block)) {
        blocks += 1;
        let parity_a = chunk_a.iter().filter(|&&b| b).count() % 2;
        let parity_b = chunk_b.iter().filter(|&&b| b).count() % 2;
        if parity_a == parity_b {
            out_a.extend_from_slice(chunk_a);
            out_b.extend_from_slice(chunk_b);
        }
    }
    Ok((out_a, out_b, blocks))
}

/// Compresses `key` to m = floor(len (1 - 2 h2(qber))) - leaked_bits via a
/// seeded Toeplitz hash. Returns an empty vector when m <= 0.
pub fn privacy_amplify(key: &[bool], qber: f64, leaked_bits: u64, seed: u64) -> Vec<bool> {
    let n = key.len();
    let rate = 1.0 - 2.0 * binary_entropy(qber);
    let m = (n as f64 * rate).floor() as i64 - leaked_bits as i64;
    if m <= 0 || n == 0 {
        return Vec::new();
    }
    let m = m as usize;
    toeplitz_hash(key, m, seed)
}

/// Binary Toeplitz matrix T (m x n) defined by a diagonal bit vector of
/// length n + m - 1 drawn from the seeded generator:
/// T[j][i] = diag[n - 1 + j - i], output[j] = XOR_i T[j][i] & key[i].
fn toeplitz_hash(key: &[bool], m: usize, seed: u64) -> Vec<bool> {
    let n = key.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let diag_len = n + m - 1;
    let mut diag_bytes = vec![0u8; diag_len.div_ceil(8)];
    rng.fill_bytes(&mut diag_bytes);
    let diag = |i: usize| diag_bytes[i / 8] & (1 << (i % 8)) != 0;

    // only the set key positions contribute to any output bit
    let set_positions: Vec<usize> = (0..n).filter(|&i| key[i]).collect();
    (0..m)
        .map(|j| {
            let mut bit = false;
            for &i in &set_positions {
                if diag(n - 1 + j - i) {
                    bit = !bit;
                }
            }
            bit
        })
        .collect()
}

/// Identifier context for a session run.
pub struct SessionIds<'a> {
    pub session_id: &'a str,
    pub satellite_id: &'a str,
    pub ogs_id: &'a str,
}

/// Runs one full session during `window`. Aborts are statuses, never errors.
pub fn run_session(
    profile: &ProtocolProfile,
    channel: &ChannelParams,
    window: &PassWindow,
    seed: u64,
    ids: SessionIds<'_>,
) -> SessionTranscript {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let qber_seed = rng.next_u64();
    let hash_seed = rng.next_u64();

    let (p_signal, p_error) = link_outcome_probabilities(channel).unwrap_or((0.0, 0.5));
    let p_click = (p_signal + channel.background_click_prob).min(1.0);
    let pulses = (profile.pulse_rate * window.duration_s()).round().max(0.0) as u64;

    let empty = |detections: u64,
                 sifted: u64,
                 qber: f64,
                 leaked: u64,
                 status: SessionStatus| SessionTranscript {
        session_id: ids.session_id.to_string(),
        satellite_id: ids.satellite_id.to_string(),
        ogs_id: ids.ogs_id.to_string(),
        pulses_sent: pulses,
        detections,
        sifted_bits: sifted,
        measured_qber: qber,
        leaked_bits: leaked,
        final_bits: 0,
        status,
        key_ogs: KeyMaterial::empty(ids.session_id),
        key_sat: KeyMaterial::empty(ids.session_id),
        seed,
        generator: GENERATOR_ID.to_string(),
    };

    // pulse transmission: detected pulses only are recorded
    let mut tx_bases = Vec::new();
    let mut tx_bits = Vec::new();
    let mut rx_bases = Vec::new();
    let mut rx_bits = Vec::new();
    for _ in 0..pulses {
        if rng.gen::<f64>() >= p_click {
            continue;
        }
        let tx_bit: bool = rng.gen();
        let tx_basis: bool = rng.gen();
        let rx_basis: bool = rng.gen();
        let rx_bit = if tx_basis == rx_basis {
            tx_bit ^ (rng.gen::<f64>() < p_error)
        } else {
            rng.gen()
        };
        tx_bases.push(tx_basis);
        tx_bits.push(tx_bit);
        rx_bases.push(rx_basis);
        rx_bits.push(rx_bit);
    }
    let detections = tx_bases.len() as u64;
    if detections == 0 {
        return empty(0, 0, 0.0, 0, SessionStatus::AbortEmpty);
    }

    let sifted = sift(&tx_bases, &rx_bases, &rx_bits).expect("equal-length records");
    let sifted_sat: Vec<bool> = sifted.positions.iter().map(|&i| tx_bits[i]).collect();
    let sifted_ogs = sifted.bits;
    let sifted_count = sifted_ogs.len() as u64;
    if sifted_ogs.is_empty() {
        return empty(detections, 0, 0.0, 0, SessionStatus::AbortEmpty);
    }

    let (qber, remaining) =
        match estimate_qber(&sifted_sat, &sifted_ogs, profile.sample_fraction, qber_seed) {
            Ok(v) => v,
            Err(_) => return empty(detections, sifted_count, 0.0, 0, SessionStatus::AbortEmpty),
        };
    if qber > profile.qber_abort_threshold {
        return empty(detections, sifted_count, qber, 0, SessionStatus::AbortQber);
    }

    let kept_sat: Vec<bool> = remaining.iter().map(|&i| sifted_sat[i]).collect();
    let kept_ogs: Vec<bool> = remaining.iter().map(|&i| sifted_ogs[i]).collect();
    let (rec_sat, rec_ogs, leaked) =
        reconcile(&kept_sat, &kept_ogs, profile.reconciliation_block).expect("equal lengths");
    if rec_sat.is_empty() {
        return empty(detections, sifted_count, qber, leaked, SessionStatus::AbortEmpty);
    }

    let final_sat = privacy_amplify(&rec_sat, qber, leaked, hash_seed);
    let final_ogs = privacy_amplify(&rec_ogs, qber, leaked, hash_seed);
    if final_sat.is_empty() {
        return empty(detections, sifted_count, qber, leaked, SessionStatus::AbortEmpty);
    }

    SessionTranscript {
        session_id: ids.session_id.to_string(),
        satellite_id: ids.satellite_id.to_string(),
        ogs_id: ids.ogs_id.to_string(),
        pulses_sent: pulses,
        detections,
        sifted_bits: sifted_count,
        measured_qber: qber,
        leaked_bits: leaked,
        final_bits: final_sat.len() as u64,
        status: SessionStatus::Ok,
        key_ogs: KeyMaterial::from_bits(&final_ogs, ids.session_id),
        key_sat: KeyMaterial::from_bits(&final_sat, ids.session_id),
        seed,
        generator: GENERATOR_ID.to_string(),
    }
}
