//! Bit-level key algebra for the trusted-node relay.
//!
//! Keys are immutable bitstrings. The elementary relay broadcasts the parity
//! of the two sub-keys held by one satellite; the parallel relay folds the
//! sub-keys and parities from `n` satellites with XOR. Everything here is a
//! pure value operation.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("length mismatch: {left} bits vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("missing key for side {side}")]
    MissingKey { side: char },
    #[error("zero matched length between session keys")]
    EmptyKey,
    #[error("cannot derive a final key from an empty sub-key list")]
    EmptyDerivation,
    #[error("sub-key count {sub_keys} does not match parity count {parities}")]
    ArityMismatch { sub_keys: usize, parities: usize },
    #[error("parity at position {index} is from satellite {parity_sat}, expected {expected_sat}")]
    CorrespondenceError {
        index: usize,
        parity_sat: String,
        expected_sat: String,
    },
    #[error("malformed parity record: {0}")]
    MalformedRecord(String),
}

/// An ordered bitstring. Index 0 is the first bit emitted by the generating
/// session; serialization is big-endian within bytes (index 0 = MSB of byte 0)
/// and hex-encoded in text artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyMaterial {
    bytes: Vec<u8>,
    len_bits: usize,
    origin: String,
}

impl PartialEq for KeyMaterial {
    // origin is a provenance tag, not part of the key value
    fn eq(&self, other: &Self) -> bool {
        self.len_bits == other.len_bits && self.bytes == other.bytes
    }
}

impl Eq for KeyMaterial {}

impl KeyMaterial {
    pub fn from_bits(bits: &[bool], origin: impl Into<String>) -> Self {
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        KeyMaterial {
            bytes,
            len_bits: bits.len(),
            origin: origin.into(),
        }
    }

    pub fn empty(origin: impl Into<String>) -> Self {
        KeyMaterial {
            bytes: Vec::new(),
            len_bits: 0,
            origin: origin.into(),
        }
    }

    /// Parses a hex string produced by [`to_hex`](Self::to_hex). `len_bits`
    /// disambiguates trailing pad bits in the last byte.
    pub fn from_hex(
        hex_str: &str,
        len_bits: usize,
        origin: impl Into<String>,
    ) -> Result<Self, KeyError> {
        let bytes = hex::decode(hex_str)
            .map_err(|e| KeyError::MalformedRecord(format!("bad hex: {e}")))?;
        if bytes.len() != len_bits.div_ceil(8) {
            return Err(KeyError::MalformedRecord(format!(
                "hex length {} bytes inconsistent with {} bits",
                bytes.len(),
                len_bits
            )));
        }
        let mut key = KeyMaterial {
            bytes,
            len_bits,
            origin: origin.into(),
        };
        key.clear_padding();
        Ok(key)
    }

    pub fn random(len_bits: usize, rng: &mut impl RngCore, origin: impl Into<String>) -> Self {
        let mut bytes = vec![0u8; len_bits.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let mut key = KeyMaterial {
            bytes,
            len_bits,
            origin: origin.into(),
        };
        key.clear_padding();
        key
    }

    pub fn len(&self) -> usize {
        self.len_bits
    }

    pub fn is_empty(&self) -> bool {
        self.len_bits == 0
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.len_bits, "bit index {index} out of range");
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len_bits).map(|i| self.bit(i)).collect()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    /// Returns a copy limited to the first `len_bits` bits. A request longer
    /// than the key returns the key unchanged.
    pub fn truncated(&self, len_bits: usize) -> KeyMaterial {
        if len_bits >= self.len_bits {
            return self.clone();
        }
        let mut key = KeyMaterial {
            bytes: self.bytes[..len_bits.div_ceil(8)].to_vec(),
            len_bits,
            origin: self.origin.clone(),
        };
        key.clear_padding();
        key
    }

    /// Interprets the first `len_bits` (must be ≤ 32) as a big-endian integer.
    pub fn to_u32(&self) -> u32 {
        assert!(self.len_bits <= 32);
        let mut v = 0u32;
        for i in 0..self.len_bits {
            v = (v << 1) | u32::from(self.bit(i));
        }
        v
    }

    pub fn from_u32(value: u32, len_bits: usize, origin: impl Into<String>) -> Self {
        assert!(len_bits <= 32);
        let bits: Vec<bool> = (0..len_bits)
            .map(|i| value & (1 << (len_bits - 1 - i)) != 0)
            .collect();
        KeyMaterial::from_bits(&bits, origin)
    }

    fn clear_padding(&mut self) {
        let pad = self.bytes.len() * 8 - self.len_bits;
        if pad > 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xFFu8 << pad;
            }
        }
    }
}

/// A broadcast parity, binding the emitting satellite, the two ground
/// stations, and the two QKD sessions whose sub-keys it combines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRecord {
    pub satellite_id: String,
    pub ogs_a_id: String,
    pub ogs_b_id: String,
    pub session_a_id: String,
    pub session_b_id: String,
    pub parity: KeyMaterial,
}

impl ParityRecord {
    /// One-line text form:
    /// `satellite_id,ogs_a_id,ogs_b_id,session_a_id,session_b_id,length_bits,parity_hex`
    pub fn to_record_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.satellite_id,
            self.ogs_a_id,
            self.ogs_b_id,
            self.session_a_id,
            self.session_b_id,
            self.parity.len(),
            self.parity.to_hex()
        )
    }

    pub fn parse_record_line(line: &str) -> Result<Self, KeyError> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 7 {
            return Err(KeyError::MalformedRecord(format!(
                "expected 7 fields, got {}",
                fields.len()
            )));
        }
        let len_bits: usize = fields[5]
            .parse()
            .map_err(|_| KeyError::MalformedRecord(format!("bad length_bits: {}", fields[5])))?;
        Ok(ParityRecord {
            satellite_id: fields[0].to_string(),
            ogs_a_id: fields[1].to_string(),
            ogs_b_id: fields[2].to_string(),
            session_a_id: fields[3].to_string(),
            session_b_id: fields[4].to_string(),
            parity: KeyMaterial::from_hex(fields[6], len_bits, "parity")?,
        })
    }
}

/// Identifier context for [`compute_parity`]. The key options model whether
/// the satellite actually holds each side's sub-key yet.
pub struct ParityInputs<'a> {
    pub satellite_id: &'a str,
    pub ogs_a_id: &'a str,
    pub ogs_b_id: &'a str,
    pub session_a_id: &'a str,
    pub session_b_id: &'a str,
    pub key_a: Option<&'a KeyMaterial>,
    pub key_b: Option<&'a KeyMaterial>,
}

/// Bitwise XOR of two equal-length keys.
pub fn xor(a: &KeyMaterial, b: &KeyMaterial) -> Result<KeyMaterial, KeyError> {
    if a.len() != b.len() {
        return Err(KeyError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let bytes: Vec<u8> = a
        .bytes
        .iter()
        .zip(&b.bytes)
        .map(|(x, y)| x ^ y)
        .collect();
    Ok(KeyMaterial {
        bytes,
        len_bits: a.len(),
        origin: "derived".to_string(),
    })
}

/// Elementary parity of the two sub-keys held by one satellite. Keys of
/// unequal length are truncated to the shorter one first.
pub fn compute_parity(inputs: ParityInputs<'_>) -> Result<ParityRecord, KeyError> {
    let key_a = inputs.key_a.ok_or(KeyError::MissingKey { side: 'A' })?;
    let key_b = inputs.key_b.ok_or(KeyError::MissingKey { side: 'B' })?;
    let matched = key_a.len().min(key_b.len());
    if matched == 0 {
        return Err(KeyError::EmptyKey);
    }
    let parity = xor(&key_a.truncated(matched), &key_b.truncated(matched))?;
    Ok(ParityRecord {
        satellite_id: inputs.satellite_id.to_string(),
        ogs_a_id: inputs.ogs_a_id.to_string(),
        ogs_b_id: inputs.ogs_b_id.to_string(),
        session_a_id: inputs.session_a_id.to_string(),
        session_b_id: inputs.session_b_id.to_string(),
        parity,
    })
}

/// XORs the own sub-key against a broadcast parity, yielding the peer's
/// (truncated) sub-key.
pub fn recover_peer_key(
    own: &KeyMaterial,
    parity: &ParityRecord,
) -> Result<KeyMaterial, KeyError> {
    if own.len() < parity.parity.len() {
        return Err(KeyError::LengthMismatch {
            left: own.len(),
            right: parity.parity.len(),
        });
    }
    xor(&own.truncated(parity.parity.len()), &parity.parity)
}

/// Left-fold of XOR over the sub-key list, after truncating every entry to
/// the minimum length present. A single-element list returns that key.
pub fn derive_final_key(sub_keys: &[KeyMaterial]) -> Result<KeyMaterial, KeyError> {
    let min_len = sub_keys
        .iter()
        .map(KeyMaterial::len)
        .min()
        .ok_or(KeyError::EmptyDerivation)?;
    let mut acc = sub_keys[0].truncated(min_len);
    for key in &sub_keys[1..] {
        acc = xor(&acc, &key.truncated(min_len))?;
    }
    acc.origin = "derived".to_string();
    Ok(acc)
}

/// Recovers the peer's final key from the own sub-keys and the broadcast
/// parities. `parities[i]` must come from the satellite named in
/// `own_sub_keys[i]`. All inputs are truncated to the common minimum length.
pub fn recover_final_peer_key(
    own_sub_keys: &[(String, KeyMaterial)],
    parities: &[ParityRecord],
) -> Result<KeyMaterial, KeyError> {
    if own_sub_keys.is_empty() {
        return Err(KeyError::EmptyDerivation);
    }
    if own_sub_keys.len() != parities.len() {
        return Err(KeyError::ArityMismatch {
            sub_keys: own_sub_keys.len(),
            parities: parities.len(),
        });
    }
    for (i, ((sat, _), parity)) in own_sub_keys.iter().zip(parities).enumerate() {
        if *sat != parity.satellite_id {
            return Err(KeyError::CorrespondenceError {
                index: i,
                parity_sat: parity.satellite_id.clone(),
                expected_sat: sat.clone(),
            });
        }
    }
    let common = own_sub_keys
        .iter()
        .map(|(_, k)| k.len())
        .chain(parities.iter().map(|p| p.parity.len()))
        .min()
        .unwrap();
    let own: Vec<KeyMaterial> = own_sub_keys
        .iter()
        .map(|(_, k)| k.truncated(common))
        .collect();
    let parity_keys: Vec<KeyMaterial> =
        parities.iter().map(|p| p.parity.truncated(common)).collect();
    xor(&derive_final_key(&own)?, &derive_final_key(&parity_keys)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key(s: &str) -> KeyMaterial {
        let bits: Vec<bool> = s.chars().map(|c| c == '1').collect();
        KeyMaterial::from_bits(&bits, "test")
    }

    #[test]
    fn xor_truth_table_example() {
        assert_eq!(xor(&key("1010"), &key("0110")).unwrap(), key("1100"));
    }

    #[test]
    fn xor_self_inverse_and_identity() {
        let k = key("101101");
        assert_eq!(xor(&k, &k).unwrap(), key("000000"));
        assert_eq!(xor(&k, &key("000000")).unwrap(), k);
    }

    #[test]
    fn xor_length_mismatch() {
        assert_eq!(
            xor(&key("101"), &key("10")),
            Err(KeyError::LengthMismatch { left: 3, right: 2 })
        );
    }

    fn parity_inputs<'a>(
        key_a: Option<&'a KeyMaterial>,
        key_b: Option<&'a KeyMaterial>,
    ) -> ParityInputs<'a> {
        ParityInputs {
            satellite_id: "C1",
            ogs_a_id: "A",
            ogs_b_id: "B",
            session_a_id: "s-a",
            session_b_id: "s-b",
            key_a,
            key_b,
        }
    }

    #[test]
    fn parity_basic_and_truncation() {
        let p = compute_parity(parity_inputs(Some(&key("1010")), Some(&key("0110")))).unwrap();
        assert_eq!(p.parity, key("1100"));

        // 10100 vs 011 -> parity of (101, 011) = 110
        let p = compute_parity(parity_inputs(Some(&key("10100")), Some(&key("011")))).unwrap();
        assert_eq!(p.parity, key("110"));

        let k = key("1011");
        let p = compute_parity(parity_inputs(Some(&k), Some(&k))).unwrap();
        assert_eq!(p.parity, key("0000"));
    }

    #[test]
    fn parity_missing_and_empty() {
        let k = key("1010");
        assert_eq!(
            compute_parity(parity_inputs(None, Some(&k))),
            Err(KeyError::MissingKey { side: 'A' })
        );
        assert_eq!(
            compute_parity(parity_inputs(Some(&k), None)),
            Err(KeyError::MissingKey { side: 'B' })
        );
        let empty = KeyMaterial::empty("test");
        assert_eq!(
            compute_parity(parity_inputs(Some(&k), Some(&empty))),
            Err(KeyError::EmptyKey)
        );
    }

    #[test]
    fn recover_peer_key_examples() {
        let p = compute_parity(parity_inputs(Some(&key("1010")), Some(&key("0110")))).unwrap();
        assert_eq!(recover_peer_key(&key("1010"), &p).unwrap(), key("0110"));

        let k = key("1101");
        let zero = compute_parity(parity_inputs(Some(&k), Some(&k))).unwrap();
        assert_eq!(recover_peer_key(&k, &zero).unwrap(), k);

        assert_eq!(
            recover_peer_key(&key("10"), &p),
            Err(KeyError::LengthMismatch { left: 2, right: 4 })
        );
    }

    #[test]
    fn recover_peer_key_random_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..50 {
            let k_a = KeyMaterial::random(128, &mut rng, "a");
            let k_b = KeyMaterial::random(128, &mut rng, "b");
            let p = compute_parity(parity_inputs(Some(&k_a), Some(&k_b))).unwrap();
            assert_eq!(recover_peer_key(&k_a, &p).unwrap(), k_b);
            assert_eq!(recover_peer_key(&k_b, &p).unwrap(), k_a);
        }
    }

    #[test]
    fn derive_final_key_examples() {
        let k = key("1011");
        assert_eq!(derive_final_key(&[k.clone()]).unwrap(), k);
        assert_eq!(
            derive_final_key(&[key("1010"), key("0110"), key("1111")]).unwrap(),
            key("0011")
        );
        assert_eq!(
            derive_final_key(&[key("1111"), key("1010"), key("0110")]).unwrap(),
            key("0011")
        );
        assert_eq!(derive_final_key(&[]), Err(KeyError::EmptyDerivation));
    }

    #[test]
    fn derive_final_key_truncates_to_minimum() {
        assert_eq!(
            derive_final_key(&[key("101011"), key("0110")]).unwrap(),
            key("1100")
        );
    }

    #[test]
    fn recover_final_peer_key_errors() {
        let own = vec![("C1".to_string(), key("1010"))];
        let p1 = compute_parity(parity_inputs(Some(&key("1010")), Some(&key("0110")))).unwrap();
        assert!(matches!(
            recover_final_peer_key(&own, &[]),
            Err(KeyError::ArityMismatch { .. })
        ));
        let own_wrong = vec![("C2".to_string(), key("1010"))];
        assert!(matches!(
            recover_final_peer_key(&own_wrong, &[p1.clone()]),
            Err(KeyError::CorrespondenceError { .. })
        ));
        // n=1 reduces to the elementary recovery
        assert_eq!(
            recover_final_peer_key(&own, &[p1.clone()]).unwrap(),
            recover_peer_key(&key("1010"), &p1).unwrap()
        );
    }

    #[test]
    fn parity_record_line_roundtrip() {
        let p = compute_parity(parity_inputs(Some(&key("10100110")), Some(&key("01101001"))))
            .unwrap();
        let line = p.to_record_line();
        assert_eq!(ParityRecord::parse_record_line(&line).unwrap(), p);
        assert!(ParityRecord::parse_record_line("a,b,c").is_err());
    }

    #[test]
    fn hex_roundtrip_keeps_bit_order() {
        // index 0 = MSB of byte 0
        let k = key("100000001");
        assert_eq!(k.to_hex(), "8080");
        assert_eq!(KeyMaterial::from_hex("8080", 9, "t").unwrap(), k);
    }

    fn n_way_roundtrip(n: usize, len: usize, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut alice = Vec::new();
        let mut bob = Vec::new();
        let mut parities = Vec::new();
        for i in 0..n {
            let sat = format!("C{i}");
            let k_a = KeyMaterial::random(len, &mut rng, "a");
            let k_b = KeyMaterial::random(len, &mut rng, "b");
            let p = compute_parity(ParityInputs {
                satellite_id: &sat,
                ogs_a_id: "A",
                ogs_b_id: "B",
                session_a_id: "sa",
                session_b_id: "sb",
                key_a: Some(&k_a),
                key_b: Some(&k_b),
            })
            .unwrap();
            alice.push((sat.clone(), k_a));
            bob.push((sat, k_b));
            parities.push(p);
        }
        let alice_keys: Vec<KeyMaterial> = alice.iter().map(|(_, k)| k.clone()).collect();
        let bob_keys: Vec<KeyMaterial> = bob.iter().map(|(_, k)| k.clone()).collect();
        let final_a = derive_final_key(&alice_keys).unwrap();
        let final_b = derive_final_key(&bob_keys).unwrap();
        assert_eq!(recover_final_peer_key(&alice, &parities).unwrap(), final_b);
        assert_eq!(recover_final_peer_key(&bob, &parities).unwrap(), final_a);
    }

    #[test]
    fn parallel_roundtrip_n3() {
        n_way_roundtrip(3, 64, 7);
    }

    #[test]
    fn single_satellite_degenerates_to_elementary() {
        n_way_roundtrip(1, 64, 9);
    }

    proptest! {
        #[test]
        fn xor_involution(bits in proptest::collection::vec(any::<bool>(), 1..256),
                          mask in proptest::collection::vec(any::<bool>(), 1..256)) {
            let len = bits.len().min(mask.len());
            let a = KeyMaterial::from_bits(&bits[..len], "a");
            let b = KeyMaterial::from_bits(&mask[..len], "b");
            prop_assert_eq!(xor(&xor(&a, &b).unwrap(), &b).unwrap(), a);
        }

        #[test]
        fn derive_is_permutation_invariant(
            keys in proptest::collection::vec(
                proptest::collection::vec(any::<bool>(), 8..64), 1..6),
            swap in any::<(usize, usize)>(),
        ) {
            let keys: Vec<KeyMaterial> =
                keys.iter().map(|b| KeyMaterial::from_bits(b, "k")).collect();
            let mut permuted = keys.clone();
            let (i, j) = (swap.0 % keys.len(), swap.1 % keys.len());
            permuted.swap(i, j);
            prop_assert_eq!(
                derive_final_key(&keys).unwrap(),
                derive_final_key(&permuted).unwrap()
            );
        }

        #[test]
        fn eq1_roundtrip_holds(seed in any::<u64>(), len in 1usize..200) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let k_a = KeyMaterial::random(len, &mut rng, "a");
            let k_b = KeyMaterial::random(len, &mut rng, "b");
            let p = compute_parity(ParityInputs {
                satellite_id: "C1", ogs_a_id: "A", ogs_b_id: "B",
                session_a_id: "sa", session_b_id: "sb",
                key_a: Some(&k_a), key_b: Some(&k_b),
            }).unwrap();
            prop_assert_eq!(recover_peer_key(&k_a, &p).unwrap(), k_b);
        }

        #[test]
        fn eq2_roundtrip_small_n(n in 1usize..8, len in 1usize..64, seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut alice = Vec::new();
            let mut bob_keys = Vec::new();
            let mut parities = Vec::new();
            for i in 0..n {
                let sat = format!("C{i}");
                let k_a = KeyMaterial::random(len, &mut rng, "a");
                let k_b = KeyMaterial::random(len, &mut rng, "b");
                parities.push(compute_parity(ParityInputs {
                    satellite_id: &sat, ogs_a_id: "A", ogs_b_id: "B",
                    session_a_id: "sa", session_b_id: "sb",
                    key_a: Some(&k_a), key_b: Some(&k_b),
                }).unwrap());
                alice.push((sat, k_a));
                bob_keys.push(k_b);
            }
            prop_assert_eq!(
                recover_final_peer_key(&alice, &parities).unwrap(),
                derive_final_key(&bob_keys).unwrap()
            );
        }
    }
}
