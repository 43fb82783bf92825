//! Discrete-event orchestration of the parallel trusted-node relay.
//!
//! Schedules pass windows, runs QKD sessions with deterministically derived
//! seeds, lets each satellite broadcast a parity as soon as it holds matched
//! sub-keys for both stations, and has both stations derive and cross-recover
//! the final keys. A run is a pure function of its `ScenarioConfig`; the
//! session seed depends on (master_seed, satellite, ogs, window index) so
//! permuting the processing order cannot change any session outcome.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{security_verdict, Verdict};
use crate::keycore::{
    compute_parity, derive_final_key, recover_final_peer_key, KeyMaterial, ParityInputs,
    ParityRecord,
};
use crate::ogscompat::check_compatibility;
use crate::orbitpass::{find_passes, PassWindow};
use crate::qkdsession::{run_session, SessionIds, SessionStatus, SessionTranscript, GENERATOR_ID};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("orbit error during scheduling: {0}")]
    Orbit(#[from] crate::orbitpass::OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EventKind {
    PassStart,
    SessionDone,
    ParityBroadcast,
    Derive,
}

/// A scheduled pass. Session seed and window index are fixed at scheduling
/// time, which is what makes processing order irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub satellite_id: String,
    pub ogs_id: String,
    pub window_index: usize,
    pub window: PassWindow,
    pub session_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "NO_KEY")]
    NoKey,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRow {
    pub t_start: f64,
    #[serde(flatten)]
    pub transcript: SessionTranscript,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub status: RunStatus,
    pub generator: String,
    pub master_seed: u64,
    pub ogs_a: String,
    pub ogs_b: String,
    pub final_key_a_hex: String,
    pub final_key_b_hex: String,
    pub final_key_bits: u64,
    /// Both stations recovered the counterpart's derived key bit-exactly.
    pub mutual_recovery_ok: bool,
    pub n_effective: usize,
    pub effective_satellites: Vec<String>,
    pub time_to_final_key_s: Option<f64>,
    pub total_secure_bits: u64,
    pub sessions_attempted: u64,
    pub sessions_succeeded: u64,
    pub adversary_verdict: Verdict,
    pub parities: Vec<String>,
    pub sessions: Vec<SessionRow>,
}

/// Stable session seed: SHA-256 over the identifying tuple, first 8 bytes.
pub fn session_seed(master_seed: u64, satellite_id: &str, ogs_id: &str, window_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(satellite_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(ogs_id.as_bytes());
    hasher.update([0u8]);
    hasher.update((window_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One PASS_START per pass window of each compatible (satellite, station)
/// pair within the horizon, ordered by time with ties broken by kind then
/// node ids.
pub fn build_schedule(config: &ScenarioConfig) -> Result<Vec<SimEvent>, SimError> {
    let mut events = Vec::new();
    for sat in &config.satellites {
        for ogs_id in [&config.pair_under_test.ogs_a, &config.pair_under_test.ogs_b] {
            let ogs = config
                .ogs_by_id(ogs_id)
                .expect("pair ids validated with the scenario");
            if !check_compatibility(&ogs.spec, &sat.spec).overall {
                continue;
            }
            let windows = find_passes(
                &sat.orbit,
                &ogs.site,
                &sat.id,
                ogs_id,
                0.0,
                config.horizon_s,
                config.pass_scan_step_s,
            )?;
            for (window_index, window) in windows.into_iter().enumerate() {
                events.push(SimEvent {
                    time_s: window.t_start,
                    kind: EventKind::PassStart,
                    satellite_id: sat.id.clone(),
                    ogs_id: ogs_id.clone(),
                    window_index,
                    session_seed: session_seed(
                        config.master_seed,
                        &sat.id,
                        ogs_id,
                        window_index,
                    ),
                    window,
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then(a.kind.cmp(&b.kind))
            .then(a.satellite_id.cmp(&b.satellite_id))
            .then(a.ogs_id.cmp(&b.ogs_id))
    });
    Ok(events)
}

struct SatellitePool {
    /// ogs_id -> OK session keys, in completion order
    keys: BTreeMap<String, Vec<(String, KeyMaterial)>>,
    parities_emitted: usize,
}

/// Runs the standard schedule.
pub fn run(config: &ScenarioConfig) -> Result<SimulationReport, SimError> {
    let events = build_schedule(config)?;
    Ok(run_with_schedule(config, &events))
}

/// Processes an explicit event list. The list is normally the output of
/// [`build_schedule`]; tests feed permuted copies to exercise the
/// order-invariance of the relay.
pub fn run_with_schedule(config: &ScenarioConfig, events: &[SimEvent]) -> SimulationReport {
    let ogs_a = &config.pair_under_test.ogs_a;
    let ogs_b = &config.pair_under_test.ogs_b;

    let mut pools: BTreeMap<String, SatellitePool> = BTreeMap::new();
    let mut sessions: Vec<SessionRow> = Vec::new();
    let mut parities: Vec<(f64, ParityRecord)> = Vec::new();

    for event in events {
        let sat = config
            .satellites
            .iter()
            .find(|s| s.id == event.satellite_id)
            .expect("scheduled satellite exists");
        let channel = config.channel_for(&event.satellite_id, &event.ogs_id);
        let session_id = format!(
            "{}-{}-{}",
            event.satellite_id, event.ogs_id, event.window_index
        );
        let transcript = run_session(
            &sat.protocol,
            channel,
            &event.window,
            event.session_seed,
            SessionIds {
                session_id: &session_id,
                satellite_id: &event.satellite_id,
                ogs_id: &event.ogs_id,
            },
        );
        let ok = transcript.status == SessionStatus::Ok;
        let key_sat = transcript.key_sat.clone();
        sessions.push(SessionRow {
            t_start: event.window.t_start,
            transcript,
        });
        if !ok {
            continue;
        }

        let pool = pools.entry(event.satellite_id.clone()).or_insert_with(|| SatellitePool {
            keys: BTreeMap::new(),
            parities_emitted: 0,
        });
        pool.keys
            .entry(event.ogs_id.clone())
            .or_default()
            .push((session_id, key_sat));

        // broadcast as soon as a new matched pair exists (Fig. 1b semantics)
        loop {
            let next = pool.parities_emitted;
            let side_a = pool.keys.get(ogs_a).and_then(|v| v.get(next));
            let side_b = pool.keys.get(ogs_b).and_then(|v| v.get(next));
            let (Some((sess_a, key_a)), Some((sess_b, key_b))) = (side_a, side_b) else {
                break;
            };
            let record = compute_parity(ParityInputs {
                satellite_id: &event.satellite_id,
                ogs_a_id: ogs_a,
                ogs_b_id: ogs_b,
                session_a_id: sess_a,
                session_b_id: sess_b,
                key_a: Some(key_a),
                key_b: Some(key_b),
            })
            .expect("matched OK sessions have non-empty keys");
            parities.push((event.window.t_start, record));
            pool.parities_emitted += 1;
        }
    }

    // derivation: one parity per satellite, satellites in id order
    let mut first_parity: BTreeMap<String, (f64, ParityRecord)> = BTreeMap::new();
    for (t, record) in &parities {
        first_parity
            .entry(record.satellite_id.clone())
            .or_insert_with(|| (*t, record.clone()));
    }

    let effective_satellites: Vec<String> = first_parity.keys().cloned().collect();
    let n_effective = effective_satellites.len();

    let session_key = |rows: &[SessionRow], session_id: &str, side: &str| -> KeyMaterial {
        rows.iter()
            .find(|row| row.transcript.session_id == session_id && row.transcript.ogs_id == side)
            .map(|row| row.transcript.key_ogs.clone())
            .expect("parity references an OK session")
    };

    let ordered: Vec<&ParityRecord> = first_parity.values().map(|(_, r)| r).collect();
    let alice_subs: Vec<(String, KeyMaterial)> = ordered
        .iter()
        .map(|p| {
            (
                p.satellite_id.clone(),
                session_key(&sessions, &p.session_a_id, ogs_a),
            )
        })
        .collect();
    let bob_subs: Vec<(String, KeyMaterial)> = ordered
        .iter()
        .map(|p| {
            (
                p.satellite_id.clone(),
                session_key(&sessions, &p.session_b_id, ogs_b),
            )
        })
        .collect();
    let parity_records: Vec<ParityRecord> = ordered.iter().map(|p| (*p).clone()).collect();

    let mut report = SimulationReport {
        status: RunStatus::NoKey,
        generator: GENERATOR_ID.to_string(),
        master_seed: config.master_seed,
        ogs_a: ogs_a.clone(),
        ogs_b: ogs_b.clone(),
        final_key_a_hex: String::new(),
        final_key_b_hex: String::new(),
        final_key_bits: 0,
        mutual_recovery_ok: false,
        n_effective,
        effective_satellites: effective_satellites.clone(),
        time_to_final_key_s: None,
        total_secure_bits: 0,
        sessions_attempted: sessions.len() as u64,
        sessions_succeeded: sessions
            .iter()
            .filter(|r| r.transcript.status == SessionStatus::Ok)
            .count() as u64,
        adversary_verdict: security_verdict(
            &config.adversary,
            &effective_satellites.iter().cloned().collect::<BTreeSet<_>>(),
        ),
        parities: Vec::new(),
        sessions,
    };

    if n_effective == 0 {
        return report;
    }

    let alice_keys: Vec<KeyMaterial> = alice_subs.iter().map(|(_, k)| k.clone()).collect();
    let bob_keys: Vec<KeyMaterial> = bob_subs.iter().map(|(_, k)| k.clone()).collect();
    let final_a = derive_final_key(&alice_keys).expect("n_effective >= 1");
    let final_b = derive_final_key(&bob_keys).expect("n_effective >= 1");
    let recovered_b = recover_final_peer_key(&alice_subs, &parity_records).expect("ids aligned");
    let recovered_a = recover_final_peer_key(&bob_subs, &parity_records).expect("ids aligned");

    let common = recovered_a.len().min(recovered_b.len());
    report.mutual_recovery_ok = recovered_b == final_b.truncated(common)
        && recovered_a == final_a.truncated(common);
    report.final_key_a_hex = final_a.truncated(common).to_hex();
    report.final_key_b_hex = final_b.truncated(common).to_hex();
    report.final_key_bits = common as u64;
    report.total_secure_bits = common as u64;
    report.time_to_final_key_s = first_parity
        .values()
        .map(|(t, _)| *t)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    report.parities = parity_records.iter().map(|p| p.to_record_line()).collect();
    report.status = if report.mutual_recovery_ok && common > 0 {
        RunStatus::Ok
    } else {
        RunStatus::NoKey
    };
    report
}

/// Machine-readable report document.
pub fn report_json(report: &SimulationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Per-session CSV: one row per attempted session.
pub fn report_csv(report: &SimulationReport) -> String {
    let mut out =
        String::from("session_id,satellite_id,ogs_id,t_start,sifted_bits,qber,final_bits,status\n");
    for row in &report.sessions {
        let t = &row.transcript;
        out.push_str(&format!(
            "{},{},{},{:.1},{},{:.6},{},{}\n",
            t.session_id,
            t.satellite_id,
            t.ogs_id,
            row.t_start,
            t.sifted_bits,
            t.measured_qber,
            t.final_bits,
            crate::qkdsession::status_str(t.status)
        ));
    }
    out
}

/// Key-store records: `node_id,peer_id,session_id,key_hex`, one per line,
/// one entry for each side of every successful session.
pub fn key_store_records(report: &SimulationReport) -> String {
    let mut out = String::new();
    for row in &report.sessions {
        let t = &row.transcript;
        if t.status != SessionStatus::Ok {
            continue;
        }
        out.push_str(&format!(
            "{},{},{},{}\n{},{},{},{}\n",
            t.ogs_id,
            t.satellite_id,
            t.session_id,
            t.key_ogs.to_hex(),
            t.satellite_id,
            t.ogs_id,
            t.session_id,
            t.key_sat.to_hex(),
        ));
    }
    out
}

/// Human-readable metrics table as (name, value) rows.
pub fn report_metrics(report: &SimulationReport) -> Vec<(String, String)> {
    let mut rows = vec![
        ("status".to_string(), format!("{:?}", report.status)),
        (
            "sessions_attempted".to_string(),
            report.sessions_attempted.to_string(),
        ),
        (
            "sessions_succeeded".to_string(),
            report.sessions_succeeded.to_string(),
        ),
        ("n_effective".to_string(), report.n_effective.to_string()),
        (
            "final_key_bits".to_string(),
            report.final_key_bits.to_string(),
        ),
        (
            "total_secure_bits".to_string(),
            report.total_secure_bits.to_string(),
        ),
        (
            "adversary_verdict".to_string(),
            report.adversary_verdict.to_string(),
        ),
    ];
    match report.time_to_final_key_s {
        Some(t) => rows.push(("time_to_final_key_s".to_string(), format!("{t:.1}"))),
        None => rows.push((
            "time_to_final_key_s".to_string(),
            "absent (NO_KEY)".to_string(),
        )),
    }
    for row in &report.sessions {
        let t = &row.transcript;
        rows.push((
            format!("session[{}]", t.session_id),
            format!(
                "sifted={} final={} status={}",
                t.sifted_bits,
                t.final_bits,
                crate::qkdsession::status_str(t.status)
            ),
        ));
    }
    rows
}
