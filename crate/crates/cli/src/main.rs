//! `ptn` command-line front end: scenario parsing, subcommand dispatch, and
//! report rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 scenario validation error,
//! 3 simulation completed without a final key (NO_KEY).

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ptn_core::adversary::{
    conditional_key_distribution, eve_view, security_verdict, AdversaryModel,
};
use ptn_core::keycore::{
    compute_parity, derive_final_key, recover_final_peer_key, KeyMaterial, ParityInputs,
    ParityRecord,
};
use ptn_core::ogscompat::fleet_matrix;
use ptn_core::qkdsession::SessionTranscript;
use ptn_core::scenario::{load_scenario, ScenarioConfig, ScenarioError};
use ptn_core::simnet::{
    build_schedule, key_store_records, report_csv, report_json, report_metrics, run, RunStatus,
};

const EXIT_USAGE: u8 = 1;
const EXIT_SCENARIO: u8 = 2;
const EXIT_NO_KEY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser)]
#[command(name = "ptn", about = "Parallel trusted-node satellite QKD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's master_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's horizon_s
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated satellite ids; overrides the scenario adversary
    #[arg(long)]
    compromised: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full relay simulation and emit a report
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Report output path; also writes <out>.csv and <out>.keys
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the pass windows the scheduler would use
    Passes {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Print the OGS x satellite compatibility matrix
    Compat {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Machine-readable matrix output path
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Report the adversary verdict and, at desk scale, the exhaustive
    /// conditional distribution of the final key
    AdversaryAnalysis {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Derive final and peer keys from a key-store file and parity records
    DeriveKey {
        /// Key store: node_id,peer_id,session_id,key_hex per line
        #[arg(long)]
        keys: PathBuf,
        /// Parity records, one per line
        #[arg(long)]
        parities: PathBuf,
        /// Node whose keys to use
        #[arg(long)]
        node: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep clap's help/version on stdout with success
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(AppError::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
    }
}

enum AppError {
    Usage(String),
    Scenario(String),
}

fn dispatch(command: Command) -> Result<ExitCode, AppError> {
    match command {
        Command::Simulate {
            scenario,
            out,
            format,
        } => simulate(scenario, out, format),
        Command::Passes { scenario } => passes(scenario),
        Command::Compat {
            scenario,
            out,
            format,
        } => compat(scenario, out, format),
        Command::AdversaryAnalysis {
            scenario,
            out,
            format,
        } => adversary_analysis(scenario, out, format),
        Command::DeriveKey {
            keys,
            parities,
            node,
            out,
        } => derive_key(keys, parities, &node, out),
    }
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, AppError> {
    let text = fs::read_to_string(&args.scenario).map_err(|e| {
        AppError::Usage(format!("cannot read scenario file {:?}: {e}", args.scenario))
    })?;
    let mut config = match load_scenario(&text) {
        Ok(config) => config,
        Err(err @ ScenarioError::Parse(_)) => {
            return Err(AppError::Scenario(format!("{:?}: {err}", args.scenario)))
        }
        Err(err @ ScenarioError::Invalid(_)) => {
            return Err(AppError::Scenario(format!("{:?}: {err}", args.scenario)))
        }
    };
    // CLI overrides beat the scenario file
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(horizon) = args.horizon {
        if horizon <= 0.0 {
            return Err(AppError::Usage(format!(
                "--horizon must be positive, got {horizon}"
            )));
        }
        config.horizon_s = horizon;
    }
    if let Some(list) = &args.compromised {
        let ids: BTreeSet<String> = list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().to_string())
            .collect();
        let known = config.satellite_ids();
        for id in &ids {
            if !known.contains(id) {
                return Err(AppError::Usage(format!(
                    "--compromised names unknown satellite id {id:?}"
                )));
            }
        }
        config.adversary = AdversaryModel::new(ids);
    }
    Ok(config)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| AppError::Usage(format!("cannot write {path:?}: {e}"))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn simulate(
    args: ScenarioArgs,
    out: Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, AppError> {
    let config = load(&args)?;
    let report = run(&config).map_err(|e| AppError::Scenario(e.to_string()))?;
    let json = report_json(&report);
    match &out {
        Some(path) => {
            fs::write(path, &json)
                .map_err(|e| AppError::Usage(format!("cannot write {path:?}: {e}")))?;
            let csv_path = path.with_extension("csv");
            fs::write(&csv_path, report_csv(&report))
                .map_err(|e| AppError::Usage(format!("cannot write {csv_path:?}: {e}")))?;
            let keys_path = path.with_extension("keys");
            fs::write(&keys_path, key_store_records(&report))
                .map_err(|e| AppError::Usage(format!("cannot write {keys_path:?}: {e}")))?;
        }
        None => match format {
            Format::Json => print!("{json}"),
            Format::Text => {
                for (name, value) in report_metrics(&report) {
                    println!("{name:<28} {value}");
                }
            }
        },
    }
    if report.status == RunStatus::NoKey {
        return Ok(ExitCode::from(EXIT_NO_KEY));
    }
    Ok(ExitCode::SUCCESS)
}

fn passes(args: ScenarioArgs) -> Result<ExitCode, AppError> {
    let config = load(&args)?;
    let events = build_schedule(&config).map_err(|e| AppError::Scenario(e.to_string()))?;
    println!(
        "{:<12} {:<8} {:>10} {:>10} {:>14}",
        "satellite_id", "ogs_id", "t_start", "t_end", "max_elevation"
    );
    for event in &events {
        println!(
            "{:<12} {:<8} {:>10.1} {:>10.1} {:>14.1}",
            event.satellite_id,
            event.ogs_id,
            event.window.t_start,
            event.window.t_end,
            event.window.max_elevation_deg
        );
    }
    if events.is_empty() {
        eprintln!("warning: no passes within horizon_s = {}", config.horizon_s);
    }
    Ok(ExitCode::SUCCESS)
}

fn compat(
    args: ScenarioArgs,
    out: Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, AppError> {
    let config = load(&args)?;
    let ogs_list: Vec<(&str, &ptn_core::ogscompat::OgsSpec)> = config
        .ogs
        .iter()
        .map(|o| (o.id.as_str(), &o.spec))
        .collect();
    let sat_list: Vec<&ptn_core::ogscompat::SatSpec> =
        config.satellites.iter().map(|s| &s.spec).collect();
    let matrix = fleet_matrix(&ogs_list, &sat_list);

    let mut machine = serde_json::Map::new();
    for (row, (ogs_id, _)) in matrix.iter().zip(&ogs_list) {
        let mut entry = serde_json::Map::new();
        for (report, sat) in row.iter().zip(&config.satellites) {
            entry.insert(
                sat.id.clone(),
                serde_json::to_value(report).expect("report serializes"),
            );
        }
        machine.insert(ogs_id.to_string(), serde_json::Value::Object(entry));
    }
    let machine = serde_json::to_string_pretty(&serde_json::Value::Object(machine)).unwrap();

    match format {
        Format::Json => write_or_print(&out, &machine)?,
        Format::Text => {
            let mut text = format!("{:<12}", "ogs \\ sat");
            for sat in &config.satellites {
                text.push_str(&format!(" {:<14}", sat.id));
            }
            text.push('\n');
            for (row, (ogs_id, _)) in matrix.iter().zip(&ogs_list) {
                text.push_str(&format!("{ogs_id:<12}"));
                for report in row {
                    let cell = if report.overall {
                        "ok".to_string()
                    } else {
                        let mut reasons = Vec::new();
                        if !report.quantum_ok {
                            reasons.push("quantum");
                        }
                        if !report.beacon_ok {
                            reasons.push("beacon");
                        }
                        if !report.uplink_ok {
                            reasons.push("uplink");
                        }
                        format!("FAIL({})", reasons.join("+"))
                    };
                    text.push_str(&format!(" {cell:<14}"));
                }
                text.push('\n');
            }
            print!("{text}");
            if let Some(path) = &out {
                fs::write(path, &machine)
                    .map_err(|e| AppError::Usage(format!("cannot write {path:?}: {e}")))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn adversary_analysis(
    args: ScenarioArgs,
    out: Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, AppError> {
    let config = load(&args)?;
    let satellites = config.satellite_ids();
    let verdict = security_verdict(&config.adversary, &satellites);

    // desk-scale oracle: uniformly random 2-bit sub-keys per satellite,
    // seeded from the scenario master_seed
    let key_len = 2;
    let n = satellites.len();
    let mut distribution = None;
    if n <= 4 {
        let mut rng = ChaCha20Rng::seed_from_u64(config.master_seed);
        let mut transcripts = Vec::new();
        let mut parities = Vec::new();
        for sat in &satellites {
            let k_a = KeyMaterial::random(key_len, &mut rng, "demo-a");
            let k_b = KeyMaterial::random(key_len, &mut rng, "demo-b");
            let sess_a = format!("{sat}-A");
            let sess_b = format!("{sat}-B");
            transcripts.push(SessionTranscript::synthetic(&sess_a, sat, "A", k_a.clone()));
            transcripts.push(SessionTranscript::synthetic(&sess_b, sat, "B", k_b.clone()));
            parities.push(
                compute_parity(ParityInputs {
                    satellite_id: sat,
                    ogs_a_id: "A",
                    ogs_b_id: "B",
                    session_a_id: &sess_a,
                    session_b_id: &sess_b,
                    key_a: Some(&k_a),
                    key_b: Some(&k_b),
                })
                .expect("non-empty demo keys"),
            );
        }
        let view = eve_view(&config.adversary, &transcripts, &parities)
            .map_err(|e| AppError::Scenario(e.to_string()))?;
        distribution = conditional_key_distribution(&view, n, key_len).ok();
    }

    let compromised: Vec<&String> = config.adversary.compromised.iter().collect();
    match format {
        Format::Json => {
            let doc = serde_json::json!({
                "compromised": compromised,
                "satellites": satellites.iter().collect::<Vec<_>>(),
                "verdict": verdict.to_string(),
                "conditional_distribution": distribution,
            });
            write_or_print(&out, &serde_json::to_string_pretty(&doc).unwrap())?;
        }
        Format::Text => {
            let mut text = String::new();
            text.push_str(&format!(
                "compromised: {}\n",
                if compromised.is_empty() {
                    "(none)".to_string()
                } else {
                    compromised
                        .iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                }
            ));
            text.push_str(&format!("verdict: {verdict}\n"));
            match &distribution {
                Some(dist) => {
                    text.push_str(&format!(
                        "conditional distribution of the final key ({} assignments, {}-bit keys):\n",
                        dist.total_assignments, dist.key_len
                    ));
                    for (value, count) in &dist.counts {
                        text.push_str(&format!(
                            "  {value:0width$b}: {count}\n",
                            width = dist.key_len
                        ));
                    }
                    text.push_str(&format!(
                        "uniform: {}, entropy: {:.3} bits\n",
                        dist.is_uniform(),
                        dist.entropy_bits()
                    ));
                }
                None => text.push_str("conditional distribution: beyond oracle bounds\n"),
            }
            write_or_print(&out, &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn derive_key(
    keys: PathBuf,
    parities: PathBuf,
    node: &str,
    out: Option<PathBuf>,
) -> Result<ExitCode, AppError> {
    let store = fs::read_to_string(&keys)
        .map_err(|e| AppError::Usage(format!("cannot read key store {keys:?}: {e}")))?;
    let parity_text = fs::read_to_string(&parities)
        .map_err(|e| AppError::Usage(format!("cannot read parity file {parities:?}: {e}")))?;

    let mut records = Vec::new();
    for line in parity_text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(
            ParityRecord::parse_record_line(line)
                .map_err(|e| AppError::Usage(format!("{parities:?}: {e}")))?,
        );
    }

    // node's sub-keys, matched to parities through the referenced session ids
    let mut own: Vec<(String, KeyMaterial)> = Vec::new();
    let mut matched: Vec<ParityRecord> = Vec::new();
    for record in &records {
        let session = if record.ogs_a_id == node {
            &record.session_a_id
        } else if record.ogs_b_id == node {
            &record.session_b_id
        } else {
            continue;
        };
        let Some(key) = lookup_store_key(&store, node, session) else {
            continue;
        };
        // stored keys are byte padded; the parity length restores the bit count
        own.push((
            record.satellite_id.clone(),
            key.truncated(record.parity.len()),
        ));
        matched.push(record.clone());
    }
    if own.is_empty() {
        return Err(AppError::Usage(format!(
            "no keys for node {node:?} in {keys:?} match any parity record"
        )));
    }

    let own_keys: Vec<KeyMaterial> = own.iter().map(|(_, k)| k.clone()).collect();
    let final_key = derive_final_key(&own_keys)
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let peer_key = recover_final_peer_key(&own, &matched)
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let common = peer_key.len();

    let doc = serde_json::json!({
        "node": node,
        "n": own.len(),
        "satellites": own.iter().map(|(s, _)| s).collect::<Vec<_>>(),
        "final_key_bits": common,
        "final_key_hex": final_key.truncated(common).to_hex(),
        "recovered_peer_key_hex": peer_key.to_hex(),
    });
    write_or_print(&out, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))?;
    Ok(ExitCode::SUCCESS)
}

fn lookup_store_key(store: &str, node: &str, session: &str) -> Option<KeyMaterial> {
    for line in store.lines() {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 4 {
            continue;
        }
        if fields[0] == node && fields[2] == session {
            let hex = fields[3];
            return KeyMaterial::from_hex(hex, hex.len() * 4, session).ok();
        }
    }
    None
}
