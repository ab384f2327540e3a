//! Command-line entry point.
//!
//! Exit codes are a CI contract: 0 success, 1 gate failure or hallucination
//! found, 2 usage error, 3 store unreachable.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evibound::bench::{run_benchmark, Behavior, ScriptedExecutor};
use evibound::clock::Clock;
use evibound::config::EngineConfig;
use evibound::contract::{check_schema, parse_contract, AcceptanceContract};
use evibound::ledger::{emit_ledger, load_ledger, ClaimStatus, LedgerError};
use evibound::pipeline::{
    audit_ledger, run_task, AuditError, PipelineConfig, PipelineError, SystemVariant,
    UnanimousPanel,
};
use evibound::store::{open_store, FsStore, RunStore};
use evibound::verify::{verify, FailureClass, VerifyOptions};

const EXIT_OK: u8 = 0;
const EXIT_GATE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;

#[derive(Parser)]
#[command(name = "evibound", version, about = "Evidence-bound workflow governance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Run-store URI (http(s)://... or a filesystem root).
    #[arg(long, env = "EVIBOUND_STORE")]
    store: Option<String>,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Consensus and patch-application threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Retry budget per retry phase.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Time source: "system" or "fixed:<RFC 3339 timestamp>".
    #[arg(long, default_value = "system")]
    clock: String,
}

#[derive(Subcommand)]
enum Command {
    /// Statically validate an acceptance contract (approval checks 1-3).
    Validate {
        /// Contract JSON file.
        file: PathBuf,
    },
    /// Run the verification gate over a claimed run id.
    Verify {
        #[arg(long)]
        contract: PathBuf,
        #[arg(long)]
        run_id: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run every contract in a directory through the pipeline.
    Run {
        /// Directory of contract JSON files.
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long, default_value = "ledgers")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-audit a claims ledger against the store.
    Audit {
        #[arg(long)]
        ledger: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the 8-task benchmark under one variant.
    Bench {
        #[arg(long)]
        variant: String,
        #[arg(long, default_value = "bench_out")]
        out: PathBuf,
        /// Run-id seed for the benchmark store.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn usage_err(msg: &str) -> u8 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn load_contract(path: &Path) -> Result<AcceptanceContract, u8> {
    let bytes = std::fs::read(path)
        .map_err(|e| usage_err(&format!("cannot read {}: {e}", path.display())))?;
    parse_contract(&bytes).map_err(|e| usage_err(&format!("{}: {e}", path.display())))
}

fn resolve_store(common: &CommonOpts, config: &EngineConfig) -> Result<Box<dyn RunStore>, u8> {
    let uri = common
        .store
        .clone()
        .or_else(|| config.store.root.clone())
        .ok_or_else(|| usage_err("no store given (use --store, EVIBOUND_STORE, or [store].root)"))?;
    open_store(&uri).map_err(|e| usage_err(&e.to_string()))
}

fn resolve_config(common: &CommonOpts) -> Result<(EngineConfig, PipelineConfig), u8> {
    let engine = match &common.config {
        Some(path) => EngineConfig::load(path).map_err(|e| usage_err(&e.to_string()))?,
        None => EngineConfig::default(),
    };
    let mut pipeline = PipelineConfig::default();
    engine.apply(&mut pipeline);
    if let Some(tau) = common.tau {
        if !(0.0..=1.0).contains(&tau) {
            return Err(usage_err("--tau must lie in [0, 1]"));
        }
        pipeline.tau = tau;
        pipeline.patch_tau = tau;
    }
    if let Some(n) = common.max_retries {
        pipeline.max_retries_per_phase = n;
    }
    pipeline.clock = Clock::parse(&common.clock).map_err(|e| usage_err(&e))?;
    Ok((engine, pipeline))
}

fn cmd_validate(file: &Path) -> u8 {
    let contract = match load_contract(file) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let violations = check_schema(&contract);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_GATE
    }
}

fn cmd_verify(contract: &Path, run_id: &str, common: &CommonOpts) -> u8 {
    let contract = match load_contract(contract) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (engine, pipeline) = match resolve_config(common) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let store = match resolve_store(common, &engine) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let opts = VerifyOptions { run_id_format_check: pipeline.run_id_format_check };
    let outcome = verify(&contract, run_id, store.as_ref(), &opts);
    if outcome.passed {
        println!("PASS: {run_id}");
        EXIT_OK
    } else {
        let class = outcome.failure.expect("failed outcome has a class");
        println!("FAIL [{}]: {}", class.as_str(), outcome.detail);
        if class == FailureClass::TrackerUnreachable {
            EXIT_UNREACHABLE
        } else {
            EXIT_GATE
        }
    }
}

fn cmd_run(tasks: &Path, variant_name: &str, out: &Path, common: &CommonOpts) -> u8 {
    let Some(variant) = SystemVariant::parse(variant_name) else {
        return usage_err(&format!("unknown variant {variant_name:?} (expected A, B, or evibound)"));
    };
    let (engine, mut pipeline) = match resolve_config(common) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    pipeline.out_dir = Some(out.to_path_buf());
    let store = match resolve_store(common, &engine) {
        Ok(s) => s,
        Err(code) => return code,
    };

    let mut files: Vec<PathBuf> = match std::fs::read_dir(tasks) {
        Ok(dir) => dir
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => return usage_err(&format!("cannot read {}: {e}", tasks.display())),
    };
    files.sort();
    if files.is_empty() {
        return usage_err(&format!("no contract files under {}", tasks.display()));
    }

    let mut entries = Vec::with_capacity(files.len());
    for file in &files {
        let contract = match load_contract(file) {
            Ok(c) => c,
            Err(code) => return code,
        };
        // Without gates, the pipeline trusts the executor's claim; the
        // gated variants run the honest scripted executor.
        let behavior = if variant.verification_gate_enabled || variant.approval_gate_enabled {
            Behavior::Honest
        } else {
            Behavior::Fabricate
        };
        let mut executor = ScriptedExecutor::new(behavior);
        let mut panel = UnanimousPanel(0.9);
        match run_task(&contract, &mut executor, &mut panel, &variant, store.as_ref(), &pipeline) {
            Ok(entry) => {
                println!("{}: {}", entry.task_id, entry.status.as_str());
                entries.push(entry);
            }
            Err(PipelineError::StoreUnreachableAtStart(detail)) => {
                eprintln!("error: store unreachable: {detail}");
                return EXIT_UNREACHABLE;
            }
            Err(e) => return usage_err(&e.to_string()),
        }
    }
    if let Err(e) = emit_ledger(&entries, &out.join("claims_ledger.json")) {
        return usage_err(&e.to_string());
    }
    println!("ledger: {}", out.join("claims_ledger.json").display());
    if entries.iter().all(|e| e.status == ClaimStatus::VerifiedSuccess) {
        EXIT_OK
    } else {
        EXIT_GATE
    }
}

fn cmd_audit(ledger: &Path, common: &CommonOpts) -> u8 {
    let entries = match load_ledger(ledger) {
        Ok(entries) => entries,
        Err(LedgerError::Io(e)) => return usage_err(&format!("{}: {e}", ledger.display())),
        Err(e) => return usage_err(&e.to_string()),
    };
    let (engine, _) = match resolve_config(common) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let store = match resolve_store(common, &engine) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match audit_ledger(&entries, store.as_ref()) {
        Ok(report) => {
            for t in &report.tasks {
                if t.detail.is_empty() {
                    println!("{}: {}", t.task_id, t.verdict.as_str());
                } else {
                    println!("{}: {} ({})", t.task_id, t.verdict.as_str(), t.detail);
                }
            }
            println!(
                "hallucination_rate: {:.3} ({}/{})",
                report.hallucination_rate, report.hallucinated, report.total
            );
            if report.hallucinated == 0 {
                EXIT_OK
            } else {
                EXIT_GATE
            }
        }
        Err(AuditError::StoreUnreachable(detail)) => {
            eprintln!("error: store unreachable: {detail}");
            EXIT_UNREACHABLE
        }
        Err(e @ AuditError::EmptyLedger) => usage_err(&e.to_string()),
    }
}

fn cmd_bench(variant_name: &str, out: &Path, seed: u64, common: &CommonOpts) -> u8 {
    let Some(variant) = SystemVariant::parse(variant_name) else {
        return usage_err(&format!("unknown variant {variant_name:?} (expected A, B, or evibound)"));
    };
    let clock = match Clock::parse(&common.clock) {
        Ok(c) => c,
        Err(e) => return usage_err(&e),
    };
    // The benchmark needs a fresh store root for reproducible run ids.
    let store_root = out.join("store");
    if store_root.exists() {
        if let Err(e) = std::fs::remove_dir_all(&store_root) {
            return usage_err(&format!("cannot reset {}: {e}", store_root.display()));
        }
    }
    let store = FsStore::open_seeded(&store_root, seed).with_display_base("http://localhost:5000");
    match run_benchmark(&variant, &store, out, clock) {
        Ok((_entries, _audit, report)) => {
            for t in &report.tasks {
                println!("{}: {} ({})", t.task_id, t.outcome.as_str(), t.status);
            }
            println!("{}", report.summary_line());
            println!(
                "hallucination_rate: {:.0}% ({}/{})",
                report.hallucination_rate * 100.0,
                report.hallucinated,
                report.total
            );
            if report.hallucinated == 0 {
                EXIT_OK
            } else {
                EXIT_GATE
            }
        }
        Err(e) => usage_err(&e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Validate { file } => cmd_validate(file),
        Command::Verify { contract, run_id, common } => cmd_verify(contract, run_id, common),
        Command::Run { tasks, variant, out, common } => cmd_run(tasks, variant, out, common),
        Command::Audit { ledger, common } => cmd_audit(ledger, common),
        Command::Bench { variant, out, seed, common } => cmd_bench(variant, out, *seed, common),
    };
    ExitCode::from(code)
}
