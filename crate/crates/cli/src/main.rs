//! `evercred`: run election scenarios and verify published boards.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evercred_core::board::{scan_privacy_leakage, verify_eligibility, RegistryBoard};
use evercred_core::crypto::Profile;
use evercred_core::protocol::{DeliveryMode, RevotePolicy, VoterId};
use evercred_core::scenarios::{self, ScenarioKind, ScenarioSpec};

#[derive(Parser)]
#[command(name = "evercred", version, about = "Commitment-augmented anonymous-credential voting simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; exits 0 iff every assertion holds.
    Run(RunArgs),
    /// Check a ballot box against a registry; exits 0 iff no violations.
    Verify(VerifyArgs),
    /// Scan published files for voter identifiers; exits 0 iff clean.
    Scan(ScanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// honest, clash, cross-voting, stuffing or privacy. May come from --config instead.
    scenario: Option<ScenarioKind>,
    /// TOML scenario definition; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    voters: Option<usize>,
    #[arg(long)]
    mode: Option<DeliveryMode>,
    #[arg(long = "2fa", value_enum)]
    two_factor: Option<OnOff>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Drawn from OS entropy and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    revote: Option<RevotePolicy>,
    /// Disable the identity-commitment checks (plain anonymous credentials).
    #[arg(long)]
    baseline_anon_creds: bool,
    #[arg(long)]
    choices: Option<usize>,
    /// Publish the registry in seeded shuffled order instead of sorted.
    #[arg(long)]
    shuffle_registry: bool,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the published registry and ballot box, when the scenario produces them.
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    ballots: PathBuf,
    #[arg(long, default_value = "forbidden")]
    revote: RevotePolicy,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    ballots: PathBuf,
    /// Voter identifier to look for; repeatable.
    #[arg(long = "vid")]
    vids: Vec<VoterId>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => finish(run(args)),
        Command::Verify(args) => finish(verify(args)),
        Command::Scan(args) => finish(scan(args)),
    }
}

fn finish(result: Result<bool, String>) -> ExitCode {
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, content: &str) -> Result<(), String> {
    fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(args: RunArgs) -> Result<bool, String> {
    let file_spec = match &args.config {
        Some(path) => toml::from_str::<ScenarioSpec>(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?,
        None => ScenarioSpec::default(),
    };
    let flags = ScenarioSpec {
        scenario: args.scenario,
        profile: args.profile,
        voters: args.voters,
        mode: args.mode,
        two_factor: args.two_factor.map(|f| matches!(f, OnOff::On)),
        revote: args.revote,
        baseline_anon_creds: args.baseline_anon_creds.then_some(true),
        choices: args.choices,
        seed: args.seed,
        shuffle_registry: args.shuffle_registry.then_some(true),
        cells: None,
    };
    let spec = file_spec.overlay(flags);
    let kind = spec.scenario.ok_or("no scenario given on the command line or in --config")?;
    let seed = spec.seed.unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed={seed} (drawn from OS entropy)");
        seed
    });
    let config = spec.election_config(seed);
    let report = scenarios::run(kind, &config, &spec).map_err(|e| e.to_string())?;
    let text = report.render();
    print!("{text}");
    if let Some(out) = &args.out {
        write(out, &text)?;
    }
    if let Some(dir) = &args.artifacts {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (name, content) in &report.artifacts {
            write(&dir.join(name), content)?;
        }
    }
    Ok(report.all_hold())
}

fn verify(args: VerifyArgs) -> Result<bool, String> {
    let report =
        verify_eligibility(&read(&args.registry)?, &read(&args.ballots)?, args.revote).map_err(|e| e.to_string())?;
    let text = report.render();
    print!("{text}");
    if let Some(out) = &args.out {
        write(out, &text)?;
    }
    Ok(report.is_clean())
}

fn scan(args: ScanArgs) -> Result<bool, String> {
    let registry_text = read(&args.registry)?;
    let registry = RegistryBoard::parse(&registry_text).map_err(|e| e.to_string())?;
    let report = scan_privacy_leakage(registry.params(), &registry_text, &read(&args.ballots)?, &args.vids, &[]);
    print!("{}", report.render());
    Ok(report.is_clean())
}
