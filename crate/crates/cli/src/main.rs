use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use cvn_core::analyze::DEFAULT_STATE_BUDGET;
use cvn_core::check::{check, rule_for, CATEGORIES, RULES};
use cvn_core::cir::{parse_cir_with_warnings, CirArtifact};
use cvn_core::diag::{render_goal_violation, VerdictReport};
use cvn_core::pipeline::{analyse, verify, Verification};
use cvn_core::translate::translate;
use cvn_repair::{run_loop, BackendSpec, LoopConfig, Outcome, Seed};

mod exit {
    pub const ACCEPTED: u8 = 0;
    pub const STATIC: u8 = 2;
    pub const BUG: u8 = 3;
    pub const GOAL: u8 = 4;
    pub const BUDGET: u8 = 5;
    pub const USAGE: u8 = 64;
}

const CONFIG_FILE: &str = "cvnverify.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Text,
    Dot,
}

#[derive(Parser)]
#[command(name = "cvnverify", version, about = "Check, translate, analyse and repair CIR concurrency artifacts")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Output format (default: text).
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Maximum number of explored states.
    #[arg(long, global = true)]
    state_budget: Option<usize>,
    /// Configuration file (default: ./cvnverify.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the static checker.
    Check { file: PathBuf },
    /// Translate to a net (json, text or dot).
    Translate { file: PathBuf },
    /// Explore the state space and report findings.
    Analyze {
        file: PathBuf,
        /// Report goal reachability only.
        #[arg(long)]
        goals_only: bool,
        /// Include the explored state space in JSON output.
        #[arg(long)]
        export_space: bool,
    },
    /// Check, translate, analyse and evaluate goals.
    Verify { file: PathBuf },
    /// Run the generate-verify-repair loop from an artifact.
    Repair {
        file: PathBuf,
        /// Directory of numbered canned responses.
        #[arg(long, conflicts_with = "backend")]
        replay: Option<PathBuf>,
        /// Backend URL or shell command.
        #[arg(long)]
        backend: Option<String>,
        /// Treat FILE as a natural-language requirement rather than an artifact.
        #[arg(long)]
        requirement: bool,
        #[arg(long)]
        k_gen: Option<usize>,
        #[arg(long)]
        k_rep: Option<usize>,
    },
    /// List the static rule catalogue.
    ListRules,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct Config {
    format: Option<Format>,
    state_budget: Option<usize>,
    backend: Option<String>,
    replay: Option<PathBuf>,
    k_gen: Option<usize>,
    k_rep: Option<usize>,
}

struct Settings {
    format: Format,
    state_budget: usize,
    config: Config,
}

fn load_config(explicit: Option<&Path>) -> Result<Config, String> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None if Path::new(CONFIG_FILE).is_file() => PathBuf::from(CONFIG_FILE),
        None => return Ok(Config::default()),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<String, String> {
    if path == Path::new("-") {
        std::io::read_to_string(std::io::stdin()).map_err(|e| format!("stdin: {e}"))
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value prints"));
}

/// Parses the input; on a parse failure the errors are printed and `None` returned.
fn load(path: &Path, s: &Settings) -> Result<Option<CirArtifact>, String> {
    let text = read_input(path)?;
    match parse_cir_with_warnings(&text) {
        Ok(p) => {
            for w in &p.warnings {
                eprintln!("warning: {}:{}: {}", w.line, w.column, w.message);
            }
            Ok(Some(p.artifact))
        }
        Err(errs) => {
            match s.format {
                Format::Json => {
                    let list: Vec<_> = errs
                        .0
                        .iter()
                        .map(|e| serde_json::json!({"code": e.code, "line": e.line, "column": e.column, "message": e.message}))
                        .collect();
                    print_json(&serde_json::json!({ "accepted": false, "parse_errors": list }));
                }
                _ => println!("{errs}"),
            }
            Ok(None)
        }
    }
}

fn cmd_check(file: &Path, s: &Settings) -> Result<u8, String> {
    let Some(art) = load(file, s)? else { return Ok(exit::STATIC) };
    let errors = check(&art);
    match s.format {
        Format::Json => print_json(&serde_json::json!({ "errors": errors })),
        _ => {
            for e in &errors {
                let tier = if rule_for(e.code).is_some_and(|r| r.autofixable) { " (autofixable)" } else { "" };
                println!("{} [{}] {}{tier}", e.code, e.anchor, e.message);
                if let Some(sug) = &e.suggestion {
                    println!("    suggestion: {sug}");
                }
            }
            if errors.is_empty() {
                println!("ok: no static errors");
            }
        }
    }
    Ok(if errors.is_empty() { exit::ACCEPTED } else { exit::STATIC })
}

fn static_errors(art: &CirArtifact, s: &Settings) -> bool {
    let errors = check(art);
    if errors.is_empty() {
        return false;
    }
    let report = VerdictReport::static_failure(errors);
    match s.format {
        Format::Json => print_json(&report.to_json()),
        _ => print!("{}", report.to_text()),
    }
    true
}

fn cmd_translate(file: &Path, s: &Settings) -> Result<u8, String> {
    let Some(art) = load(file, s)? else { return Ok(exit::STATIC) };
    if static_errors(&art, s) {
        return Ok(exit::STATIC);
    }
    let t = translate(&art);
    match s.format {
        Format::Json => print_json(&serde_json::json!({ "net": t.net.to_json(), "goals": t.queries })),
        Format::Dot => print!("{}", t.net.to_dot()),
        Format::Text => {
            println!("places: {}", t.net.places.len());
            for p in &t.net.places {
                println!("  {} [{}]", p.name, p.class.kind_name());
            }
            println!("transitions: {}", t.net.transitions.len());
            for tr in &t.net.transitions {
                println!("  {} {} @{}", tr.name, tr.tag, tr.anchor);
            }
            println!("initial: {}", t.net.describe_state(&t.net.initial));
        }
    }
    Ok(exit::ACCEPTED)
}

fn cmd_analyze(file: &Path, goals_only: bool, export_space: bool, s: &Settings) -> Result<u8, String> {
    let Some(art) = load(file, s)? else { return Ok(exit::STATIC) };
    if static_errors(&art, s) {
        return Ok(exit::STATIC);
    }
    let a = match analyse(&art, s.state_budget) {
        Ok(a) => a,
        Err(e) => return budget_failure(&e.to_string(), s),
    };
    let definite = a.analysis.definite().count() > 0;
    let unreachable = a.analysis.unreachable_goals().count() > 0;
    if goals_only {
        match s.format {
            Format::Json => print_json(&serde_json::json!({ "goals": a.analysis.goals })),
            _ => {
                for g in &a.analysis.goals {
                    println!("{}: {}", g.goal, if g.reachable { "REACHABLE" } else { "UNREACHABLE" });
                }
            }
        }
        return Ok(if unreachable { exit::GOAL } else { exit::ACCEPTED });
    }
    match s.format {
        Format::Json => {
            let mut v = serde_json::json!({
                "states": a.analysis.states,
                "edges": a.analysis.edges,
                "findings": a.analysis.findings,
                "benign_lost_notifications": a.analysis.benign_lost_notifications,
                "livelock_immune": a.analysis.livelock_immune,
                "goals": a.analysis.goals,
            });
            if export_space {
                v["space"] = a.space.to_json();
            }
            print_json(&v);
        }
        _ => {
            println!("states: {}  edges: {}", a.analysis.states, a.analysis.edges);
            for f in &a.analysis.findings {
                let anchors: Vec<String> = cvn_core::analyze::witness_anchors(&a.translation.net, &a.space, &f.witness)
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let who = f.thread.as_deref().map(|t| format!(" thread={t}")).unwrap_or_default();
                println!("{}{who}: [{}]", f.kind.name(), anchors.join(", "));
            }
            if a.analysis.findings.is_empty() {
                println!("no findings");
            }
            println!("livelock_immune: {}", a.analysis.livelock_immune);
            for g in &a.analysis.goals {
                println!("{}: {}", g.goal, if g.reachable { "REACHABLE" } else { "UNREACHABLE" });
            }
        }
    }
    Ok(if definite { exit::BUG } else { exit::ACCEPTED })
}

fn budget_failure(message: &str, s: &Settings) -> Result<u8, String> {
    match s.format {
        Format::Json => print_json(&serde_json::json!({ "accepted": false, "error": message })),
        _ => println!("error: {message}"),
    }
    Ok(exit::BUDGET)
}

fn cmd_verify(file: &Path, s: &Settings) -> Result<u8, String> {
    let Some(art) = load(file, s)? else { return Ok(exit::STATIC) };
    let v = match verify(&art, s.state_budget) {
        Ok(v) => v,
        Err(e) => return budget_failure(&e.to_string(), s),
    };
    let report = v.report(&art);
    match s.format {
        Format::Json => print_json(&report.to_json()),
        _ => {
            print!("{}", report.to_text());
            if let Verification::Analysed(a) = &v {
                let unreachable: Vec<_> = a
                    .analysis
                    .goals
                    .iter()
                    .zip(&a.translation.queries)
                    .filter(|(g, _)| !g.reachable)
                    .map(|(_, q)| q)
                    .collect();
                if a.analysis.definite().next().is_none() && !unreachable.is_empty() {
                    println!();
                    print!("{}", render_goal_violation(&unreachable, &a.space, &art, &a.translation.net, None));
                }
            }
        }
    }
    Ok(match &v {
        Verification::Static(_) => exit::STATIC,
        Verification::Analysed(a) if a.analysis.definite().next().is_some() => exit::BUG,
        Verification::Analysed(a) if a.analysis.unreachable_goals().next().is_some() => exit::GOAL,
        Verification::Analysed(_) => exit::ACCEPTED,
    })
}

struct RepairArgs {
    file: PathBuf,
    replay: Option<PathBuf>,
    backend: Option<String>,
    requirement: bool,
    k_gen: Option<usize>,
    k_rep: Option<usize>,
}

fn cmd_repair(r: RepairArgs, s: &Settings) -> Result<u8, String> {
    let text = read_input(&r.file)?;
    let spec = if let Some(dir) = r.replay.or_else(|| s.config.replay.clone()) {
        Some(BackendSpec::Replay(dir))
    } else {
        r.backend.or_else(|| s.config.backend.clone()).map(|b| BackendSpec::parse(&b)).or_else(BackendSpec::from_env)
    };
    let Some(spec) = spec else {
        return Err(format!("no backend: pass --replay or --backend, or set {}", cvn_repair::backend::BACKEND_ENV));
    };
    let mut backend = match spec.open() {
        Ok(b) => b,
        Err(e) => return budget_failure(&e.to_string(), s),
    };
    let defaults = LoopConfig::default();
    let cfg = LoopConfig {
        k_gen: r.k_gen.or(s.config.k_gen).unwrap_or(defaults.k_gen).max(1),
        k_rep: r.k_rep.or(s.config.k_rep).unwrap_or(defaults.k_rep).max(1),
        state_budget: s.state_budget,
    };
    let seed = if r.requirement { Seed::Requirement(text) } else { Seed::Artifact(text) };
    let transcript = run_loop(seed, &cfg, backend.as_mut());
    match s.format {
        Format::Json => println!("{}", transcript.to_json()),
        _ => {
            print!("{}", transcript.to_text());
            if let Some(report) = &transcript.report {
                println!();
                print!("{}", report.to_text());
            }
        }
    }
    Ok(match transcript.outcome {
        Outcome::Accepted => exit::ACCEPTED,
        _ => exit::BUDGET,
    })
}

fn cmd_list_rules(s: &Settings) -> u8 {
    match s.format {
        Format::Json => {
            let rules: Vec<_> = RULES
                .iter()
                .map(|r| serde_json::json!({"code": r.code, "category": r.category, "title": r.title, "autofixable": r.autofixable}))
                .collect();
            print_json(&serde_json::json!({ "count": RULES.len(), "rules": rules }));
        }
        _ => {
            for (prefix, name) in CATEGORIES {
                println!("{prefix}xx {name}");
                for r in RULES.iter().filter(|r| r.category == prefix) {
                    let fix = if r.autofixable { "  [autofix]" } else { "" };
                    println!("  {}  {}{fix}", r.code, r.title);
                }
            }
            println!("{} rules", RULES.len());
        }
    }
    exit::ACCEPTED
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::ACCEPTED };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match load_config(cli.common.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config {e}");
            return ExitCode::from(exit::USAGE);
        }
    };
    let settings = Settings {
        format: cli.common.format.or(config.format).unwrap_or(Format::Text),
        state_budget: cli.common.state_budget.or(config.state_budget).unwrap_or(DEFAULT_STATE_BUDGET),
        config,
    };
    let dot_ok = matches!(cli.command, Command::Translate { .. });
    if settings.format == Format::Dot && !dot_ok {
        eprintln!("error: --format dot is only supported by `translate`");
        return ExitCode::from(exit::USAGE);
    }
    let result = match cli.command {
        Command::Check { file } => cmd_check(&file, &settings),
        Command::Translate { file } => cmd_translate(&file, &settings),
        Command::Analyze { file, goals_only, export_space } => cmd_analyze(&file, goals_only, export_space, &settings),
        Command::Verify { file } => cmd_verify(&file, &settings),
        Command::Repair { file, replay, backend, requirement, k_gen, k_rep } => cmd_repair(
            RepairArgs {
                file,
                replay,
                backend,
                requirement,
                k_gen,
                k_rep,
            },
            &settings,
        ),
        Command::ListRules => Ok(cmd_list_rules(&settings)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::USAGE)
        }
    }
}
