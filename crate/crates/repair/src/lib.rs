//! Goal-aware generate, verify and repair loop.
//!
//! Each round has one target. Static errors are fixed first (Tier 1 rewrite
//! or Tier 2 regeneration), then definite bugs (Tier 3), then unreachable
//! goals. Warnings never block acceptance.

pub mod backend;

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use cvn_core::analyze::{BugFinding, DEFAULT_STATE_BUDGET};
use cvn_core::check::{autofix, is_autofixable, CheckError};
use cvn_core::cir::{parse_cir, serialize_cir};
use cvn_core::diag::{build_diag, render_goal_violation, render_repair_prompt, select_bug, VerdictReport};
use cvn_core::pipeline::{verify, Verification};

pub use backend::{Backend, BackendError, BackendSpec, Prompt, Role};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopConfig {
    /// Rounds spent on static errors.
    pub k_gen: usize,
    /// Rounds spent on definite bugs and goal feedback.
    pub k_rep: usize,
    pub state_budget: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            k_gen: 5,
            k_rep: 5,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Tier1,
    Tier2,
    Tier3,
    GoalFeedback,
    Accept,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::Tier1 => "1",
            Tier::Tier2 => "2",
            Tier::Tier3 => "3",
            Tier::GoalFeedback => "goal",
            Tier::Accept => "accept",
        }
    }
}

/// Routes one round. Errors come before findings, findings before goals.
pub fn route_tier(errors: &[CheckError], findings: &[BugFinding], unreachable_goals: usize) -> Tier {
    if !errors.is_empty() {
        return if errors.iter().all(|e| is_autofixable(e.code)) {
            Tier::Tier1
        } else {
            Tier::Tier2
        };
    }
    if findings.iter().any(|f| f.kind.is_definite()) {
        return Tier::Tier3;
    }
    if unreachable_goals > 0 {
        Tier::GoalFeedback
    } else {
        Tier::Accept
    }
}

pub enum Seed {
    /// Natural-language requirement; the first artifact comes from the backend.
    Requirement(String),
    /// An existing artifact text.
    Artifact(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Static,
    Analysis,
    Goals,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub stage: Stage,
    pub tier: Tier,
    /// Error codes with anchors, e.g. `E501@w2`.
    pub errors: Vec<String>,
    pub findings: Vec<String>,
    pub fixes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    BudgetExhausted { tier: Tier },
    BackendUnavailable { message: String },
    StateBudgetExceeded { limit: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopTranscript {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation_digest: Option<String>,
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
    pub backend_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_artifact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<VerdictReport>,
}

impl LoopTranscript {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    /// Tiers of the rounds that changed the artifact.
    pub fn tiers(&self) -> Vec<Tier> {
        self.rounds.iter().map(|r| r.tier).filter(|t| *t != Tier::Accept).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        for r in &self.rounds {
            let _ = write!(w, "round {}: stage={:?} tier={}", r.round, r.stage, r.tier.label());
            if !r.errors.is_empty() {
                let _ = write!(w, " errors=[{}]", r.errors.join(", "));
            }
            if !r.findings.is_empty() {
                let _ = write!(w, " findings=[{}]", r.findings.join(", "));
            }
            if !r.fixes.is_empty() {
                let _ = write!(w, " fixes={}", r.fixes.len());
            }
            if let Some(d) = &r.response_digest {
                let _ = write!(w, " response={}", &d[..12]);
            }
            let _ = writeln!(w);
        }
        let _ = writeln!(w, "outcome: {}", serde_json::to_value(&self.outcome).expect("outcome serializes")["status"]
            .as_str()
            .unwrap_or_default());
        let _ = writeln!(w, "backend_calls: {}", self.backend_calls);
        out
    }
}

pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn with_artifact(head: &str, artifact: &str) -> String {
    format!("{head}\nCurrent CIR artifact:\n{}\n", artifact.trim_end())
}

fn regenerate_prompt(lines: &[String], artifact: &str) -> String {
    let mut head = String::from("Regeneration task: fix the structural errors in the CIR.\n\nStatic errors:\n");
    for l in lines {
        let _ = writeln!(head, "  {l}");
    }
    head.push_str("\nPreserve:\n  resource names, thread structure, goals\n\nOutput: the complete revised CIR artifact\n");
    with_artifact(&head, artifact)
}

fn generate_prompt(requirement: &str) -> String {
    format!(
        "Generation task: write a CIR artifact for the requirement below, including its business goals.\n\n{}\n\nOutput: the complete CIR artifact\n",
        requirement.trim_end()
    )
}

struct Driver<'a> {
    backend: &'a mut dyn Backend,
    calls: usize,
}

impl Driver<'_> {
    fn ask(&mut self, role: Role, text: String) -> Result<(String, String), String> {
        self.calls += 1;
        let prompt = Prompt { role, text };
        match self.backend.complete(&prompt) {
            Ok(resp) => {
                let d = digest(&resp);
                Ok((backend::strip_fence(&resp).to_string(), d))
            }
            Err(BackendError::Unavailable(m)) => Err(m),
        }
    }
}

pub fn run_loop(seed: Seed, cfg: &LoopConfig, backend: &mut dyn Backend) -> LoopTranscript {
    let mut driver = Driver { backend, calls: 0 };
    let mut transcript = LoopTranscript {
        generation_digest: None,
        rounds: Vec::new(),
        outcome: Outcome::Accepted,
        backend_calls: 0,
        final_artifact: None,
        report: None,
    };
    let finish = |mut t: LoopTranscript, outcome: Outcome, calls: usize| {
        t.outcome = outcome;
        t.backend_calls = calls;
        t
    };
    let mut text = match seed {
        Seed::Artifact(t) => t,
        Seed::Requirement(req) => match driver.ask(Role::Generate, generate_prompt(&req)) {
            Ok((t, d)) => {
                transcript.generation_digest = Some(d);
                t
            }
            Err(message) => return finish(transcript, Outcome::BackendUnavailable { message }, driver.calls),
        },
    };
    let (mut gen_used, mut rep_used) = (0, 0);
    for round in 1.. {
        let mut rec = RoundRecord {
            round,
            stage: Stage::Parse,
            tier: Tier::Accept,
            errors: Vec::new(),
            findings: Vec::new(),
            fixes: Vec::new(),
            prompt: None,
            response_digest: None,
        };
        let (role, prompt, budget_tier) = match parse_cir(&text) {
            Err(errs) => {
                rec.tier = Tier::Tier2;
                rec.errors = errs.0.iter().map(|e| format!("{}@{}:{}", e.code, e.line, e.column)).collect();
                let lines: Vec<String> = errs.0.iter().map(|e| e.to_string()).collect();
                (Role::Regenerate, regenerate_prompt(&lines, &text), Tier::Tier2)
            }
            Ok(art) => match verify(&art, cfg.state_budget) {
                Err(e) => {
                    rec.stage = Stage::Analysis;
                    transcript.rounds.push(rec);
                    return finish(transcript, Outcome::StateBudgetExceeded { limit: e.limit }, driver.calls);
                }
                Ok(Verification::Static(errors)) => {
                    rec.stage = Stage::Static;
                    rec.errors = errors.iter().map(|e| format!("{}@{}", e.code, e.anchor)).collect();
                    rec.tier = route_tier(&errors, &[], 0);
                    if gen_used >= cfg.k_gen {
                        transcript.rounds.push(rec);
                        return finish(transcript, Outcome::BudgetExhausted { tier: Tier::Tier2 }, driver.calls);
                    }
                    if rec.tier == Tier::Tier1 {
                        if let Ok((fixed, applied)) = autofix(&art, &errors) {
                            gen_used += 1;
                            rec.fixes = applied.iter().map(|f| format!("{}@{}: {}", f.code, f.anchor, f.description)).collect();
                            text = serialize_cir(&fixed);
                            transcript.rounds.push(rec);
                            continue;
                        }
                        rec.tier = Tier::Tier2;
                    }
                    let lines: Vec<String> = errors
                        .iter()
                        .map(|e| match &e.suggestion {
                            Some(s) => format!("{} [{}] {} (suggestion: {s})", e.code, e.anchor, e.message),
                            None => format!("{} [{}] {}", e.code, e.anchor, e.message),
                        })
                        .collect();
                    (Role::Regenerate, regenerate_prompt(&lines, &text), Tier::Tier2)
                }
                Ok(Verification::Analysed(a)) => {
                    let net = &a.translation.net;
                    let unreachable: Vec<_> = a
                        .analysis
                        .goals
                        .iter()
                        .zip(&a.translation.queries)
                        .filter(|(g, _)| !g.reachable)
                        .map(|(_, q)| q)
                        .collect();
                    rec.stage = Stage::Analysis;
                    rec.findings = a.analysis.findings.iter().map(|f| f.kind.name().to_string()).collect();
                    rec.tier = route_tier(&[], &a.analysis.findings, unreachable.len());
                    match rec.tier {
                        Tier::Accept => {
                            rec.stage = Stage::Goals;
                            let mut report = Verification::Analysed(a).report(&art);
                            report.rounds_used = Some(round);
                            transcript.rounds.push(rec);
                            transcript.final_artifact = Some(text);
                            transcript.report = Some(report);
                            return finish(transcript, Outcome::Accepted, driver.calls);
                        }
                        Tier::Tier3 => {
                            let definite: Vec<BugFinding> = a.analysis.definite().cloned().collect();
                            let bug = select_bug(&definite, net, &a.space).expect("definite finding present");
                            let d = build_diag(bug, net, &a.space, &art);
                            (Role::Repair, with_artifact(&render_repair_prompt(&d), &text), Tier::Tier3)
                        }
                        _ => {
                            rec.stage = Stage::Goals;
                            let body = render_goal_violation(&unreachable, &a.space, &art, net, Some(round));
                            let head = format!("{body}\nOutput: the complete revised CIR artifact\n");
                            (Role::GoalRepair, with_artifact(&head, &text), Tier::GoalFeedback)
                        }
                    }
                }
            },
        };
        let used = if budget_tier == Tier::Tier2 { &mut gen_used } else { &mut rep_used };
        let limit = if budget_tier == Tier::Tier2 { cfg.k_gen } else { cfg.k_rep };
        if *used >= limit {
            transcript.rounds.push(rec);
            return finish(transcript, Outcome::BudgetExhausted { tier: budget_tier }, driver.calls);
        }
        *used += 1;
        match driver.ask(role, prompt.clone()) {
            Ok((resp, d)) => {
                rec.prompt = Some(prompt);
                rec.response_digest = Some(d);
                text = resp;
                transcript.rounds.push(rec);
            }
            Err(message) => {
                rec.prompt = Some(prompt);
                transcript.rounds.push(rec);
                return finish(transcript, Outcome::BackendUnavailable { message }, driver.calls);
            }
        }
    }
    unreachable!("the round loop only exits by returning")
}
