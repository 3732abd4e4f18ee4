//! Check, translate, explore and analyse in one call.

use std::collections::HashMap;

use crate::analyze::{analyze, explore, Analysis, StateBudgetExceeded, StateSpace};
use crate::check::{check, CheckError};
use crate::cir::{CirArtifact, ResourceKind};
use crate::diag::VerdictReport;
use crate::translate::{translate, Translation};

pub fn resource_kinds(art: &CirArtifact) -> HashMap<String, ResourceKind> {
    art.resources.iter().map(|(k, r)| (k.clone(), r.kind)).collect()
}

/// Everything produced for an artifact that passed the static checker.
pub struct Analysed {
    pub translation: Translation,
    pub space: StateSpace,
    pub analysis: Analysis,
}

pub enum Verification {
    Static(Vec<CheckError>),
    Analysed(Box<Analysed>),
}

impl Verification {
    pub fn report(&self, art: &CirArtifact) -> VerdictReport {
        match self {
            Verification::Static(errors) => VerdictReport::static_failure(errors.clone()),
            Verification::Analysed(a) => VerdictReport::from_analysis(
                art,
                &a.translation.net,
                &a.space,
                &a.translation.queries,
                &a.analysis,
            ),
        }
    }
}

pub fn analyse(art: &CirArtifact, budget: usize) -> Result<Analysed, StateBudgetExceeded> {
    let translation = translate(art);
    let space = explore(&translation.net, budget)?;
    let analysis = analyze(&translation.net, &space, &translation.queries, &resource_kinds(art));
    Ok(Analysed {
        translation,
        space,
        analysis,
    })
}

pub fn verify(art: &CirArtifact, budget: usize) -> Result<Verification, StateBudgetExceeded> {
    let errors = check(art);
    if !errors.is_empty() {
        return Ok(Verification::Static(errors));
    }
    Ok(Verification::Analysed(Box::new(analyse(art, budget)?)))
}
