//! State and transition coverage accumulated from traces, and the text
//! report layout used for feedback.

use std::collections::BTreeSet;
use std::fmt::{self, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fsm::{enumerate_transitions, FsmModel, StateId, TransitionId};
use crate::sim::Trace;

/// A percentage held in hundredths, rounded half-up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(pub u32);

impl Percent {
    pub fn of(covered: usize, total: usize) -> Percent {
        if total == 0 {
            return Percent(0);
        }
        let (c, t) = (covered as u64, total as u64);
        Percent(((20_000 * c + t) / (2 * t)) as u32)
    }

    pub fn hundredths(self) -> u32 {
        self.0
    }

    pub fn parse(text: &str) -> Option<Percent> {
        let (int, frac) = text.trim().split_once('.')?;
        if frac.len() != 2 {
            return None;
        }
        Some(Percent(int.parse::<u32>().ok()? * 100 + frac.parse::<u32>().ok()?))
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = format!("{}.{:02}", self.0 / 100, self.0 % 100);
        f.pad(&s)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Percent::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad percentage `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCoverage {
    pub id: StateId,
    pub label: String,
    pub line: u32,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCoverage {
    pub id: TransitionId,
    pub from: String,
    pub to: String,
    pub line: u32,
    pub covered: bool,
}

impl TransitionCoverage {
    pub fn name(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub module_name: String,
    pub fsm_register_name: String,
    pub states_total: usize,
    pub states_covered: usize,
    pub transitions_total: usize,
    pub transitions_covered: usize,
    pub state_percent: Percent,
    pub transition_percent: Percent,
    pub per_state: Vec<StateCoverage>,
    /// In [`enumerate_transitions`] order.
    pub per_transition: Vec<TransitionCoverage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("trace of `{trace}` does not match model `{model}`")]
    TraceModelMismatch { trace: String, model: String },
    #[error("reports describe different machines")]
    ModelMismatch,
}

/// Transitions fired by one trace.
///
/// A pair of consecutive non-reset records fires the transition selected by
/// the first record's state and inputs. A reset that interrupts a non-reset
/// record counts as that state's transition into the reset state when the
/// model declares one.
pub fn fired_transitions(m: &FsmModel, t: &Trace) -> BTreeSet<TransitionId> {
    let mut out = BTreeSet::new();
    for pair in t.records.windows(2) {
        let (r, next) = (&pair[0], &pair[1]);
        if r.reset_active {
            continue;
        }
        if next.reset_active {
            if let Some(id) = m.find_transition(r.state, m.reset_state) {
                out.insert(id);
            }
        } else if let Some(tr) = m.fire(r.state, r.inputs) {
            if tr.to == next.state {
                out.insert(tr.id);
            }
        }
    }
    out
}

fn check(m: &FsmModel, t: &Trace) -> Result<(), CoverageError> {
    let labels_match =
        t.state_labels.len() == m.states.len() && t.state_labels.iter().zip(&m.states).all(|(a, s)| *a == s.label);
    if !labels_match || t.records.iter().any(|r| r.state >= m.states.len()) {
        return Err(CoverageError::TraceModelMismatch {
            trace: t.dut_name.clone(),
            model: m.name.clone(),
        });
    }
    Ok(())
}

/// Builds a report from explicit covered sets.
pub fn report_from_sets(
    m: &FsmModel,
    states: &BTreeSet<StateId>,
    transitions: &BTreeSet<TransitionId>,
) -> CoverageReport {
    let per_state: Vec<StateCoverage> = m
        .states
        .iter()
        .map(|s| StateCoverage {
            id: s.id,
            label: s.label.clone(),
            line: s.line,
            covered: states.contains(&s.id),
        })
        .collect();
    let per_transition: Vec<TransitionCoverage> = enumerate_transitions(m)
        .into_iter()
        .map(|id| {
            let t = &m.transitions[id.0];
            TransitionCoverage {
                id,
                from: m.label(t.from).to_string(),
                to: m.label(t.to).to_string(),
                line: t.line,
                covered: transitions.contains(&id),
            }
        })
        .collect();
    finish(m.name.clone(), m.state_register.clone(), per_state, per_transition)
}

fn finish(
    module_name: String,
    fsm_register_name: String,
    per_state: Vec<StateCoverage>,
    per_transition: Vec<TransitionCoverage>,
) -> CoverageReport {
    let states_covered = per_state.iter().filter(|s| s.covered).count();
    let transitions_covered = per_transition.iter().filter(|t| t.covered).count();
    CoverageReport {
        module_name,
        fsm_register_name,
        states_total: per_state.len(),
        states_covered,
        transitions_total: per_transition.len(),
        transitions_covered,
        state_percent: Percent::of(states_covered, per_state.len()),
        transition_percent: Percent::of(transitions_covered, per_transition.len()),
        per_state,
        per_transition,
    }
}

/// Coverage of `m` over all `traces`.
pub fn accumulate(m: &FsmModel, traces: &[Trace]) -> Result<CoverageReport, CoverageError> {
    let mut states = BTreeSet::new();
    let mut transitions = BTreeSet::new();
    for t in traces {
        check(m, t)?;
        states.extend(t.records.iter().map(|r| r.state));
        transitions.extend(fired_transitions(m, t));
    }
    Ok(report_from_sets(m, &states, &transitions))
}

/// Union of two reports on the same machine.
pub fn merge(a: &CoverageReport, b: &CoverageReport) -> Result<CoverageReport, CoverageError> {
    let same_states = a.per_state.len() == b.per_state.len()
        && a.per_state
            .iter()
            .zip(&b.per_state)
            .all(|(x, y)| x.label == y.label && x.line == y.line);
    let same_transitions = a.per_transition.len() == b.per_transition.len()
        && a.per_transition
            .iter()
            .zip(&b.per_transition)
            .all(|(x, y)| x.id == y.id && x.from == y.from && x.to == y.to);
    if a.module_name != b.module_name || !same_states || !same_transitions {
        return Err(CoverageError::ModelMismatch);
    }
    let per_state = a
        .per_state
        .iter()
        .zip(&b.per_state)
        .map(|(x, y)| StateCoverage {
            covered: x.covered || y.covered,
            ..x.clone()
        })
        .collect();
    let per_transition = a
        .per_transition
        .iter()
        .zip(&b.per_transition)
        .map(|(x, y)| TransitionCoverage {
            covered: x.covered || y.covered,
            ..x.clone()
        })
        .collect();
    Ok(finish(
        a.module_name.clone(),
        a.fsm_register_name.clone(),
        per_state,
        per_transition,
    ))
}

impl CoverageReport {
    pub fn uncovered_ids(&self) -> BTreeSet<TransitionId> {
        self.per_transition
            .iter()
            .filter(|t| !t.covered)
            .map(|t| t.id)
            .collect()
    }

    pub fn covered_ids(&self) -> BTreeSet<TransitionId> {
        self.per_transition.iter().filter(|t| t.covered).map(|t| t.id).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.transitions_covered == self.transitions_total
    }
}

/// Feedback lines, `Transition from <X> to <Y>`, in report order.
pub fn uncovered_transitions(r: &CoverageReport) -> Vec<String> {
    r.per_transition
        .iter()
        .filter(|t| !t.covered)
        .map(|t| format!("Transition from {} to {}", t.from, t.to))
        .collect()
}

const NAME_COL: usize = 21;
const NUM_COL: usize = 12;

fn covered_word(c: bool) -> &'static str {
    if c {
        "Covered"
    } else {
        "Not Covered"
    }
}

/// Renders the fixed-layout text report.
pub fn render_report(r: &CoverageReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "FSM Coverage for Module : {}", r.module_name);
    let _ = writeln!(out, "Summary for FSM :: {}", r.fsm_register_name);
    let _ = writeln!(out, "{:NAME_COL$}{:NUM_COL$}{:NUM_COL$}Percent", "", "Total", "Covered");
    let _ = writeln!(
        out,
        "{:NAME_COL$}{:<NUM_COL$}{:<NUM_COL$}{}",
        "States", r.states_total, r.states_covered, r.state_percent
    );
    let _ = writeln!(
        out,
        "{:NAME_COL$}{:<NUM_COL$}{:<NUM_COL$}{}",
        "Transitions", r.transitions_total, r.transitions_covered, r.transition_percent
    );
    let _ = writeln!(out, "{:NAME_COL$}{:NUM_COL$}Covered", "States", "Line No.");
    for s in &r.per_state {
        let _ = writeln!(
            out,
            "{:NAME_COL$}{:<NUM_COL$}{}",
            s.label,
            s.line,
            covered_word(s.covered)
        );
    }
    let _ = writeln!(out, "{:NAME_COL$}{:NUM_COL$}Covered", "Transitions", "Line No.");
    for t in &r.per_transition {
        let _ = writeln!(
            out,
            "{:NAME_COL$}{:<NUM_COL$}{}",
            t.name(),
            t.line,
            covered_word(t.covered)
        );
    }
    out
}

/// Counts and per-item flags recovered from a rendered report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScrapedReport {
    pub module_name: String,
    pub fsm_register_name: String,
    pub states: (usize, usize, Percent),
    pub transitions: (usize, usize, Percent),
    pub per_state: Vec<(String, u32, bool)>,
    pub per_transition: Vec<(String, u32, bool)>,
}

/// Reads back the output of [`render_report`].
pub fn scrape_report(text: &str) -> Option<ScrapedReport> {
    let mut lines = text.lines();
    let module_name = lines.next()?.strip_prefix("FSM Coverage for Module : ")?.to_string();
    let fsm_register_name = lines.next()?.strip_prefix("Summary for FSM :: ")?.to_string();
    lines.next()?;
    let summary = |line: &str, head: &str| -> Option<(usize, usize, Percent)> {
        let rest = line.strip_prefix(head)?;
        let f: Vec<&str> = rest.split_whitespace().collect();
        Some((
            f.first()?.parse().ok()?,
            f.get(1)?.parse().ok()?,
            Percent::parse(f.get(2)?)?,
        ))
    };
    let states = summary(lines.next()?, "States")?;
    let transitions = summary(lines.next()?, "Transitions")?;
    let item = |line: &str| -> Option<(String, u32, bool)> {
        let name = line.get(..NAME_COL)?.trim().to_string();
        let rest = line.get(NAME_COL..)?;
        let (num, flag) = rest.split_at(NUM_COL.min(rest.len()));
        Some((name, num.trim().parse().ok()?, flag.trim() == "Covered"))
    };
    let mut per_state = Vec::new();
    let mut per_transition = Vec::new();
    let mut in_transitions = false;
    lines.next()?;
    for line in lines {
        if line.starts_with("Transitions") && line.contains("Line No.") {
            in_transitions = true;
            continue;
        }
        let it = item(line)?;
        if in_transitions {
            per_transition.push(it);
        } else {
            per_state.push(it);
        }
    }
    Some(ScrapedReport {
        module_name,
        fsm_register_name,
        states,
        transitions,
        per_state,
        per_transition,
    })
}

#[cfg(test)]
mod tests;
