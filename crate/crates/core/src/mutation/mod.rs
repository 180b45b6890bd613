//! Single-site bug injection into golden machines, and product-machine
//! search for input sequences that expose the injected bug.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::fsm::{input_space, FsmModel, Guard, ModelError, Style};
use crate::oracle::Observation;

/// Resample attempts before [`sample_mutation`] gives up.
pub const MAX_RESAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MutationKind {
    /// `site` is a transition, `payload` its new target state.
    RetargetTransition,
    /// `site` is a state (Moore) or transition (Mealy), `payload` the new output vector.
    SwapOutputs,
    /// `site` is a transition, `payload` the input bit whose literal is inverted
    /// in the first guard cube that tests it.
    FlipGuardLiteral,
    /// `payload` is the new reset state; `site` is unused.
    WrongResetState,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [
        MutationKind::RetargetTransition,
        MutationKind::SwapOutputs,
        MutationKind::FlipGuardLiteral,
        MutationKind::WrongResetState,
    ];
}

impl std::str::FromStr for MutationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "retarget" | "retargettransition" => Ok(MutationKind::RetargetTransition),
            "swapoutputs" | "outputs" => Ok(MutationKind::SwapOutputs),
            "flipguardliteral" | "flipguard" | "guard" => Ok(MutationKind::FlipGuardLiteral),
            "wrongresetstate" | "reset" => Ok(MutationKind::WrongResetState),
            _ => Err(format!("unknown mutation kind `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub site: usize,
    pub payload: u64,
    pub seed: u64,
}

impl Mutation {
    /// Sends the `from -> to` edge of `golden` to `new_to` instead.
    pub fn retarget(golden: &FsmModel, from: &str, to: &str, new_to: &str) -> Option<Mutation> {
        let id = golden.find_transition(golden.state_by_label(from)?, golden.state_by_label(to)?)?;
        Some(Mutation {
            kind: MutationKind::RetargetTransition,
            site: id.0,
            payload: golden.state_by_label(new_to)? as u64,
            seed: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("invalid mutation site: {0}")]
    InvalidSite(String),
    #[error("the mutation leaves the machine unchanged")]
    IdentityMutation,
    #[error("the machines have different input or output widths")]
    InterfaceMismatch,
    #[error("no distinguishable mutant found after {0} samples")]
    NoDistinguishableMutant(usize),
    #[error("mutant violates a model invariant: {0}")]
    Invalid(ModelError),
}

/// Default search depth: four cycles per state.
pub fn default_horizon(m: &FsmModel) -> usize {
    4 * m.states.len()
}

/// Applies `mu` to a copy of `golden`.
pub fn inject(golden: &FsmModel, mu: &Mutation) -> Result<FsmModel, MutationError> {
    let mut m = golden.clone();
    let bad = |why: String| Err(MutationError::InvalidSite(why));
    match mu.kind {
        MutationKind::RetargetTransition => {
            let Some(t) = golden.transitions.get(mu.site) else {
                return bad(format!("no transition {}", mu.site));
            };
            let to = mu.payload as usize;
            if to >= golden.states.len() {
                return bad(format!("no state {to}"));
            }
            if to == t.to {
                return Err(MutationError::IdentityMutation);
            }
            if golden.find_transition(t.from, to).is_some() {
                return bad(format!(
                    "{} already has a transition to {}",
                    golden.label(t.from),
                    golden.label(to)
                ));
            }
            m.transitions[mu.site].to = to;
        }
        MutationKind::SwapOutputs => {
            let w = golden.output_width();
            if w == 0 {
                return bad("machine has no outputs".into());
            }
            let value = Bits::new(mu.payload, w);
            if value.value() != mu.payload {
                return bad(format!("output value {} exceeds {w} bits", mu.payload));
            }
            match golden.style {
                Style::Moore => {
                    let Some(old) = golden.moore_outputs.get(mu.site) else {
                        return bad(format!("no state {}", mu.site));
                    };
                    if *old == value {
                        return Err(MutationError::IdentityMutation);
                    }
                    m.moore_outputs[mu.site] = value;
                }
                Style::Mealy => {
                    let Some(t) = golden.transitions.get(mu.site) else {
                        return bad(format!("no transition {}", mu.site));
                    };
                    if t.output == Some(value) {
                        return Err(MutationError::IdentityMutation);
                    }
                    m.transitions[mu.site].output = Some(value);
                }
            }
        }
        MutationKind::FlipGuardLiteral => flip_guard_literal(&mut m, mu.site, mu.payload as u32)?,
        MutationKind::WrongResetState => {
            let s = mu.payload as usize;
            if s >= golden.states.len() {
                return bad(format!("no state {s}"));
            }
            if s == golden.reset_state {
                return Err(MutationError::IdentityMutation);
            }
            m.reset_state = s;
        }
    }
    m.validate().map_err(MutationError::Invalid)?;
    Ok(m)
}

/// Inverts literal `bit` in the first cube of transition `site` that tests
/// it. Each input `x` leaving the transition this way is exchanged with
/// `x ^ bit`, whose previous owner takes `x` in return, so the guards of the
/// source state still partition the input space.
fn flip_guard_literal(m: &mut FsmModel, site: usize, bit: u32) -> Result<(), MutationError> {
    let iw = m.input_width();
    let bad = |why: String| Err(MutationError::InvalidSite(why));
    if iw > 16 {
        return bad("guard flips need an enumerable input space (at most 16 bits)".into());
    }
    let Some(t) = m.transitions.get(site).cloned() else {
        return bad(format!("no transition {site}"));
    };
    let cube = match &t.guard {
        Guard::AnyOf(cubes) => cubes.iter().find(|c| bit < iw && c.mask >> bit & 1 == 1).copied(),
        Guard::Default => None,
    };
    let Some(cube) = cube else {
        return bad(format!(
            "guard of {} does not test input bit {bit}",
            m.transition_name(t.id)
        ));
    };
    let n = 1usize << iw;
    let owner: Vec<usize> = (0..n as u64)
        .map(|x| m.fire(t.from, Bits::new(x, iw)).map(|f| f.id.0).unwrap_or(usize::MAX))
        .collect();
    let mut next = owner.clone();
    for x in (0..n).filter(|x| cube.matches(*x as u64) && owner[*x] == site) {
        let y = x ^ (1 << bit);
        if owner[y] != site {
            next[x] = owner[y];
            next[y] = site;
        }
    }
    if next == owner {
        return Err(MutationError::IdentityMutation);
    }
    let changed: BTreeSet<usize> = (0..n)
        .filter(|x| next[*x] != owner[*x])
        .flat_map(|x| [owner[x], next[x]])
        .collect();
    for id in changed {
        if let Some(tr) = m.transitions.get_mut(id) {
            if matches!(tr.guard, Guard::AnyOf(_)) {
                let on: Vec<bool> = next.iter().map(|o| *o == id).collect();
                tr.guard = Guard::from_minterms(iw, &on);
            }
        }
    }
    Ok(())
}

fn same_interface(a: &FsmModel, b: &FsmModel) -> bool {
    a.input_width() == b.input_width() && a.output_width() == b.output_width()
}

/// Shortest input sequence from reset after which the machines differ in the
/// last cycle under `obs`. `None` when no difference shows within `horizon`.
pub fn distinguishing_witness(
    golden: &FsmModel,
    mutant: &FsmModel,
    horizon: usize,
    obs: Observation,
) -> Result<Option<Vec<Bits>>, MutationError> {
    if !same_interface(golden, mutant) {
        return Err(MutationError::InterfaceMismatch);
    }
    let iw = golden.input_width();
    let start = (golden.reset_state, mutant.reset_state);
    let mut seen = BTreeSet::from([start]);
    let mut layer = vec![(start, Vec::<Bits>::new())];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for ((g, u), path) in &layer {
            let states_differ = golden.label(*g) != mutant.label(*u);
            for v in input_space(iw) {
                let v = Bits::new(v, iw);
                let outputs_differ = golden.output(*g, v) != mutant.output(*u, v);
                if outputs_differ || (obs == Observation::StateRegs && states_differ) {
                    let mut p = path.clone();
                    p.push(v);
                    return Ok(Some(p));
                }
                let ng = golden.fire(*g, v).map(|t| t.to).unwrap_or(*g);
                let nu = mutant.fire(*u, v).map(|t| t.to).unwrap_or(*u);
                if seen.insert((ng, nu)) {
                    let mut p = path.clone();
                    p.push(v);
                    next.push(((ng, nu), p));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    Ok(None)
}

/// Every valid (kind, site, payload) for `golden` among `kinds`.
pub fn candidate_mutations(golden: &FsmModel, kinds: &[MutationKind]) -> Vec<Mutation> {
    let mut out = Vec::new();
    let iw = golden.input_width();
    let ow = golden.output_width();
    let mk = |kind, site, payload| Mutation {
        kind,
        site,
        payload,
        seed: 0,
    };
    for kind in kinds {
        match kind {
            MutationKind::RetargetTransition => {
                for t in &golden.transitions {
                    for s in 0..golden.states.len() {
                        if s != t.to && golden.find_transition(t.from, s).is_none() {
                            out.push(mk(*kind, t.id.0, s as u64));
                        }
                    }
                }
            }
            MutationKind::SwapOutputs => match golden.style {
                Style::Moore => {
                    for (s, o) in golden.moore_outputs.iter().enumerate() {
                        out.extend((0..ow).map(|b| mk(*kind, s, o.value() ^ (1 << b))));
                    }
                }
                Style::Mealy => {
                    for t in &golden.transitions {
                        let o = t.output.unwrap_or(Bits::zero(ow)).value();
                        out.extend((0..ow).map(|b| mk(*kind, t.id.0, o ^ (1 << b))));
                    }
                }
            },
            MutationKind::FlipGuardLiteral if iw <= 16 => {
                for t in &golden.transitions {
                    if let Guard::AnyOf(cubes) = &t.guard {
                        let tested = cubes.iter().fold(0, |acc, c| acc | c.mask);
                        out.extend(
                            (0..iw)
                                .filter(|b| tested >> b & 1 == 1)
                                .map(|b| mk(*kind, t.id.0, b as u64)),
                        );
                    }
                }
            }
            MutationKind::FlipGuardLiteral => {}
            MutationKind::WrongResetState => {
                out.extend(
                    (0..golden.states.len())
                        .filter(|s| *s != golden.reset_state)
                        .map(|s| mk(*kind, 0, s as u64)),
                );
            }
        }
    }
    out
}

/// Seeded uniform draw over [`candidate_mutations`], redrawn until the mutant
/// is distinguishable on its outputs within the default horizon.
pub fn sample_mutation(golden: &FsmModel, seed: u64, kinds: &[MutationKind]) -> Result<Mutation, MutationError> {
    let candidates = candidate_mutations(golden, kinds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = default_horizon(golden);
    if candidates.is_empty() {
        return Err(MutationError::NoDistinguishableMutant(0));
    }
    for _ in 0..MAX_RESAMPLES {
        let mu = Mutation {
            seed,
            ..candidates[rng.gen_range(0..candidates.len())]
        };
        let Ok(mutant) = inject(golden, &mu) else { continue };
        if distinguishing_witness(golden, &mutant, horizon, Observation::IoPairs)?.is_some() {
            return Ok(mu);
        }
    }
    Err(MutationError::NoDistinguishableMutant(MAX_RESAMPLES))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutantRecord {
    pub golden_id: String,
    pub mutation: Mutation,
    pub mutant: FsmModel,
    /// Output-observable difference within the horizon.
    pub distinguishable: bool,
    /// Shortest output-distinguishing sequence; empty when indistinguishable.
    pub witness: Vec<Bits>,
}

impl MutantRecord {
    pub fn build(golden_id: &str, golden: &FsmModel, mutation: Mutation) -> Result<MutantRecord, MutationError> {
        let mutant = inject(golden, &mutation)?;
        let witness =
            distinguishing_witness(golden, &mutant, default_horizon(golden), Observation::IoPairs)?.unwrap_or_default();
        Ok(MutantRecord {
            golden_id: golden_id.to_string(),
            mutation,
            distinguishable: !witness.is_empty(),
            witness,
            mutant,
        })
    }

    pub fn to_json(&self) -> String {
        let mutant: serde_json::Value = serde_json::from_str(&self.mutant.to_json()).expect("model JSON");
        let v = serde_json::json!({
            "golden_id": self.golden_id,
            "mutation": self.mutation,
            "distinguishable": self.distinguishable,
            "witness": self.witness.iter().map(|b| b.to_binary()).collect::<Vec<_>>(),
            "mutant": mutant,
        });
        serde_json::to_string_pretty(&v).expect("serialise") + "\n"
    }
}

#[cfg(test)]
mod tests;
