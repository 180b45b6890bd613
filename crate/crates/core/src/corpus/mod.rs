//! Benchmark corpora: a versioned manifest of RTL and specification files,
//! a loader that cross-checks every entry against its extracted machine,
//! and a seeded generator of synthetic machines.

use std::collections::BTreeSet;
use std::fmt::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::fsm::{extract_fsm, render_rtl, FsmModel, Guard, Signal, StateDef, Style, Transition, TransitionId};
use crate::hdl::{ResetPolarity, SourceKind, SourceUnit};
use crate::loops::{level_for, BenchItem, Level};
use crate::mutation::{inject, Mutation};

pub const MANIFEST_FORMAT: u32 = 1;

/// Distribution that synthetic machines are drawn from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusProfile {
    /// Relative share of Easy, Medium and Hard machines.
    pub level_weights: [u32; 3],
    /// Inclusive state-count range per level.
    pub state_ranges: [(usize, usize); 3],
    /// `(total input bits, weight)` choices.
    pub input_widths: Vec<(u32, u32)>,
    /// `(total output bits, weight)` choices.
    pub output_widths: Vec<(u32, u32)>,
    pub mealy_percent: u32,
    pub async_reset_percent: u32,
}

impl CorpusProfile {
    /// Mirrors the published benchmark: 45/29/26 Easy/Medium/Hard, 2 to 28
    /// states, mostly narrow interfaces with a tail up to 12 inputs and 16
    /// outputs.
    pub fn standard() -> CorpusProfile {
        CorpusProfile {
            level_weights: [45, 29, 26],
            state_ranges: [(2, 7), (8, 14), (15, 28)],
            input_widths: vec![(1, 50), (2, 20), (3, 10), (4, 8), (6, 5), (8, 4), (12, 3)],
            output_widths: vec![(1, 45), (2, 20), (3, 10), (4, 10), (8, 10), (16, 5)],
            mealy_percent: 30,
            async_reset_percent: 20,
        }
    }

    /// One-input, one-output, two-state machines only.
    pub fn minimal() -> CorpusProfile {
        CorpusProfile {
            level_weights: [1, 0, 0],
            state_ranges: [(2, 2); 3],
            input_widths: vec![(1, 1)],
            output_widths: vec![(1, 1)],
            mealy_percent: 0,
            async_reset_percent: 0,
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.level_weights.iter().sum::<u32>() == 0 {
            return Err("level weights sum to zero".into());
        }
        for (i, (lo, hi)) in self.state_ranges.iter().enumerate() {
            if self.level_weights[i] > 0 && (*lo < 2 || lo > hi || *hi > 256) {
                return Err(format!("bad state range {lo}..={hi}"));
            }
        }
        let widths = |v: &[(u32, u32)], max: u32| {
            !v.is_empty() && v.iter().any(|(_, w)| *w > 0) && v.iter().all(|(b, _)| (1..=max).contains(b))
        };
        if !widths(&self.input_widths, 16) || !widths(&self.output_widths, 64) {
            return Err("width choices must be non-empty, weighted, 1..=16 inputs and 1..=64 outputs".into());
        }
        Ok(())
    }
}

impl std::str::FromStr for CorpusProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(CorpusProfile::standard()),
            "minimal" => Ok(CorpusProfile::minimal()),
            other => Err(format!("unknown profile `{other}` (standard, minimal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    /// Paths are relative to the manifest's directory.
    pub rtl: String,
    pub spec: String,
    /// Cached model JSON, cross-checked on load when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub inputs: u32,
    pub outputs: u32,
    pub states: usize,
    pub transitions: usize,
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    pub count: usize,
    pub profile: CorpusProfile,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: u32,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }

    pub fn level_counts(&self) -> [usize; 3] {
        let mut n = [0; 3];
        for e in &self.entries {
            n[e.level as usize] += 1;
        }
        n
    }
}

/// A manifest entry with its files read and its machine extracted.
#[derive(Clone, Debug)]
pub struct LoadedEntry {
    pub entry: CorpusEntry,
    pub rtl_text: String,
    pub spec_text: String,
    pub model: FsmModel,
}

impl LoadedEntry {
    /// Builds an entry from in-memory sources, deriving its characteristics
    /// from the extracted machine. Files are named after `id`.
    pub fn from_sources(
        id: &str,
        rtl: &str,
        spec: &str,
        mutation: Option<Mutation>,
        note: Option<String>,
    ) -> Result<LoadedEntry, String> {
        let unit = SourceUnit::new(format!("{id}.v"), rtl, SourceKind::Rtl).map_err(|e| e.to_string())?;
        let model = extract_fsm(&unit.parse_module().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if spec.trim().is_empty() {
            return Err("specification is empty".into());
        }
        if let Some(mu) = &mutation {
            inject(&model, mu).map_err(|e| format!("mutation: {e}"))?;
        }
        Ok(LoadedEntry {
            entry: CorpusEntry {
                id: id.to_string(),
                rtl: format!("rtl/{id}.v"),
                spec: format!("spec/{id}.txt"),
                model: Some(format!("models/{id}.json")),
                inputs: model.input_width(),
                outputs: model.output_width(),
                states: model.states.len(),
                transitions: model.transitions.len(),
                level: level_for(model.states.len()),
                mutation,
                note,
            },
            rtl_text: rtl.to_string(),
            spec_text: spec.to_string(),
            model,
        })
    }

    pub fn bench_item(&self) -> BenchItem {
        BenchItem {
            id: self.entry.id.clone(),
            dut: SourceUnit::new(self.entry.rtl.clone(), self.rtl_text.clone(), SourceKind::Rtl)
                .expect("loaded before"),
            spec: self.spec_text.clone(),
            mutation: self.entry.mutation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub items: Vec<LoadedEntry>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&LoadedEntry> {
        self.items.iter().find(|i| i.entry.id == id)
    }

    pub fn bench_items(&self) -> Vec<BenchItem> {
        self.items.iter().map(LoadedEntry::bench_item).collect()
    }

    /// Adds an entry, keeping ids unique.
    pub fn push(&mut self, item: LoadedEntry) -> Result<(), String> {
        if self.get(&item.entry.id).is_some() {
            return Err(format!("duplicate id `{}`", item.entry.id));
        }
        self.manifest.entries.push(item.entry.clone());
        self.items.push(item);
        Ok(())
    }

    /// Writes `manifest.json` and every entry's files under `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        for sub in ["rtl", "spec", "models"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let put = |rel: &str, text: &str| {
            crate::llm::write_atomic(&dir.join(rel), text.as_bytes()).map_err(|e| std::io::Error::other(e.to_string()))
        };
        for item in &self.items {
            let e = &item.entry;
            put(&e.rtl, &item.rtl_text)?;
            put(&e.spec, &item.spec_text)?;
            if let Some(m) = &e.model {
                put(m, &item.model.to_json())?;
            }
        }
        put("manifest.json", &self.manifest.to_json())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ManifestError {
    pub path: PathBuf,
    /// One line per failing entry or manifest-level problem.
    pub problems: Vec<String>,
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "corpus manifest {} has {} problem(s)",
            self.path.display(),
            self.problems.len()
        )?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

fn check_entry(dir: &Path, e: &CorpusEntry) -> Result<LoadedEntry, String> {
    let read = |rel: &str| {
        std::fs::read_to_string(dir.join(rel)).map_err(|err| format!("cannot read {}: {err}", dir.join(rel).display()))
    };
    let rtl = read(&e.rtl)?;
    let spec = read(&e.spec)?;
    let mut loaded = LoadedEntry::from_sources(&e.id, &rtl, &spec, e.mutation, e.note.clone())?;
    let m = &loaded.model;
    let declared = (e.inputs, e.outputs, e.states, e.transitions);
    let actual = (m.input_width(), m.output_width(), m.states.len(), m.transitions.len());
    if declared != actual {
        return Err(format!(
            "declares i/p {} o/p {} states {} transitions {} but the RTL has {} {} {} {}",
            declared.0, declared.1, declared.2, declared.3, actual.0, actual.1, actual.2, actual.3
        ));
    }
    if e.level != level_for(m.states.len()) {
        return Err(format!("level {} does not match {} states", e.level, m.states.len()));
    }
    if let Some(rel) = &e.model {
        let cached = FsmModel::from_json(&read(rel)?).map_err(|err| format!("{rel}: {err}"))?;
        if &cached != m {
            return Err(format!("{rel} is out of date with {}", e.rtl));
        }
    }
    loaded.entry = e.clone();
    Ok(loaded)
}

/// Reads a manifest (or the `manifest.json` inside a directory) and
/// validates every entry, collecting all failures.
pub fn load_corpus(path: &Path) -> Result<Corpus, ManifestError> {
    let file = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let fail = |problems: Vec<String>| ManifestError {
        path: file.clone(),
        problems,
    };
    let text = std::fs::read_to_string(&file).map_err(|e| fail(vec![format!("cannot read manifest: {e}")]))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| fail(vec![format!("malformed manifest: {e}")]))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(fail(vec![format!("unsupported manifest format {}", manifest.format)]));
    }
    let dir = file.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for e in &manifest.entries {
        if !seen.insert(e.id.as_str()) {
            problems.push(format!("{}: duplicate id", e.id));
            continue;
        }
        match check_entry(dir, e) {
            Ok(item) => items.push(item),
            Err(why) => problems.push(format!("{}: {why}", e.id)),
        }
    }
    if !problems.is_empty() {
        return Err(fail(problems));
    }
    Ok(Corpus { manifest, items })
}

/// Reads every `<id>.v` in `dir` together with its `<id>.txt` description.
/// A design without a description, or one that does not extract, is
/// reported and the scan carries on.
pub fn import_pairs(dir: &Path) -> Result<Vec<LoadedEntry>, ManifestError> {
    let fail = |problems: Vec<String>| ManifestError {
        path: dir.to_path_buf(),
        problems,
    };
    let listing = std::fs::read_dir(dir).map_err(|e| fail(vec![format!("cannot list directory: {e}")]))?;
    let mut designs: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "v"))
        .collect();
    designs.sort();
    let mut problems = Vec::new();
    let mut items = Vec::new();
    for rtl_path in designs {
        let id = rtl_path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let loaded = std::fs::read_to_string(&rtl_path)
            .map_err(|e| format!("cannot read {}: {e}", rtl_path.display()))
            .and_then(|rtl| {
                let spec_path = rtl_path.with_extension("txt");
                let spec = std::fs::read_to_string(&spec_path)
                    .map_err(|e| format!("no description {}: {e}", spec_path.display()))?;
                LoadedEntry::from_sources(&id, &rtl, &spec, None, Some(format!("imported from {}", dir.display())))
            });
        match loaded {
            Ok(item) => items.push(item),
            Err(why) => problems.push(format!("{id}: {why}")),
        }
    }
    if items.is_empty() && problems.is_empty() {
        problems.push("no .v files found".into());
    }
    if !problems.is_empty() {
        return Err(fail(problems));
    }
    Ok(items)
}

fn weighted(rng: &mut impl Rng, choices: &[(u32, u32)]) -> u32 {
    let total: u32 = choices.iter().map(|c| c.1).sum();
    let mut pick = rng.gen_range(0..total);
    for (value, w) in choices {
        if pick < *w {
            return *value;
        }
        pick -= w;
    }
    unreachable!("pick is below the weight total")
}

/// Splits `count` by `weights` with largest remainders, ties to the lower
/// level.
fn apportion(count: usize, weights: [u32; 3]) -> [usize; 3] {
    let total: u64 = weights.iter().map(|w| *w as u64).sum();
    let mut out = [0usize; 3];
    let mut rems = Vec::new();
    for i in 0..3 {
        let exact = count as u64 * weights[i] as u64;
        out[i] = (exact / total) as usize;
        rems.push((exact % total, i));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = count - out.iter().sum::<usize>();
    for (_, i) in rems.into_iter().filter(|(_, i)| weights[*i] > 0).take(short) {
        out[i] += 1;
    }
    out
}

fn port_signals(prefix: &str, bus: &str, width: u32) -> Vec<Signal> {
    match width {
        1 => vec![Signal::new(prefix, 1)],
        2..=4 => (0..width).map(|i| Signal::new(format!("{prefix}{i}"), 1)).collect(),
        _ => vec![Signal::new(bus, width)],
    }
}

/// A random complete, deterministic machine with every state reachable from
/// reset. Each state's next state depends on at most three input bits.
pub fn random_model(
    rng: &mut impl Rng,
    name: &str,
    states: usize,
    input_width: u32,
    output_width: u32,
    style: Style,
    async_reset: bool,
) -> FsmModel {
    assert!(states >= 1 && (1..=16).contains(&input_width) && (1..=64).contains(&output_width));
    let enc_width = (usize::BITS - (states - 1).leading_zeros()).max(1);
    let relevant: Vec<Vec<u32>> = (0..states)
        .map(|_| {
            let k = rng.gen_range(1..=3).min(input_width) as usize;
            let mut bits: Vec<u32> = (0..input_width).collect();
            bits.shuffle(rng);
            bits.truncate(k);
            bits.sort_unstable();
            bits
        })
        .collect();
    let cap: Vec<usize> = relevant.iter().map(|r| (1usize << r.len()).min(states)).collect();

    // Spanning tree from the reset state, respecting each state's capacity.
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); states];
    for child in 1..states {
        let open: Vec<usize> = (0..child).filter(|p| targets[*p].len() < cap[*p]).collect();
        let parent = *open.choose(rng).expect("the previous state always has room");
        targets[parent].push(child);
    }
    for s in 0..states {
        let want = (targets[s].len() + rng.gen_range(0..=2)).clamp(1, cap[s]);
        while targets[s].len() < want {
            let t = rng.gen_range(0..states);
            if !targets[s].contains(&t) {
                targets[s].push(t);
            }
        }
    }

    let mask_out = if output_width == 64 {
        u64::MAX
    } else {
        (1u64 << output_width) - 1
    };
    let mut transitions = Vec::new();
    for s in 0..states {
        let k = relevant[s].len();
        let mut patterns: Vec<usize> = (0..1usize << k).collect();
        patterns.shuffle(rng);
        let mut owner = vec![0usize; 1 << k];
        for (i, p) in patterns.iter().enumerate() {
            owner[*p] = if i < targets[s].len() {
                i
            } else {
                rng.gen_range(0..targets[s].len())
            };
        }
        let mut sorted = targets[s].clone();
        sorted.sort_unstable();
        for to in sorted {
            let slot = targets[s].iter().position(|t| *t == to).expect("own target");
            let on: Vec<bool> = (0..1u64 << input_width)
                .map(|v| {
                    let p = relevant[s]
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (j, bit)| acc | ((((v >> bit) & 1) as usize) << j));
                    owner[p] == slot
                })
                .collect();
            let output = (style == Style::Mealy).then(|| Bits::new(rng.gen::<u64>() & mask_out, output_width));
            transitions.push(Transition {
                id: TransitionId(transitions.len()),
                from: s,
                to,
                guard: Guard::from_minterms(input_width, &on),
                output,
                line: 0,
            });
        }
    }

    let mut moore_outputs = Vec::new();
    if style == Style::Moore {
        moore_outputs = (0..states)
            .map(|_| Bits::new(rng.gen::<u64>() & mask_out, output_width))
            .collect();
        if states > 1 && moore_outputs.iter().all(|o| *o == moore_outputs[0]) {
            moore_outputs[1] = Bits::new(moore_outputs[1].value() ^ 1, output_width);
        }
    }

    let inputs = port_signals("x", "din", input_width);
    let outputs = port_signals("y", "dout", output_width);
    let (reset, polarity) = if async_reset {
        ("rst_n", ResetPolarity::ActiveLow)
    } else {
        ("rst", ResetPolarity::ActiveHigh)
    };
    let mut port_order = vec!["clk".to_string(), reset.to_string()];
    port_order.extend(inputs.iter().chain(&outputs).map(|s| s.name.clone()));
    let m = FsmModel {
        name: name.to_string(),
        clock: "clk".into(),
        reset: reset.into(),
        reset_polarity: polarity,
        reset_async: async_reset,
        state_register: "state".into(),
        port_order,
        inputs,
        outputs,
        states: (0..states)
            .map(|i| StateDef {
                id: i,
                label: format!("S{i}"),
                encoding: Bits::new(i as u64, enc_width),
                line: 0,
            })
            .collect(),
        reset_state: 0,
        transitions,
        style,
        moore_outputs,
    };
    debug_assert_eq!(m.validate(), Ok(()));
    m
}

/// A plain-English description of `m` in a fixed template.
pub fn spec_text(m: &FsmModel) -> String {
    let mut out = String::new();
    let style = match m.style {
        Style::Moore => "Moore",
        Style::Mealy => "Mealy",
    };
    let _ = writeln!(
        out,
        "Write a Verilog module named {} implementing a {style} state machine with {} states, clocked on the rising edge of {}.",
        m.name,
        m.states.len(),
        m.clock
    );
    let level = match m.reset_polarity {
        ResetPolarity::ActiveHigh => "high",
        ResetPolarity::ActiveLow => "low",
    };
    let kind = if m.reset_async { "asynchronous" } else { "synchronous" };
    let _ = writeln!(
        out,
        "When {} is {level} ({kind} reset) the machine enters state {}.",
        m.reset,
        m.label(m.reset_state)
    );
    let sig = |s: &[Signal]| {
        s.iter()
            .map(|s| format!("{} ({} bit{})", s.name, s.width, if s.width == 1 { "" } else { "s" }))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "Inputs: {}.", sig(&m.inputs));
    let _ = writeln!(out, "Outputs: {}.", sig(&m.outputs));
    let names: Vec<&str> = m.states.iter().map(|s| s.label.as_str()).collect();
    let _ = writeln!(out, "States: {}.", names.join(", "));
    out.push_str("Behaviour:\n");
    let out_text = |v: Bits| {
        m.split_outputs(v)
            .into_iter()
            .map(|(n, b)| format!("{n}={}", b.to_binary()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for s in &m.states {
        if m.style == Style::Moore {
            let _ = writeln!(
                out,
                "- In state {} the outputs are {}.",
                s.label,
                out_text(m.moore_outputs[s.id])
            );
        }
        for t in m.transitions_from(s.id) {
            let cond = match &t.guard {
                Guard::Default => "otherwise".to_string(),
                g => format!("when {}", g.text(&m.inputs)),
            };
            let drive = t
                .output
                .map(|o| format!(", driving {}", out_text(o)))
                .unwrap_or_default();
            let _ = writeln!(out, "- From {} go to {} {cond}{drive}.", s.label, m.label(t.to));
        }
    }
    out
}

/// `count` synthetic machines drawn from `profile`, identical for the same
/// seed. Machines are rendered to RTL and re-extracted, so each entry's
/// model is what the frontend sees.
pub fn generate_corpus(count: usize, seed: u64, profile: &CorpusProfile) -> Result<Corpus, String> {
    if count == 0 {
        return Err("count must be at least 1".into());
    }
    profile.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = apportion(count, profile.level_weights);
    let mut corpus = Corpus {
        manifest: CorpusManifest {
            format: MANIFEST_FORMAT,
            description: format!("{count} synthetic machines, seed {seed}"),
            generator: Some(GeneratorInfo {
                seed,
                count,
                profile: profile.clone(),
            }),
            notes: Vec::new(),
            entries: Vec::new(),
        },
        items: Vec::new(),
    };
    let mut index = 0;
    for (level, n) in split.iter().enumerate() {
        let (lo, hi) = profile.state_ranges[level];
        for _ in 0..*n {
            index += 1;
            let id = format!("gen{index:03}");
            let states = rng.gen_range(lo..=hi);
            let iw = weighted(&mut rng, &profile.input_widths);
            let ow = weighted(&mut rng, &profile.output_widths);
            let style = if rng.gen_range(0..100) < profile.mealy_percent {
                Style::Mealy
            } else {
                Style::Moore
            };
            let async_reset = rng.gen_range(0..100) < profile.async_reset_percent;
            let mut sub = ChaCha8Rng::seed_from_u64(rng.gen());
            let m = random_model(&mut sub, &id, states, iw, ow, style, async_reset);
            let rtl = render_rtl(&m);
            let item = LoadedEntry::from_sources(&id, &rtl, &spec_text(&m), None, None)
                .map_err(|e| format!("{id}: generated RTL does not round-trip: {e}"))?;
            corpus.push(item)?;
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests;
