//! Transition guards as sums of cubes over the concatenated input vector.

use std::fmt::Write;

use super::Signal;
use crate::bits::mask;

/// A conjunction of input-bit literals: the guard holds for vector `v` when
/// `v & mask == value`. An all-zero mask is the constant-true cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cube {
    pub mask: u64,
    pub value: u64,
}

impl Cube {
    pub fn matches(self, v: u64) -> bool {
        v & self.mask == self.value
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Guard {
    /// Taken when no sibling guard matches.
    Default,
    /// Taken when any cube matches. An empty list never matches.
    AnyOf(Vec<Cube>),
}

impl Guard {
    pub fn always() -> Guard {
        Guard::AnyOf(vec![Cube { mask: 0, value: 0 }])
    }

    /// Matching against explicit cubes; `Default` answers false here since
    /// its meaning depends on the sibling guards.
    pub fn matches(&self, v: u64) -> bool {
        match self {
            Guard::Default => false,
            Guard::AnyOf(cubes) => cubes.iter().any(|c| c.matches(v)),
        }
    }

    /// Builds a cube cover of the vectors `v < 2^width` with `on[v]` set,
    /// by Shannon expansion from the most significant bit, dropping bits
    /// whose two cofactors agree.
    pub fn from_minterms(width: u32, on: &[bool]) -> Guard {
        assert_eq!(on.len(), 1usize << width);
        let mut cubes = Vec::new();
        shannon(on, width, Cube { mask: 0, value: 0 }, &mut cubes);
        cubes.sort();
        Guard::AnyOf(cubes)
    }

    /// Text form, e.g. `x=1 & y[0]=0 | x=0`, `1` for true, `0` for never,
    /// `default`.
    pub fn text(&self, inputs: &[Signal]) -> String {
        let cubes = match self {
            Guard::Default => return "default".into(),
            Guard::AnyOf(c) if c.is_empty() => return "0".into(),
            Guard::AnyOf(c) => c,
        };
        let total: u32 = inputs.iter().map(|s| s.width).sum();
        let mut out = String::new();
        for (i, cube) in cubes.iter().enumerate() {
            if i > 0 {
                out.push_str(" | ");
            }
            let mut lits = Vec::new();
            let mut offset = total;
            for s in inputs {
                offset -= s.width;
                for b in (0..s.width).rev() {
                    let pos = offset + b;
                    if cube.mask >> pos & 1 == 1 {
                        let level = cube.value >> pos & 1;
                        let mut lit = s.name.clone();
                        if s.width > 1 {
                            let _ = write!(lit, "[{b}]");
                        }
                        let _ = write!(lit, "={level}");
                        lits.push(lit);
                    }
                }
            }
            if lits.is_empty() {
                out.push('1');
            } else {
                out.push_str(&lits.join(" & "));
            }
        }
        out
    }

    /// Parses the text form produced by [`Guard::text`].
    pub fn parse(text: &str, inputs: &[Signal]) -> Result<Guard, String> {
        let text = text.trim();
        match text {
            "default" => return Ok(Guard::Default),
            "0" => return Ok(Guard::AnyOf(Vec::new())),
            _ => {}
        }
        let total: u32 = inputs.iter().map(|s| s.width).sum();
        let mut cubes = Vec::new();
        for part in text.split('|') {
            let part = part.trim();
            let mut cube = Cube { mask: 0, value: 0 };
            if part != "1" {
                for lit in part.split('&') {
                    let (name, level) = lit
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| format!("malformed literal `{}`", lit.trim()))?;
                    let level: u64 = match level.trim() {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(format!("bad level `{other}`")),
                    };
                    let (base, bit) = match name.trim().split_once('[') {
                        Some((b, rest)) => {
                            let idx = rest
                                .strip_suffix(']')
                                .and_then(|i| i.parse::<u32>().ok())
                                .ok_or_else(|| format!("bad bit select in `{name}`"))?;
                            (b, idx)
                        }
                        None => (name.trim(), 0),
                    };
                    let pos = bit_position(inputs, total, base, bit)
                        .ok_or_else(|| format!("unknown input bit `{}`", name.trim()))?;
                    cube.mask |= 1 << pos;
                    cube.value |= level << pos;
                }
            }
            cubes.push(cube);
        }
        Ok(Guard::AnyOf(cubes))
    }

    /// Renders the guard as a Verilog condition over the input ports.
    pub fn verilog(&self, inputs: &[Signal]) -> String {
        match self {
            Guard::Default => "1'b1".into(),
            Guard::AnyOf(c) if c.is_empty() => "1'b0".into(),
            Guard::AnyOf(_) => {
                let text = self.text(inputs);
                let cubes: Vec<String> = text
                    .split(" | ")
                    .map(|cube| {
                        if cube == "1" {
                            return "1'b1".to_string();
                        }
                        let lits: Vec<String> = cube
                            .split(" & ")
                            .map(|l| {
                                let (n, v) = l.split_once('=').unwrap();
                                if v == "1" {
                                    n.to_string()
                                } else {
                                    format!("!{n}")
                                }
                            })
                            .collect();
                        if lits.len() == 1 {
                            lits[0].clone()
                        } else {
                            format!("({})", lits.join(" && "))
                        }
                    })
                    .collect();
                cubes.join(" || ")
            }
        }
    }

    /// Total number of literals, a rough size measure.
    pub fn literal_count(&self) -> u32 {
        match self {
            Guard::Default => 0,
            Guard::AnyOf(c) => c.iter().map(|c| c.mask.count_ones()).sum(),
        }
    }
}

fn bit_position(inputs: &[Signal], total: u32, name: &str, bit: u32) -> Option<u32> {
    let mut offset = total;
    for s in inputs {
        offset -= s.width;
        if s.name == name {
            return (bit < s.width).then_some(offset + bit);
        }
    }
    None
}

fn shannon(on: &[bool], var: u32, prefix: Cube, out: &mut Vec<Cube>) {
    if on.iter().all(|b| *b) {
        out.push(prefix);
        return;
    }
    if !on.iter().any(|b| *b) {
        return;
    }
    let bit = var - 1;
    let half = on.len() / 2;
    let (lo, hi) = on.split_at(half);
    if lo == hi {
        shannon(lo, bit, prefix, out);
        return;
    }
    let m = prefix.mask | 1 << bit;
    shannon(
        lo,
        bit,
        Cube {
            mask: m,
            value: prefix.value,
        },
        out,
    );
    shannon(
        hi,
        bit,
        Cube {
            mask: m,
            value: prefix.value | 1 << bit,
        },
        out,
    );
}

/// Enumerates the satisfying vectors of `g` among `2^width`.
pub fn minterms(g: &Guard, width: u32) -> Vec<bool> {
    let m = mask(width);
    (0..=m).map(|v| g.matches(v)).collect()
}
