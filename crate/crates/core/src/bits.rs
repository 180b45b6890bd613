//! Fixed-width two-state bit vectors.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum width of a single vector. Inputs and outputs of the machines this
/// crate handles are far narrower; concatenated input vectors must fit here.
pub const MAX_WIDTH: u32 = 64;

/// A two-state bit vector of up to 64 bits. Bit 0 is the least significant.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bits {
    value: u64,
    width: u32,
}

pub(crate) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl Bits {
    /// Builds a vector, truncating `value` to `width` bits.
    pub fn new(value: u64, width: u32) -> Self {
        assert!(width <= MAX_WIDTH, "bit vector wider than {MAX_WIDTH}");
        Bits {
            value: value & mask(width),
            width,
        }
    }

    pub fn zero(width: u32) -> Self {
        Bits::new(0, width)
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    pub fn bit(self, index: u32) -> bool {
        index < self.width && (self.value >> index) & 1 == 1
    }

    /// Extracts `width` bits starting at `lsb`.
    pub fn slice(self, lsb: u32, width: u32) -> Bits {
        Bits::new(self.value >> lsb, width)
    }

    /// Concatenates parts, first part most significant.
    pub fn concat<I: IntoIterator<Item = Bits>>(parts: I) -> Bits {
        parts.into_iter().fold(Bits::zero(0), |acc, p| {
            Bits::new(
                acc.value.checked_shl(p.width).unwrap_or(0) | p.value,
                acc.width + p.width,
            )
        })
    }

    /// Binary digits, most significant first. Empty for a zero-width vector.
    pub fn to_binary(self) -> String {
        (0..self.width)
            .rev()
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    /// Parses a string of `0`/`1` digits (underscores ignored), msb first.
    pub fn parse_binary(text: &str) -> Option<Bits> {
        let digits: Vec<char> = text.chars().filter(|c| *c != '_').collect();
        if digits.len() > MAX_WIDTH as usize {
            return None;
        }
        let mut value = 0u64;
        for c in &digits {
            value = (value << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return None,
                };
        }
        Some(Bits::new(value, digits.len() as u32))
    }

    /// Verilog sized literal, e.g. `4'b0101`.
    pub fn to_verilog(self) -> String {
        format!("{}'b{}", self.width.max(1), {
            let s = self.to_binary();
            if s.is_empty() {
                "0".to_string()
            } else {
                s
            }
        })
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'b{}", self.width, self.to_binary())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_binary())
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_binary())
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Bits::parse_binary(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid bit string `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_puts_first_part_on_top() {
        let v = Bits::concat([Bits::new(1, 1), Bits::new(0b10, 2)]);
        assert_eq!(v, Bits::new(0b110, 3));
        assert_eq!(v.to_binary(), "110");
    }

    #[test]
    fn binary_round_trip() {
        let b = Bits::parse_binary("1111_0000").unwrap();
        assert_eq!(b.width(), 8);
        assert_eq!(b.value(), 0xf0);
        assert_eq!(Bits::parse_binary(&b.to_binary()), Some(b));
        assert_eq!(Bits::parse_binary("102"), None);
    }

    #[test]
    fn truncates_to_width() {
        assert_eq!(Bits::new(0xff, 4).value(), 0xf);
        assert_eq!(Bits::new(5, 3).slice(1, 2), Bits::new(2, 2));
        assert_eq!(Bits::new(1, 1).to_verilog(), "1'b1");
    }
}
