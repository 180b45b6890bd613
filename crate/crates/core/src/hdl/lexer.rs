//! Context-free tokenizer for the Verilog subset.

use std::fmt;

use super::{FrontendError, Loc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Keyword {
    Module,
    Endmodule,
    Input,
    Output,
    Inout,
    Reg,
    Wire,
    Integer,
    Parameter,
    Localparam,
    Assign,
    Always,
    Initial,
    Begin,
    End,
    If,
    Else,
    Case,
    Casez,
    Casex,
    Endcase,
    Default,
    Posedge,
    Negedge,
    Or,
    Task,
    Endtask,
    Function,
    Endfunction,
    For,
    Forever,
    Repeat,
    While,
    Generate,
    Endgenerate,
    Genvar,
    Signed,
    Logic,
    AlwaysFf,
    AlwaysComb,
    AlwaysLatch,
    Interface,
    Wait,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Keyword> {
        use Keyword::*;
        Some(match word {
            "module" => Module,
            "endmodule" => Endmodule,
            "input" => Input,
            "output" => Output,
            "inout" => Inout,
            "reg" => Reg,
            "wire" => Wire,
            "integer" => Integer,
            "parameter" => Parameter,
            "localparam" => Localparam,
            "assign" => Assign,
            "always" => Always,
            "initial" => Initial,
            "begin" => Begin,
            "end" => End,
            "if" => If,
            "else" => Else,
            "case" => Case,
            "casez" => Casez,
            "casex" => Casex,
            "endcase" => Endcase,
            "default" => Default,
            "posedge" => Posedge,
            "negedge" => Negedge,
            "or" => Or,
            "task" => Task,
            "endtask" => Endtask,
            "function" => Function,
            "endfunction" => Endfunction,
            "for" => For,
            "forever" => Forever,
            "repeat" => Repeat,
            "while" => While,
            "generate" => Generate,
            "endgenerate" => Endgenerate,
            "genvar" => Genvar,
            "signed" => Signed,
            "logic" => Logic,
            "always_ff" => AlwaysFf,
            "always_comb" => AlwaysComb,
            "always_latch" => AlwaysLatch,
            "interface" => Interface,
            "wait" => Wait,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use Keyword::*;
        match self {
            Module => "module",
            Endmodule => "endmodule",
            Input => "input",
            Output => "output",
            Inout => "inout",
            Reg => "reg",
            Wire => "wire",
            Integer => "integer",
            Parameter => "parameter",
            Localparam => "localparam",
            Assign => "assign",
            Always => "always",
            Initial => "initial",
            Begin => "begin",
            End => "end",
            If => "if",
            Else => "else",
            Case => "case",
            Casez => "casez",
            Casex => "casex",
            Endcase => "endcase",
            Default => "default",
            Posedge => "posedge",
            Negedge => "negedge",
            Or => "or",
            Task => "task",
            Endtask => "endtask",
            Function => "function",
            Endfunction => "endfunction",
            For => "for",
            Forever => "forever",
            Repeat => "repeat",
            While => "while",
            Generate => "generate",
            Endgenerate => "endgenerate",
            Genvar => "genvar",
            Signed => "signed",
            Logic => "logic",
            AlwaysFf => "always_ff",
            AlwaysComb => "always_comb",
            AlwaysLatch => "always_latch",
            Interface => "interface",
            Wait => "wait",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    /// `$finish`, `$fsdbDumpvars`, ...
    SystemIdent(String),
    /// Raw numeric literal text with underscores preserved, e.g. `8'b1111_0000`.
    Number(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Semi,
    Colon,
    Comma,
    Dot,
    Hash,
    At,
    Question,
    Op(&'static str),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "`{}`", k.as_str()),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::SystemIdent(s) => write!(f, "`{s}`"),
            TokenKind::Number(s) => write!(f, "number `{s}`"),
            TokenKind::Str(s) => write!(f, "string \"{s}\""),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::LBracket => f.write_str("`[`"),
            TokenKind::RBracket => f.write_str("`]`"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::Semi => f.write_str("`;`"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::Hash => f.write_str("`#`"),
            TokenKind::At => f.write_str("`@`"),
            TokenKind::Question => f.write_str("`?`"),
            TokenKind::Op(op) => write!(f, "`{op}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Loc,
}

// Longest first so that `<<<` wins over `<<` and `<`.
const OPERATORS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "~&", "~|", "~^", "^~", "&&", "||", "==", "!=", "<=", ">=", "<<", ">>", "+", "-", "*",
    "/", "%", "!", "~", "&", "|", "^", "<", ">", "=",
];

/// Splits `text` into tokens. Comments, whitespace and `` `timescale ``
/// directives are dropped.
pub fn tokenize(text: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! advance {
        ($n:expr) => {
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc::new(line, col);
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance!(2);
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                advance!(1);
            }
            if i >= chars.len() {
                return Err(lex_error(loc, "/*"));
            }
            advance!(2);
            continue;
        }
        if c == '`' {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[start + 1..j].iter().collect();
            if word == "timescale" {
                while i < chars.len() && chars[i] != '\n' {
                    advance!(1);
                }
                continue;
            }
            return Err(lex_error(loc, &format!("`{word}")));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                advance!(1);
            }
            let word: String = chars[start..i].iter().collect();
            let kind = match Keyword::from_word(&word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word),
            };
            tokens.push(Token { kind, loc });
            continue;
        }
        if c == '$' {
            let start = i;
            advance!(1);
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance!(1);
            }
            if i - start == 1 {
                return Err(lex_error(loc, "$"));
            }
            let word: String = chars[start..i].iter().collect();
            tokens.push(Token {
                kind: TokenKind::SystemIdent(word),
                loc,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '\'' && chars.get(i + 1).is_some_and(|n| is_base_char(*n))) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                advance!(1);
            }
            // Optional base part: 'b, 'h, 'd, 'o, with an optional sign marker.
            let mut j = i;
            while j < chars.len() && chars[j] == ' ' {
                j += 1;
            }
            if j < chars.len() && chars[j] == '\'' {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == 's' || chars[k] == 'S') {
                    k += 1;
                }
                if k < chars.len() && is_base_char(chars[k]) {
                    advance!(k + 1 - i);
                    while i < chars.len() && chars[i] == ' ' {
                        advance!(1);
                    }
                    while i < chars.len()
                        && (chars[i].is_ascii_hexdigit() || matches!(chars[i], '_' | 'x' | 'X' | 'z' | 'Z' | '?'))
                    {
                        advance!(1);
                    }
                }
            }
            let raw: String = chars[start..i].iter().filter(|c| **c != ' ').collect();
            tokens.push(Token {
                kind: TokenKind::Number(raw),
                loc,
            });
            continue;
        }
        if c == '"' {
            advance!(1);
            let start = i;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                if chars[i] == '\\' && i + 1 < chars.len() {
                    advance!(1);
                }
                advance!(1);
            }
            if i >= chars.len() || chars[i] != '"' {
                return Err(lex_error(loc, "\""));
            }
            let s: String = chars[start..i].iter().collect();
            advance!(1);
            tokens.push(Token {
                kind: TokenKind::Str(s),
                loc,
            });
            continue;
        }
        let simple = match c {
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            ';' => Some(TokenKind::Semi),
            ':' => Some(TokenKind::Colon),
            ',' => Some(TokenKind::Comma),
            '.' => Some(TokenKind::Dot),
            '#' => Some(TokenKind::Hash),
            '@' => Some(TokenKind::At),
            '?' => Some(TokenKind::Question),
            _ => None,
        };
        if let Some(kind) = simple {
            advance!(1);
            tokens.push(Token { kind, loc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            advance!(op.len());
            tokens.push(Token {
                kind: TokenKind::Op(op),
                loc,
            });
            continue;
        }
        let snippet: String = chars[i..chars.len().min(i + 12)]
            .iter()
            .take_while(|c| **c != '\n')
            .collect();
        return Err(lex_error(loc, &snippet));
    }
    Ok(tokens)
}

fn is_base_char(c: char) -> bool {
    matches!(c, 'b' | 'B' | 'h' | 'H' | 'd' | 'D' | 'o' | 'O')
}

fn lex_error(loc: Loc, snippet: &str) -> FrontendError {
    FrontendError::Lex {
        line: loc.line,
        column: loc.col,
        snippet: snippet.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn module_header() {
        assert_eq!(
            kinds("module tb();"),
            vec![
                TokenKind::Keyword(Keyword::Module),
                TokenKind::Ident("tb".into()),
                TokenKind::LParen,
                TokenKind::RParen,
                TokenKind::Semi,
            ]
        );
    }

    #[test]
    fn sized_numbers_are_single_tokens() {
        assert_eq!(
            kinds("8'b1111_1111 4'hF 'b0 10 2'sb01"),
            vec![
                TokenKind::Number("8'b1111_1111".into()),
                TokenKind::Number("4'hF".into()),
                TokenKind::Number("'b0".into()),
                TokenKind::Number("10".into()),
                TokenKind::Number("2'sb01".into()),
            ]
        );
    }

    #[test]
    fn bracket_imbalance_is_not_a_lex_error() {
        assert!(tokenize("reg [7:0 x;").is_ok());
    }

    #[test]
    fn comments_and_timescale_dropped() {
        let toks = kinds("`timescale 1ns/1ps\n// hi\n/* multi\nline */ x <= y;");
        assert_eq!(
            toks,
            vec![
                TokenKind::Ident("x".into()),
                TokenKind::Op("<="),
                TokenKind::Ident("y".into()),
                TokenKind::Semi,
            ]
        );
    }

    #[test]
    fn unrecognized_character_reports_location() {
        let err = tokenize("module m;\n  reg \\x;").unwrap_err();
        assert_eq!(
            err,
            FrontendError::Lex {
                line: 2,
                column: 7,
                snippet: "\\x;".into()
            }
        );
    }

    #[test]
    fn system_identifiers_and_strings() {
        assert_eq!(
            kinds("$fsdbDumpfile(\"test.fsdb\");"),
            vec![
                TokenKind::SystemIdent("$fsdbDumpfile".into()),
                TokenKind::LParen,
                TokenKind::Str("test.fsdb".into()),
                TokenKind::RParen,
                TokenKind::Semi,
            ]
        );
    }
}
