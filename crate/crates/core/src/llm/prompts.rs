//! Prompt builders. The instruction texts are fixed strings; the builders
//! only append the data each prompt carries.

use thiserror::Error;

use super::{ChatMessage, Role};
use crate::hdl::SourceUnit;

pub const SYSTEM_PROMPT: &str = "You are an expert in design verification for Verilog code. Given a Verilog RTL module, you will write a testbench to simulate it and try to cover all the possible state transitions. Please follow the below instructions while providing any response:
1. The testbench should start with module tb();
2. You will add $fsdbDumpfile, $fsdbDumpvars commands in the testbench at the start of the first initial block.
3. Please use apply_input() format to apply input sequences.
4. You should consider whether it requires an active or high reset from the RTL code provided.
5. At the end of test patterns add $finish.
";

pub const COVERAGE_FEEDBACK_HEAD: &str = "The above testbench provided doesn't cover all the transitions. This is the list of transitions that were expected but didn't happen:\n";

pub const COVERAGE_FEEDBACK_TAIL: &str = "Please consider the RTL Verilog code provided while providing the testbench and combine the test cases from the above response. You may have to reset a few times to cover certain transitions.\n";

pub const TRACE_SPEC_HEAD: &str = "We ran the simulation tool with the testbench, this is the value for the state register variable across the clock cycle, the sequence is provided serially starting from 0 till the simulation finishes. This also shows the transition at each clock cycle.\n";

pub const TRACE_SPEC_TAIL: &str = "Please use the design specification provided and find out if there is any mismatch between them. We are looking to see if any transitions are inconsistent with the design spec.\n";

pub const CHUNK_CHECK: &str = "Please use the design specification provided and find out if there is any mismatch between them. We are looking to see if any transitions are inconsistent with the design spec.";

pub const BITWISE_PROMPT: &str = "To simplify the mismatch detection, consider the provided input-output pair for each clock cycle. Start the detection process by focusing on one bit of output and check for correct values as the input patterns are applied, followed by checking on other bits of output as well.\n";

/// Follow-up sent when a generated testbench does not compile; the
/// diagnostics are appended verbatim after the head.
pub const COMPILE_FEEDBACK_HEAD: &str =
    "The testbench above does not compile. These are the errors reported by the simulator:\n";
pub const COMPILE_FEEDBACK_TAIL: &str = "Please fix them and provide the complete corrected testbench.\n";

/// Marker lines introducing the data sections, also used by the oracle to
/// read prompts back.
pub const SPEC_MARKER: &str = "Design specification:";
pub const CHUNK_DATA_MARKER: &str = "Clock cycles:";
pub const BIT_MARKER: &str = "Output bit in focus:";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("the uncovered transition list is empty")]
    EmptyUncoveredList,
    #[error("output bit `{0}` does not exist")]
    UnknownOutputBit(String),
}

/// System message: fixed instructions followed by the DUT source verbatim.
pub fn build_system_prompt(dut: &SourceUnit) -> ChatMessage {
    ChatMessage::new(Role::System, format!("{SYSTEM_PROMPT}\n{}", dut.text))
}

/// RTL text carried by a system message built by [`build_system_prompt`].
pub fn rtl_from_system_prompt(content: &str) -> Option<&str> {
    content.strip_prefix(SYSTEM_PROMPT)?.strip_prefix('\n')
}

pub fn build_coverage_feedback_prompt(uncovered: &[String]) -> Result<ChatMessage, PromptError> {
    if uncovered.is_empty() {
        return Err(PromptError::EmptyUncoveredList);
    }
    let mut text = String::from(COVERAGE_FEEDBACK_HEAD);
    for line in uncovered {
        text.push('"');
        text.push_str(line);
        text.push_str("\"\n");
    }
    text.push_str(COVERAGE_FEEDBACK_TAIL);
    Ok(ChatMessage::new(Role::User, text))
}

pub fn build_compile_feedback_prompt(diagnostics: &str) -> ChatMessage {
    let mut text = String::from(COMPILE_FEEDBACK_HEAD);
    text.push_str(diagnostics);
    if !diagnostics.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(COMPILE_FEEDBACK_TAIL);
    ChatMessage::new(Role::User, text)
}

/// System message for mismatch questions: the instructions and RTL of
/// [`build_system_prompt`] followed by the natural-language specification.
pub fn build_detection_system_prompt(dut_rtl: &str, spec: &str) -> ChatMessage {
    ChatMessage::new(
        Role::System,
        format!(
            "{SYSTEM_PROMPT}\n{}\n{SPEC_MARKER}\n{}\n",
            dut_rtl.trim_end(),
            spec.trim_end()
        ),
    )
}

/// Transition lines quoted in a coverage feedback message.
pub fn uncovered_from_feedback(content: &str) -> Vec<String> {
    content
        .lines()
        .filter_map(|l| l.strip_prefix('"')?.strip_suffix('"'))
        .filter(|l| l.starts_with("Transition from "))
        .map(String::from)
        .collect()
}

pub fn build_trace_spec_prompt(state_seq: &str, spec: &str) -> ChatMessage {
    let text = format!(
        "{TRACE_SPEC_HEAD}\"{state_seq}\"\n{TRACE_SPEC_TAIL}\n{SPEC_MARKER}\n{}\n",
        spec.trim_end()
    );
    ChatMessage::new(Role::User, text)
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// One window of a chunked trace. `pairs` holds one line per cycle; the
/// stated window size is the number of lines, so a short final chunk is
/// described truthfully.
pub fn build_chunk_prompt(chunk_index: usize, chunk_size: usize, pairs: &str, carry_reminder: bool) -> ChatMessage {
    let n = pairs.lines().count();
    let which = if chunk_index == 0 { "first" } else { "next" };
    let mut text = format!("This is the input-output pair for the {which} {n} clock cycles. {CHUNK_CHECK}");
    text.push_str(&format!(
        " This will be followed up with the next {chunk_size} clock cycles and so on."
    ));
    if carry_reminder {
        text.push_str(&format!(
            " After every {} clock cycle please remember the current state which is very important when we provide new {chunk_size} input-output pairs.",
            ordinal(chunk_size)
        ));
    }
    text.push('\n');
    text.push_str(&format!("\n{CHUNK_DATA_MARKER}\n{pairs}"));
    if !pairs.ends_with('\n') {
        text.push('\n');
    }
    ChatMessage::new(Role::User, text)
}

/// Per-bit check. `outputs` lists the model's output bit names.
pub fn build_bitwise_prompt(output_bit: &str, outputs: &[String], pairs: &str) -> Result<ChatMessage, PromptError> {
    if !outputs.iter().any(|o| o == output_bit) {
        return Err(PromptError::UnknownOutputBit(output_bit.to_string()));
    }
    let mut text = format!("{BITWISE_PROMPT}\n{BIT_MARKER} {output_bit}\n{CHUNK_DATA_MARKER}\n{pairs}");
    if !pairs.ends_with('\n') {
        text.push('\n');
    }
    Ok(ChatMessage::new(Role::User, text))
}

/// Data lines following [`CHUNK_DATA_MARKER`] in a chunk or bitwise prompt.
pub fn data_lines(content: &str) -> Vec<&str> {
    match content.split_once(&format!("{CHUNK_DATA_MARKER}\n")) {
        Some((_, rest)) => rest.lines().filter(|l| !l.trim().is_empty()).collect(),
        None => Vec::new(),
    }
}

/// Output bit named by a bitwise prompt.
pub fn bit_from_prompt(content: &str) -> Option<&str> {
    content.lines().find_map(|l| l.strip_prefix(BIT_MARKER)).map(str::trim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::SourceKind;

    const G_SYSTEM: &str = include_str!("../../tests/golden/prompts/system_prefix.txt");
    const G_FEEDBACK: &str = include_str!("../../tests/golden/prompts/coverage_feedback.txt");
    const G_TRACE: &str = include_str!("../../tests/golden/prompts/trace_spec_prefix.txt");
    const G_CHUNK: &str = include_str!("../../tests/golden/prompts/chunk_first_prefix.txt");
    const G_BITWISE: &str = include_str!("../../tests/golden/prompts/bitwise_prefix.txt");

    #[test]
    fn system_prompt_golden() {
        let rtl = "module m(input clk);\nendmodule\n";
        let dut = SourceUnit::new("m.v", rtl, SourceKind::Rtl).unwrap();
        let msg = build_system_prompt(&dut);
        assert_eq!(msg.role, Role::System);
        assert_eq!(msg.content, format!("{G_SYSTEM}\n{rtl}"));
        assert_eq!(rtl_from_system_prompt(&msg.content), Some(rtl));
        let numbered = msg
            .content
            .lines()
            .filter(|l| l.len() > 2 && l.as_bytes()[0].is_ascii_digit() && &l[1..3] == ". ")
            .count();
        assert_eq!(numbered, 5);
    }

    #[test]
    fn coverage_feedback_golden() {
        let msg = build_coverage_feedback_prompt(&["Transition from A to B".to_string()]).unwrap();
        assert_eq!(msg.content, G_FEEDBACK);
        let many: Vec<String> = (0..20).map(|i| format!("Transition from S{i} to S0")).collect();
        let msg = build_coverage_feedback_prompt(&many).unwrap();
        assert_eq!(uncovered_from_feedback(&msg.content), many);
        assert_eq!(
            build_coverage_feedback_prompt(&[]),
            Err(PromptError::EmptyUncoveredList)
        );
    }

    #[test]
    fn trace_spec_golden() {
        let spec = "Write a Verilog module that detects a 1011 pattern.";
        let msg = build_trace_spec_prompt("S0 S1 S2 S3 S1 S5", spec);
        assert_eq!(msg.content, format!("{G_TRACE}\n{SPEC_MARKER}\n{spec}\n"));
    }

    #[test]
    fn chunk_prompt_golden() {
        let pairs: String = (0..10).map(|i| format!("cycle {i}: input=1 output=0\n")).collect();
        let msg = build_chunk_prompt(0, 10, &pairs, true);
        assert_eq!(msg.content, format!("{G_CHUNK}\n{CHUNK_DATA_MARKER}\n{pairs}"));
        let later = build_chunk_prompt(3, 10, &pairs, true);
        assert!(later
            .content
            .starts_with("This is the input-output pair for the next 10 clock cycles."));
        assert!(later.content.contains("please remember the current state"));
        let short = build_chunk_prompt(4, 10, "a\nb\nc\nd\n", false);
        assert!(short.content.contains("the next 4 clock cycles."));
        assert!(!short.content.contains("remember"));
        assert_eq!(data_lines(&short.content), ["a", "b", "c", "d"]);
        assert_eq!(ordinal(3), "3rd");
        assert_eq!(ordinal(11), "11th");
        assert_eq!(ordinal(22), "22nd");
    }

    #[test]
    fn bitwise_prompt_golden() {
        let outs = vec!["out1".to_string(), "out2".to_string()];
        let msg = build_bitwise_prompt("out1", &outs, "cycle 1: input=1 out1=0\n").unwrap();
        assert!(msg.content.starts_with(G_BITWISE));
        assert_eq!(bit_from_prompt(&msg.content), Some("out1"));
        assert!(!msg.content.contains("out2"));
        assert_eq!(
            build_bitwise_prompt("out3", &outs, ""),
            Err(PromptError::UnknownOutputBit("out3".into()))
        );
    }
}
