//! Instruction-style strings and prompt assembly.

use crate::corpus::{Problem, PromptRecord, StyleId};
use crate::textproc::tokenize;

pub const DECLARATIVE: &str =
    "The problem should be solved step by step. The answer is to be suggested in the following format.";
pub const INTERROGATIVE: &str =
    "Could you solve the problem step by step? Would you suggest the answer in the following format?";
pub const EXCLAMATIVE: &str = "How important it is to solve the problem step by step! \
What a necessity it is to suggest the answer in the following format!";
pub const IMPERATIVE: &str = "Solve the problem step by step. Suggest the answer in the following format.";

pub const SOLUTION_SCAFFOLD: &str = "Solution: [explanation]";
pub const ANSWER_SCAFFOLD: &str = "Answer: [answer]";

pub fn style_instruction(style: StyleId) -> &'static str {
    match style {
        StyleId::Declarative => DECLARATIVE,
        StyleId::Interrogative => INTERROGATIVE,
        StyleId::Exclamative => EXCLAMATIVE,
        StyleId::Imperative => IMPERATIVE,
    }
}

pub fn build_prompt(problem: &Problem, style: StyleId) -> PromptRecord {
    if problem.question.is_empty() {
        log::warn!("problem {} has an empty question", problem.id);
    }
    let prompt = format!(
        "{}\n\n{}\n{}\n{}",
        problem.question,
        style_instruction(style),
        SOLUTION_SCAFFOLD,
        ANSWER_SCAFFOLD
    );
    PromptRecord {
        problem_id: problem.id.clone(),
        style,
        prompt,
    }
}

/// Prompts for every problem under every style, problem-major.
pub fn build_prompts(problems: &[Problem]) -> Vec<PromptRecord> {
    problems
        .iter()
        .flat_map(|p| StyleId::ALL.into_iter().map(move |s| build_prompt(p, s)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("text has no tokens")]
pub struct NoTokens;

pub fn type_token_ratio(text: &str) -> Result<f64, NoTokens> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(NoTokens);
    }
    let distinct: std::collections::BTreeSet<_> = tokens.iter().collect();
    Ok(distinct.len() as f64 / tokens.len() as f64)
}
