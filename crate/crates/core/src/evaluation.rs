//! Answer extraction and grading, per-style accuracy, and the style
//! sensitivity index (SSI).

use std::collections::{BTreeMap, HashMap, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::{AccuracyCell, Problem, ResponseRecord, StyleId};
use crate::order_free_sum;

const MARKER: &str = "answer:";

/// The committed answer in a response: the first non-empty line after the
/// last `Answer:` marker, or the last non-empty line when there is no marker.
pub fn extract_answer(response_text: &str) -> String {
    let lowered = response_text.to_ascii_lowercase();
    match lowered.rfind(MARKER) {
        Some(pos) => response_text[pos + MARKER.len()..]
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_owned(),
        None => response_text
            .lines()
            .map(str::trim)
            .rfind(|l| !l.is_empty())
            .unwrap_or("")
            .to_owned(),
    }
}

/// Canonical form for exact-match grading. Idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let mut current = raw.to_owned();
    // each pass only shortens or lowercases, so this settles quickly
    for _ in 0..32 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_once(raw: &str) -> String {
    let mut s = raw.trim();
    while s.len() >= 2 && s.starts_with('$') && s.ends_with('$') {
        s = s[1..s.len() - 1].trim();
    }
    let s = unwrap_boxed(s).unwrap_or(s).trim();
    let s = remove_thousands_separators(s);
    let s = s.strip_suffix('.').unwrap_or(&s);
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content of the last `\boxed{...}` with balanced braces.
fn unwrap_boxed(s: &str) -> Option<&str> {
    const OPEN: &str = "\\boxed{";
    let start = s.rfind(OPEN)? + OPEN.len();
    let mut depth = 1usize;
    for (i, c) in s[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[start..start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn remove_thousands_separators(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ',' && i > 0 && chars[i - 1].is_ascii_digit() {
            let group = chars.get(i + 1..i + 4);
            let after = chars.get(i + 4);
            if group.is_some_and(|g| g.iter().all(char::is_ascii_digit))
                && !after.is_some_and(char::is_ascii_digit)
            {
                continue;
            }
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatch {
    #[default]
    Exact,
    /// Exact match, or both sides parse to the same rational number.
    Rational,
}

/// Parses integers, decimals, `a/b` and `\frac{a}{b}` (optionally signed).
pub fn parse_rational(normalized: &str) -> Option<Ratio<i128>> {
    let s = normalized.trim();
    if let Some(body) = s.strip_prefix("\\frac{").or_else(|| s.strip_prefix("\\dfrac{")) {
        let (num, rest) = body.split_once("}{")?;
        let den = rest.strip_suffix('}')?;
        return ratio(parse_decimal(num)?, parse_decimal(den)?);
    }
    if let Some(body) = s.strip_prefix("-\\frac{") {
        return parse_rational(&format!("\\frac{{{body}")).map(|r| -r);
    }
    match s.split_once('/') {
        Some((num, den)) => ratio(parse_decimal(num)?, parse_decimal(den)?),
        None => parse_decimal(s),
    }
}

fn ratio(num: Ratio<i128>, den: Ratio<i128>) -> Option<Ratio<i128>> {
    if *den.numer() == 0 {
        None
    } else {
        Some(num / den)
    }
}

fn parse_decimal(s: &str) -> Option<Ratio<i128>> {
    let s = s.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) || frac_part.len() > 30 {
        return None;
    }
    let numer: i128 = format!("{int_part}{frac_part}").parse().ok()?;
    let denom = 10i128.checked_pow(frac_part.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if negative { -r } else { r })
}

pub fn answers_match(predicted: &str, gold: &str, mode: AnswerMatch) -> bool {
    let p = normalize_answer(predicted);
    let g = normalize_answer(gold);
    if p == g {
        return true;
    }
    match mode {
        AnswerMatch::Exact => false,
        AnswerMatch::Rational => matches!(
            (parse_rational(&p), parse_rational(&g)),
            (Some(a), Some(b)) if a == b
        ),
    }
}

pub fn is_correct(response_text: &str, gold: &str, mode: AnswerMatch) -> bool {
    answers_match(&extract_answer(response_text), gold, mode)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("response refers to unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("more than one response for problem {problem_id:?} style {style}; filter by decoding first")]
    DuplicateResponse { problem_id: String, style: StyleId },
    #[error("accuracy {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("mean accuracy is zero, SSI undefined")]
    ZeroMean,
}

/// Accuracy per style for one model on one benchmark. Cells keep full precision.
pub fn accuracy_by_style(
    responses: &[ResponseRecord],
    problems: &[Problem],
    model: &str,
    benchmark: &str,
    mode: AnswerMatch,
) -> Result<Vec<AccuracyCell>, EvalError> {
    let gold: HashMap<&str, &str> = problems
        .iter()
        .map(|p| (p.id.as_str(), p.gold_answer.as_str()))
        .collect();
    let mut seen = HashSet::new();
    let mut tallies: BTreeMap<StyleId, (usize, usize)> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.model == model) {
        let answer = gold
            .get(r.problem_id.as_str())
            .ok_or_else(|| EvalError::UnknownProblem(r.problem_id.clone()))?;
        if !seen.insert((r.problem_id.as_str(), r.style)) {
            return Err(EvalError::DuplicateResponse {
                problem_id: r.problem_id.clone(),
                style: r.style,
            });
        }
        let tally = tallies.entry(r.style).or_default();
        tally.1 += 1;
        if is_correct(&r.text, answer, mode) {
            tally.0 += 1;
        }
    }
    for style in StyleId::ALL {
        if !tallies.contains_key(&style) {
            log::warn!("{model}/{benchmark}: no responses for style {style}");
        }
    }
    Ok(tallies
        .into_iter()
        .map(|(style, (correct, n))| AccuracyCell {
            model: model.to_owned(),
            benchmark: benchmark.to_owned(),
            style,
            accuracy: 100.0 * correct as f64 / n as f64,
            n,
        })
        .collect())
}

/// Reporting precision for accuracies.
pub fn round_one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Accuracies (percent) under the four styles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsiInput(pub [f64; 4]);

impl SsiInput {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self.0.iter().find(|a| !(0.0..=100.0).contains(*a)) {
            Some(&bad) => Err(EvalError::OutOfRange(bad)),
            None => Ok(()),
        }
    }

    /// Values in [`StyleId::ALL`] order from a model/benchmark's cells.
    pub fn from_cells<'a>(cells: impl IntoIterator<Item = &'a AccuracyCell>) -> Option<Self> {
        let mut values = [None; 4];
        for c in cells {
            let slot = StyleId::ALL.iter().position(|s| *s == c.style)?;
            values[slot] = Some(c.accuracy);
        }
        Some(SsiInput([values[0]?, values[1]?, values[2]?, values[3]?]))
    }
}

/// `5·σ/μ + 0.05·(max − min)` with the population standard deviation.
pub fn ssi(input: &SsiInput) -> Result<f64, EvalError> {
    input.validate()?;
    let v = input.0;
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    if max == 0.0 {
        return Err(EvalError::ZeroMean);
    }
    if max == min {
        return Ok(0.0);
    }
    let mean = order_free_sum(v) / 4.0;
    let variance = order_free_sum(v.iter().map(|x| (x - mean) * (x - mean))) / 4.0;
    Ok(5.0 * variance.sqrt() / mean + 0.05 * (max - min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DecodingConfig;
    use proptest::prelude::*;

    #[test]
    fn extraction() {
        assert_eq!(extract_answer("Solution: ...\nAnswer: 42"), "42");
        assert_eq!(extract_answer("Answer: 1\nmore work\nANSWER: 2"), "2");
        assert_eq!(extract_answer("work...\n7"), "7");
        assert_eq!(extract_answer("work\nAnswer:\n\n  9  \nafter"), "9");
        assert_eq!(extract_answer(""), "");
        assert_eq!(extract_answer("Answer:"), "");
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer(" 1,234."), "1234");
        assert_eq!(normalize_answer("\\boxed{7/2}"), "7/2");
        assert_eq!(normalize_answer("East"), "east");
        assert_eq!(normalize_answer("$\\boxed{\\frac{1}{2}}$"), "\\frac{1}{2}");
        assert_eq!(normalize_answer("  (A)   Blue  sky "), "(a) blue sky");
        assert_eq!(normalize_answer("1,2"), "1,2");
        assert_eq!(normalize_answer("12,345,678"), "12345678");
        assert_eq!(normalize_answer("3.5"), "3.5");
    }

    #[test]
    fn rational_mode() {
        assert!(!answers_match("0.5", "1/2", AnswerMatch::Exact));
        assert!(answers_match("0.5", "1/2", AnswerMatch::Rational));
        assert!(answers_match("\\frac{6}{4}", "$1.5$", AnswerMatch::Rational));
        assert!(answers_match("-\\frac{1}{4}", "-0.25", AnswerMatch::Rational));
        assert!(!answers_match("1/0", "0", AnswerMatch::Rational));
        assert!(!answers_match("x", "1", AnswerMatch::Rational));
    }

    fn response(problem: &str, style: StyleId, text: &str) -> ResponseRecord {
        ResponseRecord {
            problem_id: problem.into(),
            style,
            model: "m".into(),
            decoding: DecodingConfig::greedy(),
            text: text.into(),
            created_at: "2025-01-01T00:00:00Z".into(),
            error: None,
        }
    }

    fn problems(n: usize) -> Vec<Problem> {
        (0..n)
            .map(|i| Problem {
                id: format!("p{i}"),
                question: "q".into(),
                gold_answer: i.to_string(),
            })
            .collect()
    }

    #[test]
    fn accuracy_cells() {
        let probs = problems(30);
        let mut resp: Vec<_> = (0..30)
            .map(|i| {
                let text = if i < 2 { format!("Answer: {i}") } else { "Answer: wrong".into() };
                response(&format!("p{i}"), StyleId::Imperative, &text)
            })
            .collect();
        resp.push(response("p0", StyleId::Declarative, "Answer: 0"));
        let cells = accuracy_by_style(&resp, &probs, "m", "AIME", AnswerMatch::Exact).unwrap();
        assert_eq!(cells.len(), 2);
        let imp = cells.iter().find(|c| c.style == StyleId::Imperative).unwrap();
        assert_eq!((imp.n, round_one_decimal(imp.accuracy)), (30, 6.7));
        assert_eq!(cells.iter().find(|c| c.style == StyleId::Declarative).unwrap().accuracy, 100.0);

        let mut reversed = resp.clone();
        reversed.reverse();
        assert_eq!(accuracy_by_style(&reversed, &probs, "m", "AIME", AnswerMatch::Exact).unwrap(), cells);

        resp.push(response("nope", StyleId::Imperative, ""));
        assert_eq!(
            accuracy_by_style(&resp, &probs, "m", "AIME", AnswerMatch::Exact),
            Err(EvalError::UnknownProblem("nope".into()))
        );
    }

    #[test]
    fn duplicates_are_rejected() {
        let r = response("p0", StyleId::Imperative, "Answer: 0");
        let err = accuracy_by_style(&[r.clone(), r], &problems(1), "m", "b", AnswerMatch::Exact);
        assert!(matches!(err, Err(EvalError::DuplicateResponse { .. })));
    }

    #[test]
    fn ssi_examples() {
        let v = ssi(&SsiInput([6.7, 10.0, 6.7, 3.3])).unwrap();
        assert!((v - 2.11).abs() <= 0.01, "{v}");
        let v = ssi(&SsiInput([3.3, 0.0, 6.7, 10.0])).unwrap();
        assert!((v - 4.23).abs() <= 0.01, "{v}");
        assert_eq!(ssi(&SsiInput([50.0; 4])).unwrap(), 0.0);
        assert_eq!(ssi(&SsiInput([0.0; 4])), Err(EvalError::ZeroMean));
        assert!(matches!(ssi(&SsiInput([0.0, 0.0, 0.0, 101.0])), Err(EvalError::OutOfRange(_))));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ $\\\\{}a-zA-Z0-9,.]{0,24}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn ssi_permutation_invariant(v in prop::array::uniform4(0.0f64..=100.0), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
            prop_assume!(v.iter().any(|x| *x > 0.0));
            let shuffled = [v[perm[0]], v[perm[1]], v[perm[2]], v[perm[3]]];
            let a = ssi(&SsiInput(v)).unwrap();
            let b = ssi(&SsiInput(shuffled)).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a >= 0.0);
            let all_equal = v.iter().all(|x| *x == v[0]);
            prop_assert_eq!(a == 0.0, all_equal);
        }
    }
}
