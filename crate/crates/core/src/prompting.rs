//! Prompt rendering and first-token answer parsing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::MCQuestion;
use crate::seeding::{derive_seed, rng_from};
use crate::variation::VariantQuestion;

pub const QUESTION_PLACEHOLDER: &str = "$QUESTION$";
pub const CHOICES_PLACEHOLDER: &str = "$CHOICES$";
/// Replaced by the letters actually in use for the prompted variant, e.g. `ABCDE`.
pub const LETTERS_PLACEHOLDER: &str = "$LETTERS$";

pub const DEFAULT_TEMPLATE: &str = "Answer the following multiple choice question. \n\
The first line of your response should be of \n\
the following format: 'LETTER' (without \n\
quotes), where LETTER is one of $LETTERS$ \n\
(depending on the number of alternatives), \n\
followed by a step-by-step explanation.\n\
\n\
Question: $QUESTION$\n\
Choices: $CHOICES$\n\
Answer:";

pub const DEFAULT_ALPHABET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template must contain {placeholder} exactly once (found {count})")]
    Placeholder {
        placeholder: &'static str,
        count: usize,
    },
    #[error("alphabet has {letters} letters but the variant has {choices} choices")]
    AlphabetExhausted { letters: usize, choices: usize },
    #[error("alphabet letters must be unique ASCII letters")]
    BadAlphabet,
    #[error("expected {expected} few-shot exemplars, got {got}")]
    ShotMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    template: String,
    alphabet: Vec<char>,
    pub shot_count: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.to_string(),
            alphabet: DEFAULT_ALPHABET.chars().collect(),
            shot_count: 0,
        }
    }
}

impl PromptConfig {
    pub fn new(template: impl Into<String>, alphabet: &str, shot_count: usize) -> Result<Self, PromptError> {
        let template = template.into();
        for placeholder in [QUESTION_PLACEHOLDER, CHOICES_PLACEHOLDER] {
            let count = template.matches(placeholder).count();
            if count != 1 {
                return Err(PromptError::Placeholder { placeholder, count });
            }
        }
        let alphabet: Vec<char> = alphabet.chars().map(|c| c.to_ascii_uppercase()).collect();
        let mut seen = alphabet.clone();
        seen.sort_unstable();
        seen.dedup();
        if alphabet.is_empty()
            || seen.len() != alphabet.len()
            || !alphabet.iter().all(char::is_ascii_alphabetic)
        {
            return Err(PromptError::BadAlphabet);
        }
        Ok(Self {
            template,
            alphabet,
            shot_count,
        })
    }

    pub fn with_shots(mut self, shot_count: usize) -> Self {
        self.shot_count = shot_count;
        self
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn letter(&self, index: usize) -> Option<char> {
        self.alphabet.get(index).copied()
    }

    fn letters_for(&self, n: usize) -> Result<&[char], PromptError> {
        self.alphabet
            .get(..n)
            .ok_or(PromptError::AlphabetExhausted {
                letters: self.alphabet.len(),
                choices: n,
            })
    }
}

/// `A. first\nB. second\n...`
pub fn render_choices(choices: &[String], cfg: &PromptConfig) -> Result<String, PromptError> {
    let letters = cfg.letters_for(choices.len())?;
    Ok(letters
        .iter()
        .zip(choices)
        .map(|(l, c)| format!("{l}. {c}"))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn fill_template(cfg: &PromptConfig, stem: &str, choices: &[String]) -> Result<String, PromptError> {
    let letters: String = cfg.letters_for(choices.len())?.iter().collect();
    let rendered = render_choices(choices, cfg)?;
    // Placeholders are substituted in a single pass so text inside the
    // question or choices is never re-interpreted as a placeholder.
    let mut out = String::with_capacity(cfg.template.len() + stem.len() + rendered.len());
    let mut rest = cfg.template.as_str();
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(t) = tail.strip_prefix(QUESTION_PLACEHOLDER) {
            out.push_str(stem);
            rest = t;
        } else if let Some(t) = tail.strip_prefix(CHOICES_PLACEHOLDER) {
            out.push_str(&rendered);
            rest = t;
        } else if let Some(t) = tail.strip_prefix(LETTERS_PLACEHOLDER) {
            out.push_str(&letters);
            rest = t;
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders the target variant, preceded by worked exemplars when `fewshot` is non-empty.
pub fn render_prompt(
    stem: &str,
    variant: &VariantQuestion,
    cfg: &PromptConfig,
    fewshot: &[(MCQuestion, char)],
) -> Result<String, PromptError> {
    if fewshot.len() != cfg.shot_count {
        return Err(PromptError::ShotMismatch {
            expected: cfg.shot_count,
            got: fewshot.len(),
        });
    }
    let mut blocks = Vec::with_capacity(fewshot.len() + 1);
    for (q, letter) in fewshot {
        blocks.push(format!(
            "Question: {}\nChoices: {}\nAnswer: {}",
            q.stem,
            render_choices(&q.choices, cfg)?,
            letter
        ));
    }
    blocks.push(fill_template(cfg, stem, &variant.choices)?);
    Ok(blocks.join("\n\n"))
}

/// Picks `cfg.shot_count` exemplars from the pool in a seeded order. The same
/// exemplars are used for every variant of every question in a run.
pub fn select_fewshot(
    pool: &[MCQuestion],
    cfg: &PromptConfig,
    seed: u64,
) -> Result<Vec<(MCQuestion, char)>, PromptError> {
    if cfg.shot_count == 0 {
        return Ok(Vec::new());
    }
    if pool.len() < cfg.shot_count {
        return Err(PromptError::ShotMismatch {
            expected: cfg.shot_count,
            got: pool.len(),
        });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, &[b"fewshot"])));
    order
        .into_iter()
        .take(cfg.shot_count)
        .map(|i| {
            let q = &pool[i];
            let letter = cfg.letters_for(q.num_choices())?[q.answer_index];
            Ok((q.clone(), letter))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum AnswerKind {
    Valid(usize),
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: AnswerKind,
    pub raw_first_token: String,
}

impl ParsedAnswer {
    pub fn index(&self) -> Option<usize> {
        match self.kind {
            AnswerKind::Valid(i) => Some(i),
            AnswerKind::Invalid => None,
        }
    }
}

/// Takes the first whitespace-delimited token of the response, strips
/// punctuation and uppercases it. A single letter among the first
/// `num_choices` letters of the alphabet is a valid answer.
pub fn parse_response(raw: &str, num_choices: usize, alphabet: &[char]) -> ParsedAnswer {
    let token = raw.split_whitespace().next().unwrap_or("");
    let cleaned: String = token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_uppercase)
        .collect();
    let mut chars = cleaned.chars();
    let kind = match (chars.next(), chars.next()) {
        (Some(c), None) => alphabet
            .iter()
            .take(num_choices)
            .position(|&l| l == c)
            .map_or(AnswerKind::Invalid, AnswerKind::Valid),
        _ => AnswerKind::Invalid,
    };
    ParsedAnswer {
        kind,
        raw_first_token: token.to_string(),
    }
}

/// Byte-level entry point; input that is not UTF-8 is an invalid answer.
pub fn parse_response_bytes(raw: &[u8], num_choices: usize, alphabet: &[char]) -> ParsedAnswer {
    match std::str::from_utf8(raw) {
        Ok(s) => parse_response(s, num_choices, alphabet),
        Err(_) => ParsedAnswer {
            kind: AnswerKind::Invalid,
            raw_first_token: String::new(),
        },
    }
}
