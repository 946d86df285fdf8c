//! Divergent answer-set generation.
//!
//! Every question with `A` choices expands into `2 + 6·(A−1)` variants laid out
//! in a fixed order:
//!
//! | family                    | count |
//! |---------------------------|-------|
//! | original                  | 1     |
//! | shuffled                  | 1     |
//! | with NOTA                 | A−1   |
//! | with NOTA, shuffled       | A−1   |
//! | decoupled                 | A−1   |
//! | decoupled, shuffled       | A−1   |
//! | decoupled + NOTA          | A−1   |
//! | decoupled + NOTA, shuffled| A−1   |
//!
//! The correct choice text is always kept. Shuffles never return the identity
//! permutation, which would duplicate an unshuffled variant.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{validate_question, MCQuestion};
use crate::seeding::{derive_seed, rng_from};

pub const DEFAULT_NOTA_TEXT: &str = "None of the above";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantMethod {
    Original,
    Shuffled,
    WithNota,
    WithNotaShuffled,
    Decoupled,
    DecoupledShuffled,
    DecoupledNota,
    DecoupledNotaShuffled,
}

impl VariantMethod {
    pub const ALL: [VariantMethod; 8] = [
        VariantMethod::Original,
        VariantMethod::Shuffled,
        VariantMethod::WithNota,
        VariantMethod::WithNotaShuffled,
        VariantMethod::Decoupled,
        VariantMethod::DecoupledShuffled,
        VariantMethod::DecoupledNota,
        VariantMethod::DecoupledNotaShuffled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantMethod::Original => "original",
            VariantMethod::Shuffled => "shuffled",
            VariantMethod::WithNota => "with_nota",
            VariantMethod::WithNotaShuffled => "with_nota_shuffled",
            VariantMethod::Decoupled => "decoupled",
            VariantMethod::DecoupledShuffled => "decoupled_shuffled",
            VariantMethod::DecoupledNota => "decoupled_nota",
            VariantMethod::DecoupledNotaShuffled => "decoupled_nota_shuffled",
        }
    }

    pub fn is_decoupled(self) -> bool {
        matches!(
            self,
            VariantMethod::Decoupled
                | VariantMethod::DecoupledShuffled
                | VariantMethod::DecoupledNota
                | VariantMethod::DecoupledNotaShuffled
        )
    }

    pub fn is_shuffled(self) -> bool {
        matches!(
            self,
            VariantMethod::Shuffled
                | VariantMethod::WithNotaShuffled
                | VariantMethod::DecoupledShuffled
                | VariantMethod::DecoupledNotaShuffled
        )
    }

    pub fn has_nota(self) -> bool {
        matches!(
            self,
            VariantMethod::WithNota
                | VariantMethod::WithNotaShuffled
                | VariantMethod::DecoupledNota
                | VariantMethod::DecoupledNotaShuffled
        )
    }

    /// Methods that keep the parent's choice count.
    pub fn keeps_cardinality(self) -> bool {
        !self.is_decoupled()
    }

    /// Number of variants this family contributes for a parent with `a` choices.
    pub fn family_size(self, a: usize) -> usize {
        match self {
            VariantMethod::Original | VariantMethod::Shuffled => 1,
            _ => a - 1,
        }
    }

    /// Position of this family's first variant in the divergent-set layout.
    pub fn layout_offset(self, a: usize) -> usize {
        VariantMethod::ALL
            .iter()
            .take_while(|&&m| m != self)
            .map(|m| m.family_size(a))
            .sum()
    }
}

/// Where a NOTA replacement goes in the WithNota families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotaPlacement {
    /// NOTA takes the replaced distractor's slot.
    #[default]
    InPlace,
    /// The distractor is removed and NOTA is appended last.
    Appended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub nota_text: String,
    pub nota_placement: NotaPlacement,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            nota_text: DEFAULT_NOTA_TEXT.to_string(),
            nota_placement: NotaPlacement::InPlace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantQuestion {
    pub parent_id: String,
    pub variant_index: usize,
    pub method: VariantMethod,
    pub choices: Vec<String>,
    pub answer_index: usize,
    pub seed_used: u64,
}

impl VariantQuestion {
    pub fn correct_choice(&self) -> &str {
        &self.choices[self.answer_index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergentSet {
    pub parent_id: String,
    pub variants: Vec<VariantQuestion>,
}

impl DivergentSet {
    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VariationError {
    #[error("question {id:?} is not valid: {reason}")]
    InvalidQuestion { id: String, reason: String },
    #[error("question {id:?} already contains the NOTA text {nota:?} as a choice")]
    NotaConflict { id: String, nota: String },
    #[error("NOTA text is empty")]
    EmptyNota,
}

/// `2 + 6·(A−1)`.
pub fn divergent_set_size(a: usize) -> usize {
    2 + 6 * (a - 1)
}

/// `2 + 2·(A−1)`.
pub fn same_cardinality_size(a: usize) -> usize {
    2 + 2 * (a - 1)
}

/// Recovers `A` from a divergent-set length, if the length fits the count law.
pub fn choices_for_set_size(m: usize) -> Option<usize> {
    (m >= 8 && (m - 2) % 6 == 0).then(|| (m - 2) / 6 + 1)
}

/// Positions within a full divergent set of length `m` that
/// [`filter_same_cardinality`] keeps.
pub fn same_cardinality_columns(m: usize) -> Option<Vec<usize>> {
    let a = choices_for_set_size(m)?;
    Some(
        VariantMethod::ALL
            .iter()
            .filter(|method| method.keeps_cardinality())
            .flat_map(|method| {
                let start = method.layout_offset(a);
                start..start + method.family_size(a)
            })
            .collect(),
    )
}

fn variant_seed(parent_id: &str, method: VariantMethod, ordinal: usize, master: u64) -> u64 {
    derive_seed(
        master,
        &[
            parent_id.as_bytes(),
            method.name().as_bytes(),
            &(ordinal as u64).to_le_bytes(),
        ],
    )
}

/// Applies a seeded non-identity permutation, tracking the correct answer.
fn permute_non_identity(choices: &[String], answer: usize, seed: u64) -> (Vec<String>, usize) {
    let n = choices.len();
    let mut order: Vec<usize> = (0..n).collect();
    if n >= 2 {
        let mut rng = rng_from(seed);
        loop {
            order.shuffle(&mut rng);
            if order.iter().enumerate().any(|(i, &o)| i != o) {
                break;
            }
        }
    }
    let permuted = order.iter().map(|&o| choices[o].clone()).collect();
    let new_answer = order.iter().position(|&o| o == answer).expect("answer kept");
    (permuted, new_answer)
}

fn reshuffle(v: &VariantQuestion, method: VariantMethod, variant_index: usize, seed: u64) -> VariantQuestion {
    let (choices, answer_index) = permute_non_identity(&v.choices, v.answer_index, seed);
    VariantQuestion {
        parent_id: v.parent_id.clone(),
        variant_index,
        method,
        choices,
        answer_index,
        seed_used: seed,
    }
}

pub fn original_variant(q: &MCQuestion) -> VariantQuestion {
    VariantQuestion {
        parent_id: q.id.clone(),
        variant_index: 0,
        method: VariantMethod::Original,
        choices: q.choices.clone(),
        answer_index: q.answer_index,
        seed_used: 0,
    }
}

/// One non-identity shuffle of the full choice list, seeded directly by `seed`.
pub fn shuffle_variant(q: &MCQuestion, seed: u64) -> VariantQuestion {
    let a = q.num_choices();
    debug_assert!(a >= 2);
    let mut v = reshuffle(&original_variant(q), VariantMethod::Shuffled, 0, seed);
    v.variant_index = VariantMethod::Shuffled.layout_offset(a);
    v
}

/// Replaces each distractor in turn with `nota_text`, in its own slot.
pub fn nota_variants(q: &MCQuestion, nota_text: &str) -> Vec<VariantQuestion> {
    nota_variants_placed(q, nota_text, NotaPlacement::InPlace)
}

pub fn nota_variants_placed(
    q: &MCQuestion,
    nota_text: &str,
    placement: NotaPlacement,
) -> Vec<VariantQuestion> {
    let a = q.num_choices();
    let offset = VariantMethod::WithNota.layout_offset(a);
    q.distractor_indices()
        .enumerate()
        .map(|(ordinal, d)| {
            let (choices, answer_index) = match placement {
                NotaPlacement::InPlace => {
                    let mut c = q.choices.clone();
                    c[d] = nota_text.to_string();
                    (c, q.answer_index)
                }
                NotaPlacement::Appended => {
                    let mut c: Vec<String> = q
                        .choices
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != d)
                        .map(|(_, s)| s.clone())
                        .collect();
                    c.push(nota_text.to_string());
                    let answer = if d < q.answer_index {
                        q.answer_index - 1
                    } else {
                        q.answer_index
                    };
                    (c, answer)
                }
            };
            VariantQuestion {
                parent_id: q.id.clone(),
                variant_index: offset + ordinal,
                method: VariantMethod::WithNota,
                choices,
                answer_index,
                seed_used: 0,
            }
        })
        .collect()
}

pub fn nota_shuffled_variants(q: &MCQuestion, nota_text: &str, seed: u64) -> Vec<VariantQuestion> {
    nota_shuffled_variants_placed(q, nota_text, NotaPlacement::InPlace, seed)
}

pub fn nota_shuffled_variants_placed(
    q: &MCQuestion,
    nota_text: &str,
    placement: NotaPlacement,
    seed: u64,
) -> Vec<VariantQuestion> {
    shuffle_family(
        q,
        &nota_variants_placed(q, nota_text, placement),
        VariantMethod::WithNotaShuffled,
        seed,
    )
}

/// Pairs the correct choice with each distractor, keeping parent order within the pair.
pub fn decoupled_variants(q: &MCQuestion) -> Vec<VariantQuestion> {
    let a = q.num_choices();
    let offset = VariantMethod::Decoupled.layout_offset(a);
    q.distractor_indices()
        .enumerate()
        .map(|(ordinal, d)| {
            let (choices, answer_index) = if d < q.answer_index {
                (vec![q.choices[d].clone(), q.correct_choice().to_string()], 1)
            } else {
                (vec![q.correct_choice().to_string(), q.choices[d].clone()], 0)
            };
            VariantQuestion {
                parent_id: q.id.clone(),
                variant_index: offset + ordinal,
                method: VariantMethod::Decoupled,
                choices,
                answer_index,
                seed_used: 0,
            }
        })
        .collect()
}

pub fn decoupled_shuffled_variants(q: &MCQuestion, seed: u64) -> Vec<VariantQuestion> {
    shuffle_family(q, &decoupled_variants(q), VariantMethod::DecoupledShuffled, seed)
}

/// Decoupled pairs with `nota_text` appended as a third choice.
pub fn decoupled_nota_variants(q: &MCQuestion, nota_text: &str) -> Vec<VariantQuestion> {
    let a = q.num_choices();
    let offset = VariantMethod::DecoupledNota.layout_offset(a);
    decoupled_variants(q)
        .into_iter()
        .enumerate()
        .map(|(ordinal, mut v)| {
            v.choices.push(nota_text.to_string());
            v.method = VariantMethod::DecoupledNota;
            v.variant_index = offset + ordinal;
            v
        })
        .collect()
}

pub fn decoupled_nota_shuffled_variants(
    q: &MCQuestion,
    nota_text: &str,
    seed: u64,
) -> Vec<VariantQuestion> {
    shuffle_family(
        q,
        &decoupled_nota_variants(q, nota_text),
        VariantMethod::DecoupledNotaShuffled,
        seed,
    )
}

fn shuffle_family(
    q: &MCQuestion,
    base: &[VariantQuestion],
    method: VariantMethod,
    master: u64,
) -> Vec<VariantQuestion> {
    let offset = method.layout_offset(q.num_choices());
    base.iter()
        .enumerate()
        .map(|(ordinal, v)| {
            let seed = variant_seed(&q.id, method, ordinal, master);
            reshuffle(v, method, offset + ordinal, seed)
        })
        .collect()
}

fn check_question(q: &MCQuestion, nota_text: &str) -> Result<(), VariationError> {
    if let Some(v) = validate_question(q).first() {
        return Err(VariationError::InvalidQuestion {
            id: q.id.clone(),
            reason: v.to_string(),
        });
    }
    let nota = nota_text.trim();
    if nota.is_empty() {
        return Err(VariationError::EmptyNota);
    }
    if q.choices.iter().any(|c| c.trim() == nota) {
        return Err(VariationError::NotaConflict {
            id: q.id.clone(),
            nota: nota_text.to_string(),
        });
    }
    Ok(())
}

pub fn generate_divergent_set(
    q: &MCQuestion,
    seed: u64,
    nota_text: &str,
) -> Result<DivergentSet, VariationError> {
    generate_divergent_set_with(
        q,
        seed,
        &VariationConfig {
            nota_text: nota_text.to_string(),
            ..VariationConfig::default()
        },
    )
}

pub fn generate_divergent_set_with(
    q: &MCQuestion,
    seed: u64,
    cfg: &VariationConfig,
) -> Result<DivergentSet, VariationError> {
    let nota = cfg.nota_text.as_str();
    check_question(q, nota)?;
    let shuffle_seed = variant_seed(&q.id, VariantMethod::Shuffled, 0, seed);

    let mut variants = Vec::with_capacity(divergent_set_size(q.num_choices()));
    variants.push(original_variant(q));
    variants.push(shuffle_variant(q, shuffle_seed));
    variants.extend(nota_variants_placed(q, nota, cfg.nota_placement));
    variants.extend(nota_shuffled_variants_placed(q, nota, cfg.nota_placement, seed));
    variants.extend(decoupled_variants(q));
    variants.extend(decoupled_shuffled_variants(q, seed));
    variants.extend(decoupled_nota_variants(q, nota));
    variants.extend(decoupled_nota_shuffled_variants(q, nota, seed));
    debug_assert!(variants.iter().enumerate().all(|(i, v)| v.variant_index == i));

    Ok(DivergentSet {
        parent_id: q.id.clone(),
        variants,
    })
}

/// Keeps only the variants with the parent's own choice count:
/// original, shuffled, and both WithNota families.
pub fn filter_same_cardinality(ds: &DivergentSet, a: usize) -> DivergentSet {
    let variants: Vec<VariantQuestion> = ds
        .variants
        .iter()
        .filter(|v| v.method.keeps_cardinality())
        .cloned()
        .collect();
    debug_assert!(variants.iter().all(|v| v.choices.len() == a));
    DivergentSet {
        parent_id: ds.parent_id.clone(),
        variants,
    }
}
