use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PromptRequest, QueryError, Responder};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Answer a uniformly chosen wrong letter.
    #[default]
    UniformWrongChoice,
    /// Answer something that does not parse as a letter.
    Invalid,
}

/// Answers correctly with probability `success_rate`, independently per
/// `(seed, prompt_hash)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MockOracle {
    pub success_rate: f64,
    pub seed: u64,
    pub on_failure: FailureMode,
    name: String,
}

impl MockOracle {
    pub fn new(success_rate: f64, seed: u64, on_failure: FailureMode) -> Result<Self, QueryError> {
        if !(0.0..=1.0).contains(&success_rate) {
            return Err(QueryError::Config(format!(
                "mock success rate {success_rate} outside [0, 1]"
            )));
        }
        let failure = match on_failure {
            FailureMode::UniformWrongChoice => "wrong",
            FailureMode::Invalid => "invalid",
        };
        Ok(Self {
            success_rate,
            seed,
            on_failure,
            name: format!("mock-oracle(r={success_rate},seed={seed},fail={failure})"),
        })
    }

    /// Deterministic answer text for a request.
    pub fn answer(&self, req: &PromptRequest<'_>) -> String {
        let mut rng = rng_from(derive_seed(
            self.seed,
            &[b"mock-oracle", req.prompt_hash.as_bytes()],
        ));
        let correct = rng.gen::<f64>() < self.success_rate;
        let letter = |i: usize| req.alphabet.get(i).copied().unwrap_or('?');
        if correct {
            return format!("{}\nThe mock oracle knows this one.", letter(req.answer_index));
        }
        match self.on_failure {
            FailureMode::UniformWrongChoice if req.num_choices > 1 => {
                let mut pick = rng.gen_range(0..req.num_choices - 1);
                if pick >= req.answer_index {
                    pick += 1;
                }
                format!("{}\nThe mock oracle guessed.", letter(pick))
            }
            _ => "I am unable to determine the answer.".to_string(),
        }
    }
}

impl Responder for MockOracle {
    fn model_name(&self) -> &str {
        &self.name
    }

    async fn respond(&self, request: &PromptRequest<'_>) -> Result<String, QueryError> {
        Ok(self.answer(request))
    }
}
