//! Instruction-then-response inference over the four task cases.

use super::{beam_search, DecodeConfig, DecodeError, Seq2Seq};
use crate::corpus::{Context, DialogueExample};
use crate::taskformat::{case_source, format_instgen, TaskCase};
use crate::tokenizer::Vocabulary;

/// One generated turn. `instruction` is `None` when no instruction was
/// involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub instruction: Option<String>,
    pub response: String,
}

/// A model, its vocabulary and the settings shared by every decode.
pub struct Generator<'a, M: ?Sized> {
    pub model: &'a M,
    pub vocab: &'a Vocabulary,
    pub decode: DecodeConfig,
    pub max_src_len: usize,
}

impl<M: Seq2Seq + ?Sized> Generator<'_, M> {
    fn run(&self, source: &[u32]) -> Result<String, DecodeError> {
        let step = self.model.start(source)?;
        let ids = beam_search(step.as_ref(), &self.decode)?;
        Ok(self.vocab.decode(&ids)?)
    }

    /// Decode the target of `case` for `context`.
    pub fn decode_case(
        &self,
        case: TaskCase,
        context: &Context,
        instruction: Option<&str>,
        response: Option<&str>,
    ) -> Result<String, DecodeError> {
        let source = case_source(case, context, instruction, response, self.vocab, self.max_src_len)?;
        self.run(&source)
    }

    /// Response from the context alone (case 4).
    pub fn respond(&self, context: &Context) -> Result<String, DecodeError> {
        self.decode_case(TaskCase::RespFromContext, context, None, None)
    }

    /// Response under `instruction` (case 2), or from the context alone when
    /// the instruction is blank.
    pub fn respond_with(&self, context: &Context, instruction: &str) -> Result<String, DecodeError> {
        if instruction.trim().is_empty() {
            return self.respond(context);
        }
        self.decode_case(TaskCase::RespFromInstructionAndContext, context, Some(instruction), None)
    }

    /// Instruction and response decoded independently (cases 3 and 4).
    pub fn naive(&self, ex: &DialogueExample) -> Result<Generation, DecodeError> {
        let instruction = self.decode_case(TaskCase::InstrFromContext, &ex.context, None, None)?;
        let response = self.respond(&ex.context)?;
        Ok(Generation { instruction: Some(instruction), response })
    }

    /// Instruction from the context (case 3), then the response under it
    /// (case 2). A blank instruction falls back to case 4.
    pub fn iterative(&self, context: &Context) -> Result<Generation, DecodeError> {
        let instruction = self.decode_case(TaskCase::InstrFromContext, context, None, None)?;
        let response = self.respond_with(context, &instruction)?;
        Ok(Generation { instruction: Some(instruction), response })
    }

    /// Instruction from the context and the gold response (case 1), then
    /// the response under it (case 2).
    pub fn oracle(&self, ex: &DialogueExample) -> Result<Generation, DecodeError> {
        let instruction =
            self.decode_case(TaskCase::InstrFromContextAndResponse, &ex.context, None, Some(&ex.response))?;
        let response = self.respond_with(&ex.context, &instruction)?;
        Ok(Generation { instruction: Some(instruction), response })
    }

    /// Instruction for an `(x, y)` pair from an instruction-generator model.
    pub fn label(&self, x: &str, y: &str) -> Result<String, DecodeError> {
        let pair = format_instgen(x, y, None, self.vocab, self.max_src_len)?;
        self.run(&pair.source)
    }
}
