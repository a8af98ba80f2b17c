//! Line-oriented chat with the dialogue model.
//!
//! The user speaks as A and the model as B. Each model turn decodes an
//! instruction from the running context and then a response under it. Lines
//! starting with `/` are commands: `/reset` clears the context (persona
//! included), `/persona <text>` adds a persona line, `/quit` ends the
//! session.

use std::io::{BufRead, Write};

use super::{PipelineError, RunConfig};
use crate::corpus::{Context, Speaker, Turn};
use crate::decoding::{Generator, Seq2Seq};
use crate::training::load_checkpoint;

/// Conversation state over one model.
pub struct ChatSession<'a, M: ?Sized> {
    generator: Generator<'a, M>,
    context: Context,
}

fn io(source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: "<chat>".into(), source }
}

impl<'a, M: Seq2Seq + ?Sized> ChatSession<'a, M> {
    pub fn new(generator: Generator<'a, M>) -> Self {
        Self { generator, context: Context::default() }
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    /// Handle one input line. Returns false once the session should end.
    pub fn handle<W: Write>(&mut self, line: &str, out: &mut W) -> Result<bool, PipelineError> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(true);
        }
        if let Some(cmd) = line.strip_prefix('/') {
            let (name, arg) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
            match name {
                "quit" => {
                    writeln!(out, "bye").map_err(io)?;
                    return Ok(false);
                }
                "reset" => {
                    self.context = Context::default();
                    writeln!(out, "(context cleared)").map_err(io)?;
                }
                "persona" if !arg.trim().is_empty() => {
                    self.context.persona.push(arg.trim().to_string());
                    writeln!(out, "(persona: {})", self.context.persona.join(" | ")).map_err(io)?;
                }
                _ => writeln!(out, "commands: /persona <text>, /reset, /quit").map_err(io)?,
            }
            return Ok(true);
        }

        self.context.turns.push(Turn::new(Speaker::A, line));
        match self.generator.iterative(&self.context) {
            Ok(g) => {
                writeln!(out, "instruction: {}", g.instruction.unwrap_or_default()).map_err(io)?;
                writeln!(out, "response: {}", g.response).map_err(io)?;
                self.context.turns.push(Turn::new(Speaker::B, g.response));
            }
            Err(e) => {
                self.context.turns.pop();
                writeln!(out, "error: {e}").map_err(io)?;
            }
        }
        Ok(true)
    }

    /// Read lines until `/quit` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, out: &mut W) -> Result<(), PipelineError> {
        for line in input.lines() {
            if !self.handle(&line.map_err(io)?, out)? {
                break;
            }
            out.flush().map_err(io)?;
        }
        Ok(())
    }
}

/// Chat with the dialogue-model checkpoint named in `cfg`.
pub fn chat<R: BufRead, W: Write>(cfg: &RunConfig, input: R, out: &mut W) -> Result<(), PipelineError> {
    cfg.validate()?;
    let path = cfg.existing(&cfg.dialog_checkpoint, "dialogue-model checkpoint", "dialog_checkpoint")?;
    let ckpt = load_checkpoint(&path)?;
    writeln!(out, "chatting with {} (/persona <text>, /reset, /quit)", path.display()).map_err(io)?;
    let generator = Generator {
        model: &ckpt.params,
        vocab: &ckpt.vocab,
        decode: cfg.decode_config(),
        max_src_len: ckpt.train_config.max_src_len,
    };
    ChatSession::new(generator).run(input, out)
}
