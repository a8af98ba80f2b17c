//! Small generated corpora for smoke tests, benchmarks and experiments.
//!
//! Every dialogue has two turns. Speaker A mentions how they feel about some
//! topic; the feeling word is one of several cues for a hidden intent, and
//! the intent alone picks the shape of B's reply. The gold instruction for
//! B's turn names that intent.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    expand_examples, save_dialogues, save_triplets, CorpusError, Dialogue, InstructionTriplet, LabeledExample, Speaker,
    Turn,
};
use crate::taskformat::serialize_context;

pub struct Intent {
    pub instruction: &'static str,
    pub cues: [&'static str; 3],
    /// Reply with `{}` standing for the topic.
    pub template: &'static str,
}

pub const INTENTS: [Intent; 4] = [
    Intent {
        instruction: "suggest an activity to the user",
        cues: ["bored", "restless", "idle"],
        template: "why not try some {} this weekend ?",
    },
    Intent {
        instruction: "comfort the user",
        cues: ["sad", "upset", "lonely"],
        template: "i am sorry , the {} will get better soon .",
    },
    Intent {
        instruction: "congratulate the user",
        cues: ["proud", "thrilled", "delighted"],
        template: "well done , the {} was worth it !",
    },
    Intent {
        instruction: "ask the user for details",
        cues: ["curious", "unsure", "puzzled"],
        template: "what exactly about the {} do you mean ?",
    },
];

pub const TOPICS: [&str; 12] = [
    "exam",
    "garden",
    "concert",
    "match",
    "project",
    "trip",
    "interview",
    "recipe",
    "painting",
    "race",
    "movie",
    "book",
];

const OPENERS: [&str; 8] = ["well", "honestly", "you know", "to be fair", "so anyway", "listen", "oh dear", "right"];

/// Dialogues with their gold instructions, aligned with
/// [`expand_examples`] order (one example per dialogue).
#[derive(Debug, Clone)]
pub struct IntentCorpus {
    pub dialogues: Vec<Dialogue>,
    pub instructions: Vec<String>,
}

impl IntentCorpus {
    pub fn labeled(&self) -> Vec<LabeledExample> {
        expand_examples(&self.dialogues)
            .into_iter()
            .zip(&self.instructions)
            .map(|(example, i)| LabeledExample { example, instruction: i.clone() })
            .collect()
    }

    /// The same examples as instruction-generator triplets, with the
    /// serialized context as input and the reply as output.
    pub fn triplets(&self) -> Vec<InstructionTriplet> {
        self.labeled()
            .into_iter()
            .map(|l| InstructionTriplet {
                instruction: l.instruction,
                input: serialize_context(&l.example.context),
                output: l.example.response,
            })
            .collect()
    }
}

/// `n` dialogues drawn with a generator seeded by `seed`; ids are
/// `{prefix}-{i}`.
pub fn intent_corpus(n: usize, seed: u64, prefix: &str) -> IntentCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogues = Vec::with_capacity(n);
    let mut instructions = Vec::with_capacity(n);
    for i in 0..n {
        let intent = INTENTS.choose(&mut rng).expect("non-empty");
        let cue = intent.cues.choose(&mut rng).expect("non-empty");
        let topic = TOPICS.choose(&mut rng).expect("non-empty");
        let opener = OPENERS.choose(&mut rng).expect("non-empty");
        dialogues.push(Dialogue {
            id: format!("{prefix}-{i}"),
            persona: Vec::new(),
            turns: vec![
                Turn::new(Speaker::A, format!("{opener} , i feel {cue} about the {topic} .")),
                Turn::new(Speaker::B, intent.template.replace("{}", topic)),
            ],
        });
        instructions.push(intent.instruction.to_string());
    }
    IntentCorpus { dialogues, instructions }
}

/// Every text a vocabulary for these corpora needs.
pub fn all_texts() -> Vec<String> {
    let mut texts: Vec<String> = OPENERS.iter().map(|s| s.to_string()).collect();
    for intent in &INTENTS {
        texts.push(intent.instruction.to_string());
        texts.extend(intent.cues.iter().map(|c| format!("i feel {c} about the")));
        texts.push(intent.template.to_string());
    }
    texts.extend(TOPICS.iter().map(|s| s.to_string()));
    texts
}

/// Write `dialogues.jsonl` (`train` dialogues), `test_dialogues.jsonl`
/// (`test`) and `triplets.jsonl` (`triplets`) into `dir`, each drawn from
/// its own generator derived from `seed`.
pub fn write_toy_data(dir: &Path, train: usize, test: usize, triplets: usize, seed: u64) -> Result<(), CorpusError> {
    let mix = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
    save_dialogues(&dir.join("dialogues.jsonl"), &intent_corpus(train, mix(1), "train").dialogues)?;
    save_dialogues(&dir.join("test_dialogues.jsonl"), &intent_corpus(test, mix(2), "test").dialogues)?;
    save_triplets(&dir.join("triplets.jsonl"), &intent_corpus(triplets, mix(3), "instr").triplets())
}
